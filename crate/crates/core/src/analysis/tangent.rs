use std::sync::Arc;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use super::singular::default_cluster_tol;
use crate::dirichlet::{build_disk_mesh, QFunction};
use crate::error::{Error, Result};
use crate::qpoint::{metric_g, sq_dist, QPoint};
use crate::selection::{decompose_circle, unroll, SampledQPath, Topology};

#[derive(Clone, Debug, PartialEq)]
pub struct BlowUpOptions {
    /// Ring count of the unit-disk mesh the blow-up is sampled on.
    pub resolution: usize,
    /// Largest admissible G(f(center), Q⟦0⟧); defaults to √Q times the
    /// default cluster tolerance.
    pub center_tol: Option<f64>,
}

impl Default for BlowUpOptions {
    fn default() -> Self {
        BlowUpOptions { resolution: 32, center_tol: None }
    }
}

/// f_ρ(x) = f(center + ρx) / √Dir, sampled on the unit disk and normalized
/// so that its discrete energy is 1.
pub fn blow_up(f: &QFunction, center: [f64; 2], rho: f64, opts: &BlowUpOptions) -> Result<QFunction> {
    if !(rho > 0.0) {
        return Err(Error::InvalidInput("rho must be positive".into()));
    }
    let (q, n) = (f.q(), f.n());
    let at_center = f.sample(center);
    let tol = opts.center_tol.unwrap_or_else(|| (q as f64).sqrt() * default_cluster_tol(f));
    let g0 = metric_g(&at_center, &QPoint::zero(q, n))?.0;
    if g0 > tol {
        return Err(Error::Precondition(format!("f(center) is at distance {g0} from Q[0] (tolerance {tol})")));
    }
    let unit = Arc::new(build_disk_mesh(1.0, opts.resolution)?);
    let values: Vec<QPoint> =
        unit.vertices().iter().map(|x| f.sample([center[0] + rho * x[0], center[1] + rho * x[1]])).collect();
    let mut g = QFunction::from_values(Arc::clone(&unit), &values)?;
    g.match_edges();
    let e = g.energy();
    if !(e > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let scale = e.sqrt().recip();
    for x in g.raw_values_mut() {
        *x *= scale;
    }
    Ok(g)
}

/// max over vertices of G(f(v), g(v)); both functions must share a mesh.
pub fn sup_distance(f: &QFunction, g: &QFunction) -> Result<f64> {
    if f.mesh().vertices() != g.mesh().vertices() {
        return Err(Error::InvalidInput("functions live on different meshes".into()));
    }
    let mut worst: f64 = 0.0;
    for v in 0..f.mesh().num_vertices() {
        worst = worst.max(metric_g(&f.value(v), &g.value(v))?.0);
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentPiece {
    pub k: usize,
    pub q_star: usize,
    pub n_star: usize,
    /// Rows are the images of 1 and i: ζ^{n*} = a + ib is sent to
    /// a·l[0] + b·l[1].
    pub l: [Vec<f64>; 2],
    pub residual: f64,
}

/// k0⟦0⟧ + Σ_j k_j Σ_{ζ^{Q*}=z} ⟦L_j ζ^{n*}⟧.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentModel {
    pub k0: usize,
    pub pieces: Vec<TangentPiece>,
    pub alpha: f64,
    /// Largest relative least-squares residual over the pieces.
    pub residual: f64,
    /// Smallest distance between values of distinct pieces (and 0 when
    /// k0 > 0) over the samples.
    pub support_gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangentFitOptions {
    /// Frequency estimate bounding the candidates n* ≤ ⌈αQ⌉ + 2; without it
    /// n* ≤ 2Q + 2.
    pub alpha_hint: Option<f64>,
    pub max_residual: f64,
    /// Pieces whose RMS is below this fraction of the trace RMS count as 0.
    pub zero_fraction: f64,
}

impl Default for TangentFitOptions {
    fn default() -> Self {
        TangentFitOptions { alpha_hint: None, max_residual: 0.05, zero_fraction: 0.05 }
    }
}

fn rms(points: impl Iterator<Item = f64>, count: usize) -> f64 {
    (points.sum::<f64>() / count.max(1) as f64).sqrt()
}

/// Least-squares L for h(φ) ≈ cos(sφ) l[0] + sin(sφ) l[1]; returns L and
/// the relative residual.
fn fit_mode(params: &[f64], points: &[Vec<f64>], s: f64) -> ([Vec<f64>; 2], f64) {
    let n = points[0].len();
    let (mut cc, mut ss, mut cs) = (0.0, 0.0, 0.0);
    let mut rc = vec![0.0; n];
    let mut rs = vec![0.0; n];
    for (phi, p) in params.iter().zip(points) {
        let (c, si) = ((s * phi).cos(), (s * phi).sin());
        cc += c * c;
        ss += si * si;
        cs += c * si;
        for d in 0..n {
            rc[d] += c * p[d];
            rs[d] += si * p[d];
        }
    }
    let det = cc * ss - cs * cs;
    let l0: Vec<f64> = (0..n).map(|d| (ss * rc[d] - cs * rs[d]) / det).collect();
    let l1: Vec<f64> = (0..n).map(|d| (cc * rs[d] - cs * rc[d]) / det).collect();
    let (mut res, mut norm) = (0.0, 0.0);
    for (phi, p) in params.iter().zip(points) {
        let (c, si) = ((s * phi).cos(), (s * phi).sin());
        for d in 0..n {
            res += (p[d] - c * l0[d] - si * l1[d]).powi(2);
            norm += p[d] * p[d];
        }
    }
    let rel = if norm > 0.0 { (res / norm).sqrt() } else { 0.0 };
    ([l0, l1], rel)
}

fn injective(l: &[Vec<f64>; 2]) -> bool {
    if l[0].len() < 2 {
        return true;
    }
    let g00: f64 = l[0].iter().map(|x| x * x).sum();
    let g11: f64 = l[1].iter().map(|x| x * x).sum();
    let g01: f64 = l[0].iter().zip(&l[1]).map(|(x, y)| x * y).sum();
    g00 * g11 - g01 * g01 > 1e-18 * (g00 + g11).powi(2)
}

/// Classifies a blow-up boundary trace as a homogeneous tangent map.
pub fn tangent_fit(g: &SampledQPath, q: usize, opts: &TangentFitOptions) -> Result<TangentModel> {
    if g.topology != Topology::Circle {
        return Err(Error::InvalidInput("tangent_fit needs a circle trace".into()));
    }
    if g.q() != q {
        return Err(Error::Dimension(format!("trace has q = {} but Q = {q}", g.q())));
    }
    let total_rms = rms(g.values.iter().map(QPoint::squared_norm), g.len() * q);
    if total_rms == 0.0 {
        return Err(Error::UnclassifiedTangent { residual: f64::INFINITY });
    }
    let eta = g
        .values
        .iter()
        .map(|v| v.barycenter().iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if eta > 0.1 * total_rms {
        return Err(Error::Precondition(format!("trace barycenter {eta} is not close to 0")));
    }
    let pieces = decompose_circle(g)?;
    let mut k0 = 0;
    let mut live = Vec::new();
    for p in pieces {
        let piece_rms = rms(p.path.values.iter().map(QPoint::squared_norm), p.path.len() * p.cycle_len());
        if piece_rms <= opts.zero_fraction * total_rms {
            k0 += p.multiplicity * p.cycle_len();
        } else {
            live.push(p);
        }
    }
    if live.is_empty() {
        return Err(Error::UnclassifiedTangent { residual: f64::INFINITY });
    }
    let q_star = live[0].cycle_len();
    if live.iter().any(|p| p.cycle_len() != q_star) {
        return Err(Error::UnclassifiedTangent { residual: f64::INFINITY });
    }
    let n_max = match opts.alpha_hint {
        Some(a) => (a * q as f64).ceil().max(0.0) as usize + 2,
        None => 2 * q + 2,
    };
    let unrolled = live.iter().map(|p| unroll(&p.path, q_star)).collect::<Result<Vec<_>>>()?;
    let mut best: Option<(f64, usize, Vec<TangentPiece>)> = None;
    for n_star in (1..=n_max).filter(|n| n.gcd(&q_star) == 1) {
        let s = n_star as f64 / q_star as f64;
        let mut fitted = Vec::new();
        let mut worst: f64 = 0.0;
        for (p, h) in live.iter().zip(&unrolled) {
            let (l, res) = fit_mode(&h.params, &h.points, s);
            worst = worst.max(res);
            fitted.push(TangentPiece { k: p.multiplicity, q_star, n_star, l, residual: res });
        }
        if best.as_ref().map_or(true, |b| worst < b.0) {
            best = Some((worst, n_star, fitted));
        }
    }
    let (residual, n_star, fitted) = best.ok_or(Error::UnclassifiedTangent { residual: f64::INFINITY })?;
    if residual > opts.max_residual || !fitted.iter().all(|p| injective(&p.l)) {
        return Err(Error::UnclassifiedTangent { residual });
    }
    // smallest gap between values of distinct pieces, zero included
    let zero = vec![0.0; g.n()];
    let mut gap = f64::INFINITY;
    for l in 0..g.len() {
        let mut tagged: Vec<(usize, &[f64])> = Vec::new();
        for (j, p) in live.iter().enumerate() {
            tagged.extend(p.path.values[l].points().map(|x| (j, x)));
        }
        if k0 > 0 {
            tagged.push((live.len(), &zero));
        }
        for (a, &(ja, x)) in tagged.iter().enumerate() {
            for &(jb, y) in &tagged[a + 1..] {
                if ja != jb {
                    gap = gap.min(sq_dist(x, y).sqrt());
                }
            }
        }
    }
    Ok(TangentModel {
        k0,
        pieces: fitted,
        alpha: n_star as f64 / q_star as f64,
        residual,
        support_gap: gap,
    })
}
