//! Alternating minimization: optimal edge matchings, then the harmonic
//! relaxation of the values on the lifted graph they define.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Mesh, QFunction};
use crate::embedding::{build_lambda, rho, xi};
use crate::error::{Error, Result};
use crate::qpoint::{metric_g, QPoint};
use crate::selection::SampledQPath;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// v + |x| (g(x/|x|) - v) with v the mean boundary barycenter.
    Cone,
    /// Harmonic extension of ξ∘g, projected back by ρ.
    EmbeddingHarmonic,
    /// The best result so far with seeded interior noise.
    Jitter,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Stop once an iteration lowers the energy by less than `tol` relative.
    pub tol: f64,
    pub max_iters: usize,
    /// Relative residual for the conjugate-gradient solves.
    pub cg_tol: f64,
    pub inits: Vec<InitKind>,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-9,
            max_iters: 500,
            cg_tol: 1e-12,
            inits: vec![InitKind::Cone, InitKind::EmbeddingHarmonic, InitKind::Jitter],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StartSummary {
    pub init: InitKind,
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SolveReport {
    /// Energy after each iteration of the kept start, starting with the
    /// matched initial guess.
    pub history: Vec<f64>,
    pub final_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest relative CG residual of each relaxation.
    pub residuals: Vec<f64>,
    pub starts: Vec<StartSummary>,
}

impl SolveReport {
    /// Per-iteration table with columns iteration,energy,residual.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,energy,residual\n");
        for (i, e) in self.history.iter().enumerate() {
            let r = if i == 0 { 0.0 } else { self.residuals.get(i - 1).copied().unwrap_or(0.0) };
            s.push_str(&format!("{i},{},{}\n", fmt17(*e), fmt17(r)));
        }
        s
    }
}

/// 17 significant digits, enough to round-trip an f64.
pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Sparse symmetric matrix in compressed rows.
struct Csr {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

const CHUNK: usize = 4096;

impl Csr {
    fn len(&self) -> usize {
        self.diag.len()
    }

    fn mul(&self, x: &[f64], y: &mut [f64]) {
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(c, ys)| {
            for (k, yi) in ys.iter_mut().enumerate() {
                let r = c * CHUNK + k;
                let mut acc = self.diag[r] * x[r];
                for idx in self.row_start[r]..self.row_start[r + 1] {
                    acc += self.vals[idx] * x[self.cols[idx]];
                }
                *yi = acc;
            }
        });
    }
}

/// Dot product with a reduction order independent of the thread count.
fn pdot(a: &[f64], b: &[f64]) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect();
    parts.iter().sum()
}

/// Jacobi-preconditioned conjugate gradients from the initial `x`. Returns
/// the final relative residual.
fn pcg(a: &Csr, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<f64> {
    let n = a.len();
    let bnorm = pdot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0.0);
    }
    let mut r = vec![0.0; n];
    a.mul(x, &mut r);
    r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z: Vec<f64> = r.iter().zip(&a.diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = pdot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = pdot(&r, &r).sqrt() / bnorm;
    for _ in 0..max_iter {
        if res <= tol {
            return Ok(res);
        }
        a.mul(&p, &mut ap);
        let pap = pdot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        z.par_iter_mut()
            .zip(&r)
            .zip(&a.diag)
            .for_each(|((zi, ri), d)| *zi = ri / d);
        let rz_new = pdot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        res = pdot(&r, &r).sqrt() / bnorm;
    }
    if res <= tol.max(1e-8) {
        Ok(res)
    } else {
        Err(Error::Solver(format!("conjugate gradients stalled at relative residual {res:e}")))
    }
}

/// The lifted graph Laplacian restricted to interior lifted nodes, plus the
/// coupling to the fixed boundary nodes.
struct Lifted {
    /// Position of each vertex among the interior vertices.
    slot: Vec<Option<usize>>,
    interior: Vec<usize>,
    a: Csr,
    /// (row, vertex, label, weight) couplings to fixed nodes.
    fixed: Vec<(usize, usize, usize, f64)>,
}

fn assemble(mesh: &Mesh, q: usize, follow: impl Fn(usize, usize, usize) -> usize) -> Lifted {
    let nv = mesh.num_vertices();
    let mut slot = vec![None; nv];
    let mut interior = Vec::new();
    for v in 0..nv {
        if !mesh.is_boundary(v) {
            slot[v] = Some(interior.len());
            interior.push(v);
        }
    }
    let rows = interior.len() * q;
    let mut row_start = Vec::with_capacity(rows + 1);
    row_start.push(0);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut diag = vec![0.0; rows];
    let mut fixed = Vec::new();
    for (s, &v) in interior.iter().enumerate() {
        for i in 0..q {
            let r = s * q + i;
            for &(w, e) in mesh.neighbors(v) {
                let wt = mesh.edges()[e].weight;
                let j = follow(v, w, i);
                diag[r] += wt;
                match slot[w] {
                    Some(sw) => {
                        cols.push(sw * q + j);
                        vals.push(-wt);
                    }
                    None => fixed.push((r, w, j, wt)),
                }
            }
            row_start.push(cols.len());
        }
    }
    Lifted { slot, interior, a: Csr { row_start, cols, vals, diag }, fixed }
}

/// Harmonic relaxation with the matchings held fixed: the interior values
/// solve the normal equations of the energy, boundary values are kept.
/// Returns the relaxed function and the largest relative CG residual.
pub fn relax_values(f: &QFunction, cg_tol: f64) -> Result<(QFunction, f64)> {
    let mesh = f.mesh();
    let q = f.q();
    let n = f.n();
    let lifted = assemble(mesh, q, |a, b, i| f.follow(a, b, i));
    if lifted.interior.is_empty() {
        return Ok((f.clone(), 0.0));
    }
    let rows = lifted.a.len();
    let max_iter = 20 * rows + 100;
    let solved: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|c| {
            let mut b = vec![0.0; rows];
            for &(r, w, j, wt) in &lifted.fixed {
                b[r] += wt * f.point(w, j)[c];
            }
            let mut x: Vec<f64> = (0..rows)
                .map(|r| f.point(lifted.interior[r / q], r % q)[c])
                .collect();
            let res = pcg(&lifted.a, &b, &mut x, cg_tol, max_iter)?;
            Ok((x, res))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = f.clone();
    let vals = out.raw_values_mut();
    let mut worst: f64 = 0.0;
    for (c, (x, res)) in solved.into_iter().enumerate() {
        worst = worst.max(res);
        for (r, xv) in x.into_iter().enumerate() {
            let v = lifted.interior[r / q];
            vals[(v * q + r % q) * n + c] = xv;
        }
    }
    Ok((out, worst))
}

/// Discrete harmonic extension of scalar boundary data (one column per
/// coordinate), returned per vertex.
fn harmonic_extension(mesh: &Mesh, boundary: &[Vec<f64>], cg_tol: f64) -> Result<Vec<Vec<f64>>> {
    let dim = boundary.first().map_or(0, Vec::len);
    let nv = mesh.num_vertices();
    let mut bvals: Vec<Option<&Vec<f64>>> = vec![None; nv];
    for (k, &v) in mesh.boundary_loop().iter().enumerate() {
        bvals[v] = Some(&boundary[k]);
    }
    let lifted = assemble(mesh, 1, |_, _, _| 0);
    let rows = lifted.a.len();
    let cols: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|c| {
            let mut b = vec![0.0; rows];
            for &(r, w, _, wt) in &lifted.fixed {
                b[r] += wt * bvals[w].expect("boundary vertex")[c];
            }
            let mut x = vec![0.0; rows];
            pcg(&lifted.a, &b, &mut x, cg_tol, 20 * rows + 100)?;
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![vec![0.0; dim]; nv];
    for v in 0..nv {
        match (lifted.slot[v], bvals[v]) {
            (Some(s), _) => {
                for c in 0..dim {
                    out[v][c] = cols[c][s];
                }
            }
            (None, Some(b)) => out[v].clone_from(b),
            (None, None) => unreachable!("every vertex is interior or on the boundary"),
        }
    }
    Ok(out)
}

/// Geodesic interpolation of a circle trace at angle `theta`: the two
/// neighboring samples are joined along their optimal matching.
pub(crate) struct TraceInterp<'a> {
    params: &'a [f64],
    values: &'a [QPoint],
    perms: Vec<Vec<usize>>,
}

impl<'a> TraceInterp<'a> {
    pub(crate) fn new(trace: &'a SampledQPath) -> Result<Self> {
        let k = trace.len();
        let perms = (0..k)
            .map(|l| Ok(metric_g(&trace.values[l], &trace.values[(l + 1) % k])?.1.perm))
            .collect::<Result<Vec<_>>>()?;
        Ok(TraceInterp { params: &trace.params, values: &trace.values, perms })
    }

    pub(crate) fn at(&self, theta: f64) -> QPoint {
        let tau = std::f64::consts::TAU;
        let k = self.params.len();
        let theta = theta.rem_euclid(tau);
        // last sample at or before theta, cyclically
        let l = match self.params.partition_point(|&p| p <= theta) {
            0 => k - 1,
            i => i - 1,
        };
        let a = self.params[l];
        let b = if l + 1 < k { self.params[l + 1] } else { self.params[0] + tau };
        let mut span = b - a;
        let mut off = theta - a;
        if off < 0.0 {
            off += tau;
        }
        if span <= 0.0 {
            span += tau;
        }
        let t = (off / span).clamp(0.0, 1.0);
        let (va, vb) = (&self.values[l], &self.values[(l + 1) % k]);
        let n = va.n();
        let mut coords = Vec::with_capacity(va.coords().len());
        for (i, &j) in self.perms[l].iter().enumerate() {
            for c in 0..n {
                coords.push((1.0 - t) * va.point(i)[c] + t * vb.point(j)[c]);
            }
        }
        QPoint::new(va.q(), n, coords).expect("interpolated shape")
    }
}

/// Resamples a circle trace at the angles of the mesh boundary vertices by
/// geodesic interpolation between neighbouring samples.
pub fn resample_trace(trace: &SampledQPath, mesh: &Mesh) -> Result<SampledQPath> {
    if trace.topology != crate::selection::Topology::Circle {
        return Err(Error::InvalidInput("boundary must be a circle path".into()));
    }
    let interp = TraceInterp::new(trace)?;
    let params: Vec<f64> = mesh
        .boundary_loop()
        .iter()
        .map(|&v| {
            let p = mesh.vertex(v);
            p[1].atan2(p[0]).rem_euclid(std::f64::consts::TAU)
        })
        .collect();
    let values = params.iter().map(|&t| interp.at(t)).collect();
    SampledQPath::circle(params, values)
}

fn boundary_values(mesh: &Mesh, boundary: &SampledQPath) -> Result<()> {
    let bl = mesh.boundary_loop();
    if boundary.len() != bl.len() {
        return Err(Error::InvalidInput(format!(
            "boundary has {} samples but the mesh has {} boundary vertices",
            boundary.len(),
            bl.len()
        )));
    }
    if boundary.topology != crate::selection::Topology::Circle {
        return Err(Error::InvalidInput("boundary must be a circle path".into()));
    }
    for (&v, &t) in bl.iter().zip(&boundary.params) {
        let p = mesh.vertex(v);
        let ang = p[1].atan2(p[0]).rem_euclid(std::f64::consts::TAU);
        let d = (ang - t).abs();
        if d.min(std::f64::consts::TAU - d) > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "boundary sample angle {t} does not match vertex angle {ang}"
            )));
        }
    }
    Ok(())
}

fn cone_init(mesh: &Arc<Mesh>, boundary: &SampledQPath) -> Result<QFunction> {
    let interp = TraceInterp::new(boundary)?;
    let (q, n) = (boundary.q(), boundary.n());
    let mut v = vec![0.0; n];
    for val in &boundary.values {
        for (c, b) in val.barycenter().iter().enumerate() {
            v[c] += b / boundary.len() as f64;
        }
    }
    let radius = mesh
        .boundary_loop()
        .iter()
        .map(|&b| {
            let p = mesh.vertex(b);
            p[0].hypot(p[1])
        })
        .fold(0.0, f64::max);
    let mut vals: Vec<QPoint> = mesh
        .vertices()
        .par_iter()
        .map(|p| {
            let r = p[0].hypot(p[1]) / radius;
            if r == 0.0 {
                return QPoint::repeated(q, &v);
            }
            let g = interp.at(p[1].atan2(p[0]));
            g.scaled_about(&v, r)
        })
        .collect();
    for (k, &b) in mesh.boundary_loop().iter().enumerate() {
        vals[b] = boundary.values[k].clone();
    }
    QFunction::from_values(Arc::clone(mesh), &vals)
}

fn embedding_init(mesh: &Arc<Mesh>, boundary: &SampledQPath, cg_tol: f64) -> Result<QFunction> {
    let basis = build_lambda(boundary.n(), boundary.q())?;
    let emb = boundary
        .values
        .iter()
        .map(|v| xi(v, &basis))
        .collect::<Result<Vec<_>>>()?;
    let ext = harmonic_extension(mesh, &emb, cg_tol)?;
    let mut vals: Vec<QPoint> = ext
        .par_iter()
        .map(|p| match rho(p, &basis) {
            Ok(t) => Ok(t),
            Err(Error::NonConvergence { best, .. }) => Ok(*best),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    for (k, &b) in mesh.boundary_loop().iter().enumerate() {
        vals[b] = boundary.values[k].clone();
    }
    QFunction::from_values(Arc::clone(mesh), &vals)
}

fn jitter(f: &QFunction, seed: u64) -> QFunction {
    let mesh = f.mesh();
    let trace_scale = mesh
        .boundary_loop()
        .iter()
        .map(|&b| f.value(b).squared_norm())
        .fold(0.0, f64::max)
        .sqrt()
        / (f.q() as f64).sqrt();
    let scale = 0.05 * trace_scale.max(1e-300);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = f.clone();
    let q = f.q();
    let n = f.n();
    let vals = out.raw_values_mut();
    for v in 0..mesh.num_vertices() {
        if mesh.is_boundary(v) {
            continue;
        }
        for k in 0..q * n {
            let z: f64 = StandardNormal.sample(&mut rng);
            vals[v * q * n + k] += scale * z;
        }
    }
    out
}

struct Descent {
    f: QFunction,
    history: Vec<f64>,
    residuals: Vec<f64>,
    converged: bool,
}

fn descend(mut f: QFunction, opts: &SolveOptions) -> Result<Descent> {
    f.match_edges();
    let mut e = f.energy();
    let mut history = vec![e];
    let mut residuals = Vec::new();
    let mut converged = e == 0.0;
    let mut iters = 0;
    while !converged && iters < opts.max_iters {
        iters += 1;
        let (mut g, res) = relax_values(&f, opts.cg_tol)?;
        g.match_edges();
        let e2 = g.energy();
        if !(e2 <= e) {
            // only rounding can push a descent step up
            converged = true;
            break;
        }
        history.push(e2);
        residuals.push(res);
        f = g;
        converged = e - e2 <= opts.tol * e;
        e = e2;
    }
    Ok(Descent { f, history, residuals, converged })
}

/// Alternates [`QFunction::match_edges`] and [`relax_values`] from each
/// configured initialization and keeps the lowest energy (ties: first
/// start). Fails only on invalid input; non-convergence is flagged in the
/// report with the best iterate returned.
pub fn minimize(mesh: Arc<Mesh>, boundary: &SampledQPath, opts: &SolveOptions) -> Result<(QFunction, SolveReport)> {
    boundary_values(&mesh, boundary)?;
    let first = &boundary.values[0];
    let atoms = first.atoms();
    if atoms.len() == 1 && boundary.values.iter().all(|v| v == first) {
        let f = QFunction::constant(Arc::clone(&mesh), first);
        let report = SolveReport { history: vec![0.0], final_energy: 0.0, converged: true, ..Default::default() };
        return Ok((f, report));
    }
    let mut best: Option<(Descent, usize)> = None;
    let mut starts = Vec::new();
    for (k, &init) in opts.inits.iter().enumerate() {
        let f0 = match init {
            InitKind::Cone => cone_init(&mesh, boundary)?,
            InitKind::EmbeddingHarmonic => embedding_init(&mesh, boundary, opts.cg_tol)?,
            InitKind::Jitter => match &best {
                Some((d, _)) => jitter(&d.f, opts.seed.wrapping_add(k as u64)),
                None => jitter(&cone_init(&mesh, boundary)?, opts.seed.wrapping_add(k as u64)),
            },
        };
        let d = descend(f0, opts)?;
        let energy = *d.history.last().expect("history");
        starts.push(StartSummary { init, energy, iterations: d.history.len() - 1, converged: d.converged });
        let better = best.as_ref().map_or(true, |(b, _)| energy < *b.history.last().expect("history"));
        if better {
            best = Some((d, k));
        }
    }
    let (d, _) = best.ok_or_else(|| Error::InvalidInput("no initializations configured".into()))?;
    let report = SolveReport {
        final_energy: *d.history.last().expect("history"),
        iterations: d.history.len() - 1,
        converged: d.converged,
        history: d.history,
        residuals: d.residuals,
        starts,
    };
    Ok((d.f, report))
}

/// Runs the alternation from a given function; its boundary values are
/// kept fixed.
pub fn minimize_from(f: QFunction, opts: &SolveOptions) -> Result<(QFunction, SolveReport)> {
    let d = descend(f, opts)?;
    let report = SolveReport {
        final_energy: *d.history.last().expect("history"),
        iterations: d.history.len() - 1,
        converged: d.converged,
        history: d.history,
        residuals: d.residuals,
        starts: Vec::new(),
    };
    Ok((d.f, report))
}
