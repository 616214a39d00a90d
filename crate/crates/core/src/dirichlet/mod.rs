//! Discrete Dirichlet energy of Q-valued functions on planar triangle meshes.
//!
//! A [`QFunction`] stores Q labeled points per vertex and, for every edge, a
//! permutation identifying the labels at its two ends. The energy is the
//! cotangent-weighted sum over the lifted edges
//! Σ_uv w_uv Σ_i |f_i(u) - f_π(i)(v)|². With optimal matchings it equals
//! Σ_uv w_uv G(f(u), f(v))².

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::qpoint::{metric_g, sq_dist, QPoint};
use crate::selection::SampledQPath;

mod decompose;
mod examples;
mod mesh;
mod solver;

pub use decompose::{decompose_minimizer, decomposition_alpha, DecomposeOptions};
pub use examples::{analytic_example, homogeneous_energy, homogeneous_height, HomogeneousPiece};
pub use mesh::{build_disk_mesh, build_graded_disk_mesh, Edge, Mesh};
pub(crate) use solver::fmt17;
pub use solver::{minimize, minimize_from, relax_values, resample_trace, InitKind, SolveOptions, SolveReport, StartSummary};

/// Schema tag carried by every JSON document.
pub const SCHEMA: &str = "qval/1";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "QFunctionRepr", into = "QFunctionRepr")]
pub struct QFunction {
    mesh: Arc<Mesh>,
    q: usize,
    n: usize,
    values: Vec<f64>,
    matchings: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct QFunctionRepr {
    schema: String,
    kind: String,
    q: usize,
    n: usize,
    mesh: Mesh,
    values: Vec<Vec<Vec<f64>>>,
    /// One permutation per mesh edge, edges sorted by (u, v) with u < v.
    matchings: Vec<Vec<usize>>,
}

impl TryFrom<QFunctionRepr> for QFunction {
    type Error = Error;
    fn try_from(r: QFunctionRepr) -> Result<Self> {
        if r.schema != SCHEMA || r.kind != "qfunction" {
            return Err(Error::InvalidInput(format!("expected a {SCHEMA} qfunction document")));
        }
        let mesh = Arc::new(r.mesh);
        if r.values.len() != mesh.num_vertices() {
            return Err(dim_err("one value per vertex expected"));
        }
        let values = r
            .values
            .iter()
            .map(|pts| QPoint::from_points(pts))
            .collect::<Result<Vec<_>>>()?;
        let mut f = QFunction::from_values(mesh, &values)?;
        if r.matchings.len() != f.mesh.edges().len() {
            return Err(dim_err("one matching per edge expected"));
        }
        for (e, p) in r.matchings.into_iter().enumerate() {
            f.set_matching(e, &p)?;
        }
        Ok(f)
    }
}

impl From<QFunction> for QFunctionRepr {
    fn from(f: QFunction) -> Self {
        let values = (0..f.mesh.num_vertices())
            .map(|v| (0..f.q).map(|i| f.point(v, i).to_vec()).collect())
            .collect();
        let matchings = (0..f.mesh.edges().len()).map(|e| f.matching(e).to_vec()).collect();
        QFunctionRepr {
            schema: SCHEMA.into(),
            kind: "qfunction".into(),
            q: f.q,
            n: f.n,
            mesh: (*f.mesh).clone(),
            values,
            matchings,
        }
    }
}

fn is_perm(p: &[usize], q: usize) -> bool {
    let mut seen = vec![false; q];
    p.len() == q && p.iter().all(|&j| j < q && !std::mem::replace(&mut seen[j], true))
}

impl QFunction {
    /// Values per vertex with identity matchings.
    pub fn from_values(mesh: Arc<Mesh>, values: &[QPoint]) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(dim_err(format!("{} values for {} vertices", values.len(), mesh.num_vertices())));
        }
        let (q, n) = (values[0].q(), values[0].n());
        let mut flat = Vec::with_capacity(values.len() * q * n);
        for v in values {
            values[0].same_shape(v)?;
            flat.extend_from_slice(v.coords());
        }
        let matchings = (0..mesh.edges().len()).flat_map(|_| 0..q).collect();
        Ok(QFunction { mesh, q, n, values: flat, matchings })
    }

    /// Q·⟦c⟧ everywhere.
    pub fn constant(mesh: Arc<Mesh>, value: &QPoint) -> Self {
        let values = vec![value.clone(); mesh.num_vertices()];
        QFunction::from_values(mesh, &values).expect("uniform shape")
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Point of label `i` at vertex `v`.
    pub fn point(&self, v: usize, i: usize) -> &[f64] {
        let s = (v * self.q + i) * self.n;
        &self.values[s..s + self.n]
    }

    pub fn value(&self, v: usize) -> QPoint {
        let s = v * self.q * self.n;
        QPoint::new(self.q, self.n, self.values[s..s + self.q * self.n].to_vec()).expect("stored shape")
    }

    pub fn values(&self) -> impl Iterator<Item = QPoint> + '_ {
        (0..self.mesh.num_vertices()).map(|v| self.value(v))
    }

    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn raw_values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_value(&mut self, v: usize, value: &QPoint) -> Result<()> {
        if value.q() != self.q || value.n() != self.n {
            return Err(dim_err("value shape does not match the function"));
        }
        let s = v * self.q * self.n;
        self.values[s..s + self.q * self.n].copy_from_slice(value.coords());
        Ok(())
    }

    /// Matching of edge `e` from its lower to its higher vertex.
    pub fn matching(&self, e: usize) -> &[usize] {
        &self.matchings[e * self.q..(e + 1) * self.q]
    }

    pub fn set_matching(&mut self, e: usize, perm: &[usize]) -> Result<()> {
        if !is_perm(perm, self.q) {
            return Err(Error::InvalidInput(format!("{perm:?} is not a permutation of {} labels", self.q)));
        }
        self.matchings[e * self.q..(e + 1) * self.q].copy_from_slice(perm);
        Ok(())
    }

    /// Label at `b` matched to label `i` at `a` along the edge {a, b}.
    pub fn follow(&self, a: usize, b: usize, i: usize) -> usize {
        let e = self.mesh.edge_between(a, b).expect("adjacent vertices");
        let m = self.matching(e);
        if a < b {
            m[i]
        } else {
            m.iter().position(|&j| j == i).expect("permutation")
        }
    }

    /// Σ_i |f_i(u) - f_π(i)(v)|² for edge `e`.
    pub fn edge_term(&self, e: usize) -> f64 {
        let Edge { u, v, .. } = self.mesh.edges()[e];
        self.matching(e)
            .iter()
            .enumerate()
            .map(|(i, &j)| sq_dist(self.point(u, i), self.point(v, j)))
            .sum()
    }

    /// The discrete Dirichlet energy.
    pub fn energy(&self) -> f64 {
        self.mesh
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| edge.weight * self.edge_term(e))
            .sum()
    }

    /// Energy of triangle `t`: each of its edges weighted by half the
    /// cotangent of the opposite angle. Summing over triangles gives
    /// [`QFunction::energy`].
    pub fn triangle_energy(&self, t: usize) -> f64 {
        let edges = self.mesh.triangle_edges(t);
        let cots = self.mesh.triangle_half_cots(t);
        edges.iter().zip(cots).map(|(&e, c)| c * self.edge_term(e)).sum()
    }

    /// Renames the labels at vertex `v`: new label `i` is old label
    /// `perm[i]`. Matchings are conjugated so every observable is unchanged.
    pub fn relabel(&mut self, v: usize, perm: &[usize]) -> Result<()> {
        if !is_perm(perm, self.q) {
            return Err(Error::InvalidInput("relabeling is not a permutation".into()));
        }
        let old = self.value(v);
        self.set_value(v, &old.permuted(perm))?;
        let inv = crate::qpoint::invert_perm(perm);
        let mesh = Arc::clone(&self.mesh);
        for &(w, e) in mesh.neighbors(v) {
            let m = self.matching(e).to_vec();
            let new: Vec<usize> = if v < w {
                // new label i is old perm[i], which went to m[perm[i]]
                (0..self.q).map(|i| m[perm[i]]).collect()
            } else {
                m.iter().map(|&j| inv[j]).collect()
            };
            self.set_matching(e, &new)?;
        }
        Ok(())
    }

    /// Replaces every matching by an optimal assignment (lexicographic
    /// tie-break), which cannot increase the energy.
    pub fn match_edges(&mut self) {
        let q = self.q;
        let edges = self.mesh.edges();
        let perms: Vec<Vec<usize>> = edges
            .par_iter()
            .map(|e| {
                let (a, b) = (self.value(e.u), self.value(e.v));
                metric_g(&a, &b).expect("same shape").1.perm
            })
            .collect();
        for (e, p) in perms.into_iter().enumerate() {
            self.matchings[e * q..(e + 1) * q].copy_from_slice(&p);
        }
    }

    /// Σ_uv w_uv G(f(u), f(v))², the energy under optimal matchings.
    pub fn optimal_energy(&self) -> f64 {
        let edges = self.mesh.edges();
        let terms: Vec<f64> = edges
            .par_iter()
            .map(|e| {
                let g = metric_g(&self.value(e.u), &self.value(e.v)).expect("same shape").0;
                e.weight * g * g
            })
            .collect();
        terms.iter().sum()
    }

    /// The boundary trace as a circle path, one sample per boundary vertex
    /// at its polar angle. Requires the boundary loop to wind once
    /// counter-clockwise around the origin starting at angle 0.
    pub fn trace(&self) -> Result<SampledQPath> {
        let bl = self.mesh.boundary_loop();
        let params: Vec<f64> = bl
            .iter()
            .map(|&v| {
                let p = self.mesh.vertex(v);
                p[1].atan2(p[0]).rem_euclid(std::f64::consts::TAU)
            })
            .collect();
        let values = bl.iter().map(|&v| self.value(v)).collect();
        SampledQPath::circle(params, values)
    }

    /// Labels at the three corners of triangle `t` continued along the
    /// stored matchings from the corner whose values are most separated
    /// (first corner on ties), so that collapsed values do not scramble the
    /// sheets: sheet `i` uses label `labels[k][i]` at corner `k`.
    pub fn triangle_sheets(&self, t: usize) -> [Vec<usize>; 3] {
        let tri = self.mesh.triangles()[t];
        let mut anchor = 0;
        let mut best = f64::NEG_INFINITY;
        for (k, &v) in tri.iter().enumerate() {
            let mut s = f64::INFINITY;
            for i in 0..self.q {
                for j in i + 1..self.q {
                    s = s.min(sq_dist(self.point(v, i), self.point(v, j)));
                }
            }
            if s > best {
                best = s;
                anchor = k;
            }
        }
        let a = tri[anchor];
        tri.map(|v| if v == a { (0..self.q).collect() } else { (0..self.q).map(|i| self.follow(a, v, i)).collect() })
    }

    /// Piecewise-linear value at `p`, sheets continued inside the triangle
    /// containing `p`. Returns the flat coordinates (sheet-major) and the
    /// triangle.
    pub fn sample_sheets(&self, p: [f64; 2]) -> (Vec<f64>, usize) {
        let (t, l) = self.mesh.locate(p);
        let tri = self.mesh.triangles()[t];
        let sheets = self.triangle_sheets(t);
        let mut out = vec![0.0; self.q * self.n];
        for k in 0..3 {
            for i in 0..self.q {
                let src = self.point(tri[k], sheets[k][i]);
                for d in 0..self.n {
                    out[i * self.n + d] += l[k] * src[d];
                }
            }
        }
        (out, t)
    }

    pub fn sample(&self, p: [f64; 2]) -> QPoint {
        QPoint::new(self.q, self.n, self.sample_sheets(p).0).expect("stored shape")
    }

    /// Constant gradient of each sheet on triangle `t`, in the sheet order
    /// of [`QFunction::triangle_sheets`]: entry `(i * n + d) * 2 + k` is
    /// ∂_k of coordinate d of sheet i.
    pub fn triangle_gradient(&self, t: usize) -> Vec<f64> {
        let tri = self.mesh.triangles()[t];
        let [a, b, c] = tri.map(|i| self.mesh.vertex(i));
        let two_area = 2.0 * self.mesh.triangle_area(t);
        let grads = [
            [(b[1] - c[1]) / two_area, (c[0] - b[0]) / two_area],
            [(c[1] - a[1]) / two_area, (a[0] - c[0]) / two_area],
            [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area],
        ];
        let sheets = self.triangle_sheets(t);
        let mut out = vec![0.0; self.q * self.n * 2];
        for k in 0..3 {
            for i in 0..self.q {
                let src = self.point(tri[k], sheets[k][i]);
                for d in 0..self.n {
                    out[(i * self.n + d) * 2] += src[d] * grads[k][0];
                    out[(i * self.n + d) * 2 + 1] += src[d] * grads[k][1];
                }
            }
        }
        out
    }

    /// Copy of `self` with values replaced by `f(vertex, value)`.
    pub fn map_values(&self, mut f: impl FnMut(usize, QPoint) -> QPoint) -> Result<QFunction> {
        let mut out = self.clone();
        for v in 0..self.mesh.num_vertices() {
            let nv = f(v, self.value(v));
            out.set_value(v, &nv)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(mesh: &Arc<Mesh>, q: usize) -> QFunction {
        let vals: Vec<QPoint> = mesh.vertices().iter().map(|p| QPoint::repeated(q, &[p[0]])).collect();
        QFunction::from_values(Arc::clone(mesh), &vals).unwrap()
    }

    #[test]
    fn energy_of_doubled_linear_map() {
        let mesh = Arc::new(build_disk_mesh(1.0, 32).unwrap());
        let f = linear(&mesh, 2);
        let e = f.energy();
        assert!((e - 2.0 * std::f64::consts::PI).abs() < 2e-3 * e);
        let tri: f64 = (0..mesh.triangles().len()).map(|t| f.triangle_energy(t)).sum();
        assert!((tri - e).abs() < 1e-12 * e);
        let c = QFunction::constant(Arc::clone(&mesh), &QPoint::from_scalars(&[1.0, 2.0]).unwrap());
        assert_eq!(c.energy(), 0.0);
    }

    #[test]
    fn relabeling_is_a_gauge() {
        let mesh = Arc::new(build_disk_mesh(1.0, 4).unwrap());
        let vals: Vec<QPoint> = mesh
            .vertices()
            .iter()
            .map(|p| QPoint::from_points(&[[p[0], p[1]], [p[1] * p[1], -p[0]], [1.0, p[0] * p[1]]]).unwrap())
            .collect();
        let mut f = QFunction::from_values(Arc::clone(&mesh), &vals).unwrap();
        f.match_edges();
        let e = f.energy();
        for v in (0..mesh.num_vertices()).step_by(3) {
            f.relabel(v, &[2, 0, 1]).unwrap();
        }
        assert_eq!(f.energy(), e);
    }

    #[test]
    fn matching_never_increases_energy() {
        let mesh = Arc::new(build_disk_mesh(1.0, 6).unwrap());
        let vals: Vec<QPoint> = mesh
            .vertices()
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                QPoint::from_scalars(&[s * p[0], -s * p[0]]).unwrap()
            })
            .collect();
        let mut f = QFunction::from_values(Arc::clone(&mesh), &vals).unwrap();
        let before = f.energy();
        f.match_edges();
        let after = f.energy();
        assert!(after < before);
        assert!((after - f.optimal_energy()).abs() <= 1e-12 * after.max(1.0));
    }

    #[test]
    fn json_roundtrip() {
        let mesh = Arc::new(build_disk_mesh(1.0, 3).unwrap());
        let mut f = linear(&mesh, 2);
        f.set_matching(0, &[1, 0]).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let back: QFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back.raw_values(), f.raw_values());
        assert_eq!(back.matching(0), &[1, 0]);
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
    }
}
