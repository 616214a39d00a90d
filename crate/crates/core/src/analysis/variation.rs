use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dirichlet::QFunction;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perturbation {
    /// Domain deformation x ↦ x + εX(x).
    Inner,
    /// Value deformation f_i(x) ↦ f_i(x) + εY(x, f_i(x)).
    Outer,
}

/// A smooth field supported in the disk of radius `support` around
/// `center`: φ(x)(Σ_k A_k sin(ω_k·x + p_k) + M u), with the cutoff
/// φ(x) = (1 − |x − center|²/support²)³ and M u present only for value
/// fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestField {
    pub center: [f64; 2],
    pub support: f64,
    pub dim: usize,
    pub modes: Vec<([f64; 2], f64, Vec<f64>)>,
    /// Row-major dim × dim matrix acting on the value.
    pub linear: Vec<f64>,
}

impl TestField {
    pub fn zero(dim: usize, center: [f64; 2], support: f64) -> Self {
        TestField { center, support, dim, modes: vec![], linear: vec![0.0; dim * dim] }
    }

    /// Three random modes with frequencies up to 2π, scaled so that the
    /// x-dependent part has Lipschitz constant 1 (measured on a grid);
    /// `with_linear` adds a random matrix term of unit Frobenius norm.
    pub fn random(seed: u64, dim: usize, center: [f64; 2], support: f64, with_linear: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = (0..3)
            .map(|_| {
                let w = [rng.gen_range(-6.3..6.3), rng.gen_range(-6.3..6.3)];
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let amp = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (w, phase, amp)
            })
            .collect();
        let mut linear: Vec<f64> =
            (0..dim * dim).map(|_| if with_linear { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
        let norm = linear.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            linear.iter_mut().for_each(|x| *x /= norm);
        }
        let mut field = TestField { center, support, dim, modes, linear };
        let lip = field.lipschitz_x();
        if lip > 0.0 {
            for (_, _, a) in field.modes.iter_mut() {
                a.iter_mut().for_each(|x| *x /= lip);
            }
        }
        field
    }

    /// Largest Frobenius norm of the x-Jacobian of the value-independent
    /// part, by central differences on a 129 × 129 grid over the support.
    pub fn lipschitz_x(&self) -> f64 {
        let (r, k) = (self.support, 128);
        let step = r / 1024.0;
        let mut worst: f64 = 0.0;
        for i in 0..=k {
            for j in 0..=k {
                let x = [self.center[0] - r + 2.0 * r * i as f64 / k as f64, self.center[1] - r + 2.0 * r * j as f64 / k as f64];
                let mut frob = 0.0;
                for axis in 0..2 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[axis] += step;
                    xm[axis] -= step;
                    let (fp, fm) = (self.eval(xp, &[]), self.eval(xm, &[]));
                    frob += fp.iter().zip(&fm).map(|(a, b)| ((a - b) / (2.0 * step)).powi(2)).sum::<f64>();
                }
                worst = worst.max(frob.sqrt());
            }
        }
        worst
    }

    fn cutoff(&self, x: [f64; 2]) -> f64 {
        let s = ((x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2)) / (self.support * self.support);
        if s >= 1.0 {
            0.0
        } else {
            (1.0 - s).powi(3)
        }
    }

    pub fn eval(&self, x: [f64; 2], u: &[f64]) -> Vec<f64> {
        let phi = self.cutoff(x);
        let mut out = vec![0.0; self.dim];
        if phi == 0.0 {
            return out;
        }
        for (w, p, a) in &self.modes {
            let s = (w[0] * x[0] + w[1] * x[1] + p).sin();
            for d in 0..self.dim {
                out[d] += a[d] * s;
            }
        }
        if u.len() == self.dim {
            for d in 0..self.dim {
                out[d] += (0..self.dim).map(|e| self.linear[d * self.dim + e] * u[e]).sum::<f64>();
            }
        }
        out.iter_mut().for_each(|x| *x *= phi);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityEstimate {
    pub energy: f64,
    /// (ε, (E(ε) − E(−ε)) / 2ε) per step.
    pub derivatives: Vec<(f64, f64)>,
    /// The estimate at the smallest ε.
    pub derivative: f64,
}

fn perturbed_energy(f: &QFunction, kind: Perturbation, field: &TestField, eps: f64) -> Result<f64> {
    let mesh = f.mesh();
    match kind {
        Perturbation::Inner => {
            let moved: Vec<[f64; 2]> = mesh
                .vertices()
                .iter()
                .map(|&x| {
                    let v = field.eval(x, &[]);
                    [x[0] + eps * v[0], x[1] + eps * v[1]]
                })
                .collect();
            let new_mesh = mesh.with_vertices(moved)?;
            // with_vertices keeps triangles and therefore edge order
            let mut total = 0.0;
            for (e, edge) in new_mesh.edges().iter().enumerate() {
                total += edge.weight * f.edge_term(e);
            }
            Ok(total)
        }
        Perturbation::Outer => {
            let mut g = f.clone();
            let (q, n) = (f.q(), f.n());
            let vals = g.raw_values_mut();
            for v in 0..mesh.num_vertices() {
                let x = mesh.vertex(v);
                for i in 0..q {
                    let s = (v * q + i) * n;
                    let dy = field.eval(x, &vals[s..s + n]);
                    for d in 0..n {
                        vals[s + d] += eps * dy[d];
                    }
                }
            }
            Ok(g.energy())
        }
    }
}

/// Central finite differences of the discrete energy along an inner or
/// outer variation.
pub fn verify_stationarity(
    f: &QFunction,
    kind: Perturbation,
    field: &TestField,
    eps: &[f64],
) -> Result<StationarityEstimate> {
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput("eps must be positive".into()));
    }
    let want = match kind {
        Perturbation::Inner => 2,
        Perturbation::Outer => f.n(),
    };
    if field.dim != want {
        return Err(Error::Dimension(format!("test field has dimension {} but {want} is needed", field.dim)));
    }
    let mesh = f.mesh();
    if mesh.boundary_loop().iter().any(|&b| field.cutoff(mesh.vertex(b)) != 0.0) {
        return Err(Error::Precondition("test field does not vanish on the boundary".into()));
    }
    let mut derivatives = Vec::with_capacity(eps.len());
    for &e in eps {
        let plus = perturbed_energy(f, kind, field, e)?;
        let minus = perturbed_energy(f, kind, field, -e)?;
        derivatives.push((e, (plus - minus) / (2.0 * e)));
    }
    let derivative = derivatives.iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("nonempty").1;
    Ok(StationarityEstimate { energy: f.energy(), derivatives, derivative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirichlet::{analytic_example, build_disk_mesh, HomogeneousPiece};
    use std::sync::Arc;

    fn sqrt_example(n: usize) -> QFunction {
        let mesh = Arc::new(build_disk_mesh(1.0, n).unwrap());
        let id = HomogeneousPiece { k: 1, l: [vec![1.0, 0.0], vec![0.0, 1.0]] };
        analytic_example(1, 2, 0, &[id], mesh).unwrap().0
    }

    #[test]
    fn zero_field_has_zero_derivative() {
        let f = sqrt_example(8);
        for kind in [Perturbation::Inner, Perturbation::Outer] {
            let z = TestField::zero(2, [0.0, 0.0], 0.8);
            let est = verify_stationarity(&f, kind, &z, &[1e-3]).unwrap();
            assert_eq!(est.derivative, 0.0);
        }
    }

    #[test]
    fn non_minimizer_is_not_stationary() {
        let f = sqrt_example(16);
        let bad = f
            .map_values(|v, val| {
                let p = f.mesh().vertex(v);
                val.scaled(1.0 + 2.0 * (p[0] * p[0] + p[1] * p[1]))
            })
            .unwrap();
        let field = TestField::random(100, 2, [0.0, 0.0], 0.9, true);
        assert!((field.lipschitz_x() - 1.0).abs() < 1e-6);
        let est = verify_stationarity(&bad, Perturbation::Outer, &field, &[1e-4, 1e-3]).unwrap();
        assert!(est.derivative.abs() > 0.02 * est.energy, "{est:?}");
        let wide = TestField::random(1, 2, [0.0, 0.0], 1.5, false);
        assert!(matches!(
            verify_stationarity(&f, Perturbation::Inner, &wide, &[1e-3]),
            Err(Error::Precondition(_))
        ));
    }
}
