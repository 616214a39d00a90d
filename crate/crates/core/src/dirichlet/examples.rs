use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use super::{Mesh, QFunction};
use crate::error::{Error, Result};
use crate::qpoint::QPoint;
use crate::selection::SampledQPath;

/// One summand k · Σ_{ζ^{Q*} = z} ⟦L ζ^{n*}⟧ of a homogeneous function.
/// `l` has two rows: ζ^{n*} = a + ib is sent to a·l[0] + b·l[1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousPiece {
    pub k: usize,
    pub l: [Vec<f64>; 2],
}

impl HomogeneousPiece {
    pub fn frobenius_sq(&self) -> f64 {
        self.l.iter().flatten().map(|x| x * x).sum()
    }

    fn apply(&self, a: f64, b: f64) -> Vec<f64> {
        self.l[0].iter().zip(&self.l[1]).map(|(x, y)| a * x + b * y).collect()
    }
}

fn check(n_star: usize, q_star: usize, pieces: &[HomogeneousPiece]) -> Result<usize> {
    if q_star == 0 || n_star == 0 {
        return Err(Error::InvalidInput("n* and Q* must be positive".into()));
    }
    if n_star.gcd(&q_star) != 1 {
        return Err(Error::InvalidInput(format!("gcd({n_star}, {q_star}) != 1")));
    }
    let n = pieces.first().map(|p| p.l[0].len()).ok_or_else(|| Error::InvalidInput("no pieces".into()))?;
    for p in pieces {
        if p.k == 0 || p.l[0].len() != n || p.l[1].len() != n {
            return Err(Error::InvalidInput("pieces need k >= 1 and rows of equal length".into()));
        }
        // L injective iff the 2x2 Gram matrix is nonsingular
        let g00: f64 = p.l[0].iter().map(|x| x * x).sum();
        let g11: f64 = p.l[1].iter().map(|x| x * x).sum();
        let g01: f64 = p.l[0].iter().zip(&p.l[1]).map(|(x, y)| x * y).sum();
        if !(g00 * g11 - g01 * g01 > 1e-24 * (g00 + g11).powi(2)) {
            return Err(Error::InvalidInput("L is not injective".into()));
        }
    }
    Ok(n)
}

fn polar(p: [f64; 2]) -> (f64, f64) {
    (p[0].hypot(p[1]), p[1].atan2(p[0]).rem_euclid(TAU))
}

/// Samples k0⟦0⟧ + Σ_j k_j Σ_{ζ^{Q*}=z} ⟦L_j ζ^{n*}⟧ on the mesh.
///
/// Labels are ordered as k0 zeros, then for each piece and copy the Q*
/// branches ζ = r^{1/Q*} e^{i(θ + 2πm)/Q*}, θ ∈ [0, 2π). Edges crossing the
/// positive real axis shift m by one, which realizes the monodromy.
/// Returns the function and its boundary trace.
pub fn analytic_example(
    n_star: usize,
    q_star: usize,
    k0: usize,
    pieces: &[HomogeneousPiece],
    mesh: Arc<Mesh>,
) -> Result<(QFunction, SampledQPath)> {
    let n = check(n_star, q_star, pieces)?;
    let q = k0 + pieces.iter().map(|p| p.k * q_star).sum::<usize>();
    let alpha = n_star as f64 / q_star as f64;
    let values: Vec<QPoint> = mesh
        .vertices()
        .iter()
        .map(|&p| {
            let (r, theta) = polar(p);
            let mut coords = vec![0.0; k0 * n];
            for piece in pieces {
                for _ in 0..piece.k {
                    for m in 0..q_star {
                        let phase = n_star as f64 * (theta + TAU * m as f64) / q_star as f64;
                        let rho = r.powf(alpha);
                        coords.extend(piece.apply(rho * phase.cos(), rho * phase.sin()));
                    }
                }
            }
            QPoint::new(q, n, coords)
        })
        .collect::<Result<_>>()?;
    let mut f = QFunction::from_values(Arc::clone(&mesh), &values)?;
    for (e, edge) in mesh.edges().iter().enumerate() {
        let d = polar(mesh.vertex(edge.v)).1 - polar(mesh.vertex(edge.u)).1;
        let shift: isize = if d > PI {
            -1
        } else if d < -PI {
            1
        } else {
            0
        };
        let mut perm: Vec<usize> = (0..q).collect();
        let mut base = k0;
        while base < q {
            for m in 0..q_star {
                perm[base + m] = base + (m as isize + shift).rem_euclid(q_star as isize) as usize;
            }
            base += q_star;
        }
        f.set_matching(e, &perm)?;
    }
    let trace = f.trace()?;
    Ok((f, trace))
}

/// Exact Dirichlet energy on B_r: Σ_j k_j π n* |L_j|² r^{2n*/Q*}.
pub fn homogeneous_energy(n_star: usize, q_star: usize, pieces: &[HomogeneousPiece], r: f64) -> f64 {
    let alpha = n_star as f64 / q_star as f64;
    pieces
        .iter()
        .map(|p| p.k as f64 * PI * n_star as f64 * p.frobenius_sq() * r.powf(2.0 * alpha))
        .sum()
}

/// Exact ∫_{∂B_r} |f|²: π r^{2α+1} Σ_j k_j Q* |L_j|².
pub fn homogeneous_height(n_star: usize, q_star: usize, pieces: &[HomogeneousPiece], r: f64) -> f64 {
    let alpha = n_star as f64 / q_star as f64;
    PI * r.powf(2.0 * alpha + 1.0)
        * pieces.iter().map(|p| (p.k * q_star) as f64 * p.frobenius_sq()).sum::<f64>()
}
