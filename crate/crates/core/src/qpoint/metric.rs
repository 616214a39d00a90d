use serde::{Deserialize, Serialize};

use super::assign::{hungarian, lexicographic_min, CostMatrix};
use super::{sq_dist, QPoint};
use crate::error::{Error, Result};

/// Up to this Q the assignment is found by exhaustive search.
pub const EXHAUSTIVE_MAX_Q: usize = 6;

/// Largest Q accepted by [`metric_g_oracle`].
pub const ORACLE_CAP: usize = 8;

/// An optimal pairing of the points of two Q-points: point `i` of the first
/// goes to point `perm[i]` of the second. `cost` is the squared distance sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub perm: Vec<usize>,
    pub cost: f64,
}

impl Matching {
    pub fn identity(q: usize) -> Self {
        Matching { perm: (0..q).collect(), cost: 0.0 }
    }

    pub fn inverse(&self) -> Vec<usize> {
        invert(&self.perm)
    }
}

pub(crate) fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &j) in perm.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

pub(crate) fn cost_matrix(t: &QPoint, s: &QPoint) -> CostMatrix {
    CostMatrix::from_fn(t.q(), |i, j| sq_dist(t.point(i), s.point(j)))
}

/// The metric G(T, S): square root of the minimal squared-distance sum over
/// all pairings, with the minimizing pairing. Ties are broken towards the
/// lexicographically smallest permutation for Q <= [`EXHAUSTIVE_MAX_Q`].
pub fn metric_g(t: &QPoint, s: &QPoint) -> Result<(f64, Matching)> {
    t.same_shape(s)?;
    let c = cost_matrix(t, s);
    let (perm, cost) = if t.q() <= EXHAUSTIVE_MAX_Q {
        lexicographic_min(&c)
    } else {
        let perm = hungarian(&c);
        let cost = c.cost(&perm);
        (perm, cost)
    };
    Ok((cost.sqrt(), Matching { perm, cost }))
}

/// The point at fraction `s` of the way from `a` to `b` along the segment
/// given by an optimal matching. G(a, result) = s G(a, b).
pub fn geodesic(a: &QPoint, b: &QPoint, s: f64) -> Result<QPoint> {
    let (_, m) = metric_g(a, b)?;
    let n = a.n();
    let mut coords = Vec::with_capacity(a.q() * n);
    for (i, &j) in m.perm.iter().enumerate() {
        coords.extend(a.point(i).iter().zip(b.point(j)).map(|(x, y)| x + s * (y - x)));
    }
    QPoint::new(a.q(), n, coords)
}

/// Brute-force G by enumerating all Q! permutations. Independent of the
/// search used by [`metric_g`]; intended for tests and small Q.
pub fn metric_g_oracle(t: &QPoint, s: &QPoint) -> Result<f64> {
    t.same_shape(s)?;
    if t.q() > ORACLE_CAP {
        return Err(Error::OracleCap { q: t.q(), cap: ORACLE_CAP });
    }
    let q = t.q();
    // Heap's algorithm, iterative
    let mut perm: Vec<usize> = (0..q).collect();
    let mut ctr = vec![0usize; q];
    let cost = |p: &[usize]| -> f64 {
        let mut acc = 0.0;
        for (i, &j) in p.iter().enumerate() {
            acc += sq_dist(t.point(i), s.point(j));
        }
        acc
    };
    let mut best = cost(&perm);
    let mut i = 0;
    while i < q {
        if ctr[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(ctr[i], i);
            }
            best = best.min(cost(&perm));
            ctr[i] += 1;
            i = 0;
        } else {
            ctr[i] = 0;
            i += 1;
        }
    }
    Ok(best.sqrt())
}
