//! The space of unordered Q-tuples of points in R^n.
//!
//! A [`QPoint`] stores its Q points in some order, but that order carries no
//! meaning: equality is multiset equality, and every metric quantity is
//! invariant under relabeling. Distances between Q-points are computed by
//! optimal assignment ([`metric_g`]).

mod assign;
mod metric;
mod ops;

pub use assign::{hungarian, lexicographic_min, second_best, CostMatrix};
pub use metric::{geodesic, metric_g, metric_g_oracle, Matching, EXHAUSTIVE_MAX_Q, ORACLE_CAP};
pub use ops::{collapse_beta, collapse_point, retraction_theta};
pub(crate) use metric::invert as invert_perm;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

/// An element of A_Q(R^n): Q points in R^n counted with multiplicity.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "QPointRepr", into = "QPointRepr")]
pub struct QPoint {
    q: usize,
    n: usize,
    coords: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct QPointRepr {
    q: usize,
    n: usize,
    points: Vec<Vec<f64>>,
}

impl TryFrom<QPointRepr> for QPoint {
    type Error = Error;

    fn try_from(r: QPointRepr) -> Result<Self> {
        if r.points.len() != r.q {
            return Err(dim_err(format!(
                "declared q = {} but {} points given",
                r.q,
                r.points.len()
            )));
        }
        let p = QPoint::from_points(&r.points)?;
        if p.n != r.n {
            return Err(dim_err(format!("declared n = {} but points have n = {}", r.n, p.n)));
        }
        Ok(p)
    }
}

impl From<QPoint> for QPointRepr {
    fn from(p: QPoint) -> Self {
        QPointRepr {
            q: p.q,
            n: p.n,
            points: p.points().map(<[f64]>::to_vec).collect(),
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

impl QPoint {
    /// Builds a Q-point from a flat coordinate buffer of length `q * n`.
    pub fn new(q: usize, n: usize, coords: Vec<f64>) -> Result<Self> {
        if q == 0 || n == 0 {
            return Err(dim_err("q and n must be at least 1"));
        }
        if coords.len() != q * n {
            return Err(dim_err(format!(
                "expected {} coordinates for q = {q}, n = {n}, got {}",
                q * n,
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        Ok(QPoint { q, n, coords })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let q = points.len();
        if q == 0 {
            return Err(dim_err("a Q-point needs at least one point"));
        }
        let n = points[0].as_ref().len();
        let mut coords = Vec::with_capacity(q * n);
        for p in points {
            let p = p.as_ref();
            if p.len() != n {
                return Err(dim_err(format!("point of dimension {} among dimension {n}", p.len())));
            }
            coords.extend_from_slice(p);
        }
        QPoint::new(q, n, coords)
    }

    /// One-dimensional convenience constructor.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        QPoint::new(values.len(), 1, values.to_vec())
    }

    /// `q` copies of the single point `p`.
    pub fn repeated(q: usize, p: &[f64]) -> Self {
        let mut coords = Vec::with_capacity(q * p.len());
        for _ in 0..q {
            coords.extend_from_slice(p);
        }
        QPoint { q, n: p.len(), coords }
    }

    pub fn zero(q: usize, n: usize) -> Self {
        QPoint { q, n, coords: vec![0.0; q * n] }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.n..(i + 1) * self.n]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.n)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn same_shape(&self, other: &QPoint) -> Result<()> {
        if self.q != other.q || self.n != other.n {
            return Err(dim_err(format!(
                "(q, n) = ({}, {}) vs ({}, {})",
                self.q, self.n, other.q, other.n
            )));
        }
        Ok(())
    }

    /// Relabels: the i-th point of the result is point `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> QPoint {
        let mut coords = Vec::with_capacity(self.coords.len());
        for &j in perm {
            coords.extend_from_slice(self.point(j));
        }
        QPoint { q: self.q, n: self.n, coords }
    }

    /// Selects a sub-multiset by index.
    pub fn subset(&self, idx: &[usize]) -> Result<QPoint> {
        if idx.is_empty() {
            return Err(dim_err("empty subset"));
        }
        let mut coords = Vec::with_capacity(idx.len() * self.n);
        for &j in idx {
            coords.extend_from_slice(self.point(j));
        }
        Ok(QPoint { q: idx.len(), n: self.n, coords })
    }

    /// The sum ⟦self⟧ + ⟦other⟧ as a (q1 + q2)-point.
    pub fn concat(&self, other: &QPoint) -> Result<QPoint> {
        if self.n != other.n {
            return Err(dim_err("concatenating Q-points of different ambient dimension"));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(QPoint { q: self.q + other.q, n: self.n, coords })
    }

    /// Applies the same affine map `x -> base + factor * (x - base)` to every point.
    pub fn scaled_about(&self, base: &[f64], factor: f64) -> QPoint {
        let mut coords = self.coords.clone();
        for p in coords.chunks_exact_mut(self.n) {
            for (c, b) in p.iter_mut().zip(base) {
                *c = b + factor * (*c - b);
            }
        }
        QPoint { q: self.q, n: self.n, coords }
    }

    pub fn scaled(&self, factor: f64) -> QPoint {
        QPoint {
            q: self.q,
            n: self.n,
            coords: self.coords.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn translated(&self, v: &[f64]) -> QPoint {
        let mut coords = self.coords.clone();
        for p in coords.chunks_exact_mut(self.n) {
            for (c, d) in p.iter_mut().zip(v) {
                *c += d;
            }
        }
        QPoint { q: self.q, n: self.n, coords }
    }

    /// d(T): the largest distance between two of the points.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.q {
            for j in i + 1..self.q {
                d = d.max(dist(self.point(i), self.point(j)));
            }
        }
        d
    }

    /// s(T): the smallest distance between two distinct points, `+inf` when
    /// all points coincide.
    pub fn separation(&self) -> f64 {
        let mut s = f64::INFINITY;
        for i in 0..self.q {
            for j in i + 1..self.q {
                if self.point(i) != self.point(j) {
                    s = s.min(dist(self.point(i), self.point(j)));
                }
            }
        }
        s
    }

    /// η(T): the center of mass.
    pub fn barycenter(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n];
        for p in self.points() {
            for (a, b) in c.iter_mut().zip(p) {
                *a += b;
            }
        }
        for a in &mut c {
            *a /= self.q as f64;
        }
        c
    }

    /// |T|² = G(T, Q⟦0⟧)².
    pub fn squared_norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum()
    }

    /// Distinct atoms with multiplicities, in order of first appearance.
    pub fn atoms(&self) -> Vec<(Vec<f64>, usize)> {
        let mut out: Vec<(Vec<f64>, usize)> = Vec::new();
        for p in self.points() {
            match out.iter_mut().find(|(a, _)| a.as_slice() == p) {
                Some((_, k)) => *k += 1,
                None => out.push((p.to_vec(), 1)),
            }
        }
        out
    }

    /// Points sorted lexicographically; a canonical representative.
    pub fn canonical(&self) -> QPoint {
        let mut pts: Vec<&[f64]> = self.points().collect();
        pts.sort_by(|a, b| lex_cmp(a, b));
        let coords = pts.concat();
        QPoint { q: self.q, n: self.n, coords }
    }

    /// Tolerance equality: G(self, other) <= eps.
    pub fn approx_eq(&self, other: &QPoint, eps: f64) -> bool {
        match metric_g(self, other) {
            Ok((d, _)) => d <= eps,
            Err(_) => false,
        }
    }
}

/// Exact multiset equality.
impl PartialEq for QPoint {
    fn eq(&self, other: &Self) -> bool {
        self.q == other.q && self.n == other.n && self.canonical().coords == other.canonical().coords
    }
}
