//! Selections and decompositions of sampled one-parameter Q-valued paths.
//!
//! On an interval a Q-valued path always splits into Q single-valued
//! branches by chaining optimal matchings between consecutive samples. On
//! the circle the chained matchings close up to a permutation (the
//! monodromy); its cycles are the irreducible pieces, and each piece of
//! cycle length Q_j unrolls to a single-valued path on a Q_j-fold cover.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::qpoint::{metric_g, second_best, QPoint};
use crate::qpoint::{dist, sq_dist};

/// Matchings whose cost is within this margin of a non-equivalent
/// alternative are rejected as ambiguous.
pub const MATCHING_MARGIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Interval,
    Circle,
}

/// A Q-valued path sampled on an interval or on the circle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampledQPath {
    pub topology: Topology,
    pub params: Vec<f64>,
    pub values: Vec<QPoint>,
}

impl SampledQPath {
    pub fn new(topology: Topology, params: Vec<f64>, values: Vec<QPoint>) -> Result<Self> {
        let p = SampledQPath { topology, params, values };
        p.validate()?;
        Ok(p)
    }

    pub fn interval(params: Vec<f64>, values: Vec<QPoint>) -> Result<Self> {
        Self::new(Topology::Interval, params, values)
    }

    pub fn circle(params: Vec<f64>, values: Vec<QPoint>) -> Result<Self> {
        Self::new(Topology::Circle, params, values)
    }

    /// Samples `f` at `k` equally spaced angles starting from 0.
    pub fn circle_from_fn(k: usize, mut f: impl FnMut(f64) -> QPoint) -> Result<Self> {
        let params: Vec<f64> = (0..k).map(|l| TAU * l as f64 / k as f64).collect();
        let values = params.iter().map(|&t| f(t)).collect();
        Self::circle(params, values)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidInput("empty path".into()));
        }
        if self.params.len() != self.values.len() {
            return Err(dim_err(format!(
                "{} parameters for {} values",
                self.params.len(),
                self.values.len()
            )));
        }
        let first = &self.values[0];
        for v in &self.values {
            first.same_shape(v)?;
        }
        if self.params.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("parameters must be strictly increasing".into()));
        }
        if self.topology == Topology::Circle
            && self.params.iter().any(|&t| !(0.0..TAU).contains(&t))
        {
            return Err(Error::InvalidInput("circle angles must lie in [0, 2π)".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn q(&self) -> usize {
        self.values[0].q()
    }

    pub fn n(&self) -> usize {
        self.values[0].n()
    }
}

/// Q single-valued branches over common parameters.
#[derive(Clone, Debug)]
pub struct Selection {
    pub params: Vec<f64>,
    /// `paths[i][l]` is branch `i` at parameter `l`.
    pub paths: Vec<Vec<Vec<f64>>>,
}

impl Selection {
    /// The Q-point at every parameter.
    pub fn recombine(&self) -> Vec<QPoint> {
        (0..self.params.len())
            .map(|l| {
                let pts: Vec<&[f64]> = self.paths.iter().map(|p| p[l].as_slice()).collect();
                QPoint::from_points(&pts).expect("selection branches share a dimension")
            })
            .collect()
    }
}

/// Result of [`squad_split`].
#[derive(Clone, Debug)]
pub enum SquadSplit {
    Split {
        /// The maximal squad of branch indices at the base sample.
        squad: Vec<usize>,
        left: Vec<QPoint>,
        right: Vec<QPoint>,
    },
    NotSplittable,
}

/// Splits a sampled Lipschitz Q-function into two pieces with disjoint
/// supports when two of its values at the base sample `x0_index` are further
/// apart than `3 (Q-1) lip diam`.
///
/// `lip` and `diam` are caller-supplied upper bounds for the Lipschitz
/// constant and the domain diameter. The squad containing the first point at
/// the base is the single-linkage cluster at scale `3 lip diam`.
pub fn squad_split(
    samples: &[(Vec<f64>, QPoint)],
    x0_index: usize,
    lip: f64,
    diam: f64,
) -> Result<SquadSplit> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if x0_index >= samples.len() {
        return Err(Error::InvalidInput("base index out of range".into()));
    }
    let base = &samples[x0_index].1;
    for (_, v) in samples {
        base.same_shape(v)?;
    }
    let q = base.q();
    let gap = base.diameter();
    if q < 2 || !(gap > 3.0 * (q - 1) as f64 * lip * diam) {
        return Ok(SquadSplit::NotSplittable);
    }
    let link = 3.0 * lip * diam;
    let mut in_squad = vec![false; q];
    in_squad[0] = true;
    let mut stack = vec![0];
    while let Some(i) = stack.pop() {
        for j in 0..q {
            if !in_squad[j] && dist(base.point(i), base.point(j)) <= link {
                in_squad[j] = true;
                stack.push(j);
            }
        }
    }
    let squad: Vec<usize> = (0..q).filter(|&i| in_squad[i]).collect();
    let rest: Vec<usize> = (0..q).filter(|&i| !in_squad[i]).collect();
    if rest.is_empty() {
        return Ok(SquadSplit::NotSplittable);
    }
    let mut left = Vec::with_capacity(samples.len());
    let mut right = Vec::with_capacity(samples.len());
    for (_, v) in samples {
        let (_, m) = metric_g(base, v)?;
        let li: Vec<usize> = squad.iter().map(|&i| m.perm[i]).collect();
        let ri: Vec<usize> = rest.iter().map(|&i| m.perm[i]).collect();
        left.push(v.subset(&li)?);
        right.push(v.subset(&ri)?);
    }
    Ok(SquadSplit::Split { squad, left, right })
}

/// Piecewise-linear selection of an interval path: consecutive samples are
/// paired by an optimal matching, so every branch moves at most as far as
/// the Q-point itself on each segment.
pub fn select_1d(path: &SampledQPath) -> Result<Selection> {
    if path.topology != Topology::Interval {
        return Err(Error::InvalidInput("select_1d needs an interval path".into()));
    }
    if path.len() < 2 {
        return Err(Error::InvalidInput("select_1d needs at least two samples".into()));
    }
    let orders = chain_orders(&path.values, false)?;
    let q = path.q();
    let paths = (0..q)
        .map(|i| {
            path.values
                .iter()
                .zip(&orders)
                .map(|(v, o)| v.point(o[i]).to_vec())
                .collect()
        })
        .collect();
    Ok(Selection { params: path.params.clone(), paths })
}

/// Chains optimal matchings along the samples. `orders[l][i]` is the index in
/// `values[l]` of branch `i`; with `closed`, one extra entry holds the
/// ordering of `values[0]` reached after going once around.
fn chain_orders(values: &[QPoint], closed: bool) -> Result<Vec<Vec<usize>>> {
    let q = values[0].q();
    let k = values.len();
    let steps = if closed { k } else { k - 1 };
    let mut orders = vec![(0..q).collect::<Vec<usize>>()];
    for l in 1..=steps {
        let prev = values[l - 1].permuted(&orders[l - 1]);
        let next = &values[l % k];
        let (_, m) = metric_g(&prev, next)?;
        if closed {
            check_margin(&prev, next, &m.perm, l - 1, l % k)?;
        }
        orders.push(m.perm);
    }
    Ok(orders)
}

fn pairing_key(a: &QPoint, b: &QPoint, perm: &[usize]) -> Vec<Vec<u64>> {
    let mut pairs: Vec<Vec<u64>> = perm
        .iter()
        .enumerate()
        .map(|(i, &j)| a.point(i).iter().chain(b.point(j)).map(|x| x.to_bits()).collect())
        .collect();
    pairs.sort();
    pairs
}

fn check_margin(a: &QPoint, b: &QPoint, best: &[usize], from: usize, to: usize) -> Result<()> {
    let c = crate::qpoint::CostMatrix::from_fn(a.q(), |i, j| sq_dist(a.point(i), b.point(j)));
    let key = pairing_key(a, b, best);
    let best_cost = c.cost(best);
    if let Some(alt) = second_best(&c, best, |p| pairing_key(a, b, p) == key) {
        let margin = alt - best_cost;
        if margin < MATCHING_MARGIN {
            return Err(Error::AmbiguousMatching { from, to, margin });
        }
    }
    Ok(())
}

/// One irreducible piece of a circle path together with how many identical
/// copies of it occur.
#[derive(Clone, Debug)]
pub struct CirclePiece {
    pub multiplicity: usize,
    pub path: SampledQPath,
}

impl CirclePiece {
    /// The cycle length Q_j of the piece.
    pub fn cycle_len(&self) -> usize {
        self.path.q()
    }
}

/// Monodromy of a circle path: continuing branch `i` once around the circle
/// ends on branch `sigma[i]`. Also returns the chained orderings.
pub fn monodromy(g: &SampledQPath) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    if g.topology != Topology::Circle {
        return Err(Error::InvalidInput("monodromy needs a circle path".into()));
    }
    let orders = chain_orders(&g.values, true)?;
    let sigma = orders[g.len()].clone();
    Ok((sigma, orders))
}

fn cycles(sigma: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; sigma.len()];
    let mut out = Vec::new();
    for s in 0..sigma.len() {
        if seen[s] {
            continue;
        }
        let mut c = vec![s];
        seen[s] = true;
        let mut i = sigma[s];
        while i != s {
            seen[i] = true;
            c.push(i);
            i = sigma[i];
        }
        out.push(c);
    }
    out
}

/// Splits a circle path into irreducible pieces (single-cycle monodromy).
/// Identical pieces are merged and counted by `multiplicity`, so that
/// `sum(multiplicity * cycle_len) == Q`.
pub fn decompose_circle(g: &SampledQPath) -> Result<Vec<CirclePiece>> {
    let (sigma, orders) = monodromy(g)?;
    let k = g.len();
    let mut pieces: Vec<CirclePiece> = Vec::new();
    for c in cycles(&sigma) {
        let values = (0..k)
            .map(|l| {
                let idx: Vec<usize> = c.iter().map(|&i| orders[l][i]).collect();
                g.values[l].subset(&idx)
            })
            .collect::<Result<Vec<_>>>()?;
        let path = SampledQPath::circle(g.params.clone(), values)?;
        match pieces.iter_mut().find(|p| {
            p.path.q() == path.q() && p.path.values.iter().zip(&path.values).all(|(a, b)| a == b)
        }) {
            Some(p) => p.multiplicity += 1,
            None => pieces.push(CirclePiece { multiplicity: 1, path }),
        }
    }
    Ok(pieces)
}

/// A single-valued path on the Q_j-fold cover of the circle, sampled at the
/// cover angles `phi = theta_l + 2 pi m` for `m < Q_j`.
#[derive(Clone, Debug)]
pub struct UnrolledPath {
    pub params: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl UnrolledPath {
    /// Number of base samples per sheet.
    pub fn base_len(&self, q_j: usize) -> usize {
        self.points.len() / q_j
    }
}

/// Unrolls an irreducible circle path into one single-valued path on the
/// cover. The starting sheet is the first point of the first sample.
pub fn unroll(g: &SampledQPath, q_j: usize) -> Result<UnrolledPath> {
    Ok(unrollings(g, q_j)?.swap_remove(0))
}

/// All Q_j unrollings of an irreducible piece; they differ by a shift of
/// the cover angle by multiples of 2π.
pub fn unrollings(g: &SampledQPath, q_j: usize) -> Result<Vec<UnrolledPath>> {
    if g.q() != q_j {
        return Err(dim_err(format!("piece has q = {} but Q_j = {q_j}", g.q())));
    }
    let (sigma, orders) = monodromy(g)?;
    let cs = cycles(&sigma);
    if cs.len() != 1 {
        return Err(Error::NotIrreducible(format!(
            "monodromy has {} cycles",
            cs.len()
        )));
    }
    let cycle = &cs[0];
    let k = g.len();
    let mut out = Vec::with_capacity(q_j);
    for shift in 0..q_j {
        let mut params = Vec::with_capacity(k * q_j);
        let mut points = Vec::with_capacity(k * q_j);
        for m in 0..q_j {
            let sheet = cycle[(m + shift) % q_j];
            for l in 0..k {
                params.push(g.params[l] + TAU * m as f64);
                points.push(g.values[l].point(orders[l][sheet]).to_vec());
            }
        }
        out.push(UnrolledPath { params, points });
    }
    Ok(out)
}

/// Rolls a path on the Q_j-fold cover back to a Q_j-valued circle path.
pub fn roll(h: &UnrolledPath, q_j: usize) -> Result<SampledQPath> {
    if q_j == 0 || h.points.len() % q_j != 0 || h.points.is_empty() {
        return Err(dim_err("unrolled path length is not a multiple of Q_j"));
    }
    let k = h.points.len() / q_j;
    let params = h.params[..k].to_vec();
    let values = (0..k)
        .map(|l| {
            let pts: Vec<&[f64]> = (0..q_j).map(|m| h.points[l + m * k].as_slice()).collect();
            QPoint::from_points(&pts)
        })
        .collect::<Result<Vec<_>>>()?;
    SampledQPath::circle(params, values)
}
