use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::error::{dim_err, Error, Result};

/// A dyadic square of the grid in node units: nodes (i, j) with
/// `corner[0] <= i <= corner[0] + side` and likewise for j.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCube {
    pub corner: [usize; 2],
    pub side: usize,
    /// Distance in node units from the square's center to the nearest
    /// defined node.
    pub dist: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCubes {
    pub cubes: Vec<WhitneyCube>,
    /// Smallest c with c⁻¹ dist ≤ side ≤ c dist on every cube (1 if empty).
    pub c: f64,
}

/// Quadtree decomposition of the undefined part of the grid. A square is
/// kept when it lies in the grid, contains an undefined node and either has
/// side 1 or is at least its diameter away from the defined set; otherwise
/// it is split into four.
pub fn whitney_decompose(grid: &Grid, mask: &[bool]) -> Result<WhitneyCubes> {
    if mask.len() != grid.len() {
        return Err(dim_err("one mask entry per node expected"));
    }
    let defined: Vec<[f64; 2]> = (0..grid.len())
        .filter(|&v| mask[v])
        .map(|v| {
            let [i, j] = grid.coords(v);
            [i as f64, j as f64]
        })
        .collect();
    if defined.is_empty() {
        return Err(Error::InvalidInput("the defined set is empty".into()));
    }
    let (mx, my) = (grid.nx - 1, grid.ny - 1);
    let mut root = 1usize;
    while root < mx.max(my) {
        root *= 2;
    }
    let nearest = |lo: [f64; 2], hi: [f64; 2]| {
        defined
            .iter()
            .map(|d| {
                let ex = (lo[0] - d[0]).max(d[0] - hi[0]).max(0.0);
                let ey = (lo[1] - d[1]).max(d[1] - hi[1]).max(0.0);
                ex.hypot(ey)
            })
            .fold(f64::INFINITY, f64::min)
    };
    let mut cubes = Vec::new();
    let mut stack = vec![([0usize, 0usize], root)];
    while let Some((c, s)) = stack.pop() {
        if c[0] >= mx || c[1] >= my {
            continue;
        }
        let (i1, j1) = ((c[0] + s).min(mx), (c[1] + s).min(my));
        let has_undefined = (c[1]..=j1).any(|j| (c[0]..=i1).any(|i| !mask[grid.index(i, j)]));
        if !has_undefined {
            continue;
        }
        let inside = c[0] + s <= mx && c[1] + s <= my;
        let lo = [c[0] as f64, c[1] as f64];
        let hi = [(c[0] + s) as f64, (c[1] + s) as f64];
        if inside && (s == 1 || s as f64 * 2f64.sqrt() <= nearest(lo, hi)) {
            let mid = [lo[0] + 0.5 * s as f64, lo[1] + 0.5 * s as f64];
            cubes.push(WhitneyCube { corner: c, side: s, dist: nearest(mid, mid) });
            continue;
        }
        let h = s / 2;
        for k in (0..4).rev() {
            stack.push(([c[0] + h * (k & 1), c[1] + h * (k >> 1)], h));
        }
    }
    let c = cubes
        .iter()
        .map(|q| {
            let s = q.side as f64;
            (s / q.dist).max(q.dist / s)
        })
        .fold(1.0, f64::max);
    Ok(WhitneyCubes { cubes, c })
}
