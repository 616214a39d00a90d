//! Lipschitz extension of Q-valued functions from part of a planar grid to
//! all of it, and interpolation between two circle traces on an annulus.

use rayon::prelude::*;

use crate::error::Result;
use crate::qpoint::{geodesic, QPoint};

mod annulus;
mod grid;
mod homotopy;
mod whitney;

pub use annulus::{interpolate_annulus, AnnulusInterpolation};
pub use grid::{Grid, GridQFunction};
pub use homotopy::{homotopy_extend_square, square_boundary_nodes, square_interior_nodes, SquareExtension};
pub use whitney::{whitney_decompose, WhitneyCube, WhitneyCubes};

/// Extends `f` to every node of its grid.
///
/// The undefined nodes are covered by [`whitney_decompose`]. Square corners
/// take the value of the nearest defined node (lowest index on ties), the
/// remaining nodes on square edges are filled by geodesic interpolation
/// between the nearest filled nodes along the edge, and square interiors by
/// [`homotopy_extend_square`]. Defined nodes are never changed.
pub fn lipschitz_extend(f: &GridQFunction) -> Result<GridQFunction> {
    let grid = *f.grid();
    let cubes = whitney_decompose(&grid, f.mask())?;
    let defined = f.defined_nodes();
    let mut vals: Vec<Option<QPoint>> = (0..grid.len()).map(|v| f.value(v)).collect();
    let at = |c: [usize; 2], off: [usize; 2]| grid.index(c[0] + off[0], c[1] + off[1]);

    for cube in &cubes.cubes {
        let s = cube.side;
        for off in [[0, 0], [s, 0], [s, s], [0, s]] {
            let v = at(cube.corner, off);
            if vals[v].is_none() {
                let [i, j] = grid.coords(v);
                let mut best = (usize::MAX, 0usize);
                for &d in &defined {
                    let [a, b] = grid.coords(d);
                    let d2 = (a as i64 - i as i64).pow(2) as usize + (b as i64 - j as i64).pow(2) as usize;
                    if d2 < best.0 {
                        best = (d2, d);
                    }
                }
                vals[v] = f.value(best.1);
            }
        }
    }

    for cube in &cubes.cubes {
        let s = cube.side;
        let sides: [([usize; 2], [usize; 2]); 4] =
            [([0, 0], [1, 0]), ([s, 0], [0, 1]), ([0, s], [1, 0]), ([0, 0], [0, 1])];
        for (start, dir) in sides {
            let line: Vec<usize> = (0..=s)
                .map(|t| at(cube.corner, [start[0] + t * dir[0], start[1] + t * dir[1]]))
                .collect();
            let set: Vec<usize> = (0..=s).filter(|&t| vals[line[t]].is_some()).collect();
            for w in set.windows(2) {
                let (p, q) = (w[0], w[1]);
                if q - p < 2 {
                    continue;
                }
                let (a, b) = (vals[line[p]].clone().expect("set"), vals[line[q]].clone().expect("set"));
                for t in p + 1..q {
                    vals[line[t]] = Some(geodesic(&a, &b, (t - p) as f64 / (q - p) as f64)?);
                }
            }
        }
    }

    let fills = cubes
        .cubes
        .par_iter()
        .filter(|c| c.side >= 2)
        .map(|cube| {
            let s = cube.side;
            let boundary: Vec<QPoint> = square_boundary_nodes(s)
                .into_iter()
                .map(|o| vals[at(cube.corner, o)].clone().expect("skeleton filled"))
                .collect();
            let ext = homotopy_extend_square(&boundary)?;
            let nodes: Vec<usize> = square_interior_nodes(s).into_iter().map(|o| at(cube.corner, o)).collect();
            Ok((nodes, ext.interior))
        })
        .collect::<Result<Vec<_>>>()?;
    for (nodes, values) in fills {
        for (v, val) in nodes.into_iter().zip(values) {
            vals[v] = Some(val);
        }
    }
    debug_assert!(vals.iter().all(Option::is_some));
    GridQFunction::new(grid, vals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_values_extend_constantly() {
        let grid = Grid::new([0.0, 0.0], 0.1, 12, 9).unwrap();
        let v = QPoint::from_points(&[[0.5, 1.0], [-2.0, 0.0]]).unwrap();
        let mut vals = vec![None; grid.len()];
        vals[3] = Some(v.clone());
        vals[70] = Some(v.clone());
        let g = lipschitz_extend(&GridQFunction::new(grid, vals).unwrap()).unwrap();
        assert!(g.is_complete());
        assert!((0..grid.len()).all(|n| g.value(n).unwrap() == v));
    }

    #[test]
    fn defined_nodes_are_kept() {
        let grid = Grid::new([-1.0, -1.0], 0.2, 11, 11).unwrap();
        let mask: Vec<bool> = (0..grid.len()).map(|v| v % 7 == 0).collect();
        let f = GridQFunction::from_fn(grid, &mask, |p| QPoint::from_scalars(&[p[0] * p[1], p[0] + p[1]]).unwrap()).unwrap();
        let g = lipschitz_extend(&f).unwrap();
        for v in f.defined_nodes() {
            assert_eq!(g.value(v), f.value(v));
        }
        assert!(g.grid_lipschitz() <= 20.0 * f.lipschitz());
    }
}
