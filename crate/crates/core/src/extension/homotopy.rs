use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::qpoint::{geodesic, metric_g, QPoint};
use crate::selection::{squad_split, SquadSplit};

/// Boundary nodes of a square of side `k` in local node coordinates,
/// counter-clockwise from (0, 0). There are 4k of them.
pub fn square_boundary_nodes(k: usize) -> Vec<[usize; 2]> {
    let mut out = Vec::with_capacity(4 * k);
    out.extend((0..k).map(|t| [t, 0]));
    out.extend((0..k).map(|t| [k, t]));
    out.extend((0..k).map(|t| [k - t, k]));
    out.extend((0..k).map(|t| [0, k - t]));
    out
}

/// Interior nodes of a square of side `k`, row by row.
pub fn square_interior_nodes(k: usize) -> Vec<[usize; 2]> {
    (1..k).flat_map(|b| (1..k).map(move |a| [a, b])).collect()
}

#[derive(Clone, Debug)]
pub struct SquareExtension {
    /// Values at [`square_interior_nodes`].
    pub interior: Vec<QPoint>,
    /// Multiplicities of the pieces extended separately, in label order.
    pub pieces: Vec<usize>,
}

/// Extends values on the boundary nodes of a square (ordered as in
/// [`square_boundary_nodes`]) to its interior nodes.
///
/// When two points of the value at the corner (0, 0) are further apart than
/// 3 (Q-1) Lip diam the boundary is split into squads that are extended
/// separately. Otherwise the extension is the cone
/// f(y) = Σ_i ⟦t h_i(z) + (1 - t) P⟧, where t is the max-norm radius of y
/// about the center, z the radial projection of y to the boundary, h(z) the
/// geodesic interpolation between neighbouring boundary nodes and P the
/// first point of the corner value.
pub fn homotopy_extend_square(boundary: &[QPoint]) -> Result<SquareExtension> {
    if boundary.is_empty() || boundary.len() % 4 != 0 {
        return Err(Error::InvalidInput("a square boundary has 4k nodes".into()));
    }
    for b in boundary {
        boundary[0].same_shape(b)?;
    }
    let mut pieces = Vec::new();
    let interior = extend(boundary, &mut pieces)?;
    Ok(SquareExtension { interior, pieces })
}

fn extend(boundary: &[QPoint], pieces: &mut Vec<usize>) -> Result<Vec<QPoint>> {
    let k = boundary.len() / 4;
    let nodes = square_boundary_nodes(k);
    let lip = boundary_lipschitz(boundary, &nodes)?;
    let samples: Vec<(Vec<f64>, QPoint)> = nodes
        .iter()
        .zip(boundary)
        .map(|(p, v)| (vec![p[0] as f64, p[1] as f64], v.clone()))
        .collect();
    if let SquadSplit::Split { left, right, .. } = squad_split(&samples, 0, lip, SQRT_2 * k as f64)? {
        let a = extend(&left, pieces)?;
        let b = extend(&right, pieces)?;
        return a.iter().zip(&b).map(|(x, y)| x.concat(y)).collect();
    }
    pieces.push(boundary[0].q());
    let p = boundary[0].point(0).to_vec();
    let half = 0.5 * k as f64;
    square_interior_nodes(k)
        .into_iter()
        .map(|[a, b]| {
            let d = [a as f64 - half, b as f64 - half];
            let t = d[0].abs().max(d[1].abs()) / half;
            if t == 0.0 {
                return Ok(QPoint::repeated(boundary[0].q(), &p));
            }
            let z = [half + d[0] / t, half + d[1] / t];
            let u = arclength(z, k as f64);
            let l = (u.floor() as usize).min(4 * k - 1);
            let s = u - l as f64;
            let h = if s == 0.0 {
                boundary[l].clone()
            } else {
                geodesic(&boundary[l], &boundary[(l + 1) % (4 * k)], s)?
            };
            Ok(h.scaled_about(&p, t))
        })
        .collect()
}

/// Position of a boundary point along the counter-clockwise boundary.
fn arclength(z: [f64; 2], k: f64) -> f64 {
    let (dx, dy) = (z[0] - 0.5 * k, z[1] - 0.5 * k);
    if dx.abs() >= dy.abs() {
        if dx > 0.0 {
            k + z[1]
        } else {
            3.0 * k + (k - z[1])
        }
    } else if dy > 0.0 {
        2.0 * k + (k - z[0])
    } else {
        z[0]
    }
}

fn boundary_lipschitz(boundary: &[QPoint], nodes: &[[usize; 2]]) -> Result<f64> {
    let mut lip: f64 = 0.0;
    for a in 0..boundary.len() {
        for b in a + 1..boundary.len() {
            let dx = nodes[a][0] as f64 - nodes[b][0] as f64;
            let dy = nodes[a][1] as f64 - nodes[b][1] as f64;
            lip = lip.max(metric_g(&boundary[a], &boundary[b])?.0 / dx.hypot(dy));
        }
    }
    Ok(lip)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_nodes_map_to_their_own_position() {
        let k = 6;
        for (l, o) in square_boundary_nodes(k).into_iter().enumerate() {
            let u = arclength([o[0] as f64, o[1] as f64], k as f64);
            assert!((u - l as f64).abs() < 1e-12 || (l == 0 && u == 4.0 * k as f64));
        }
    }

    #[test]
    fn constant_boundary_extends_constantly() {
        let v = QPoint::from_points(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        let ext = homotopy_extend_square(&vec![v.clone(); 20]).unwrap();
        assert_eq!(ext.interior.len(), 16);
        assert!(ext.interior.iter().all(|x| *x == v));
        assert_eq!(ext.pieces, vec![3]);
    }

    #[test]
    fn far_apart_sheets_are_extended_separately() {
        let k = 4;
        let boundary: Vec<QPoint> = square_boundary_nodes(k)
            .into_iter()
            .map(|o| QPoint::from_scalars(&[0.1 * o[0] as f64, 100.0 + 0.1 * o[1] as f64]).unwrap())
            .collect();
        let ext = homotopy_extend_square(&boundary).unwrap();
        assert_eq!(ext.pieces, vec![1, 1]);
        let lower: Vec<QPoint> = boundary.iter().map(|b| b.subset(&[0]).unwrap()).collect();
        let upper: Vec<QPoint> = boundary.iter().map(|b| b.subset(&[1]).unwrap()).collect();
        let a = homotopy_extend_square(&lower).unwrap().interior;
        let b = homotopy_extend_square(&upper).unwrap().interior;
        for (i, x) in ext.interior.iter().enumerate() {
            assert_eq!(*x, a[i].concat(&b[i]).unwrap());
            assert!(x.point(0)[0] < 1.0 && x.point(1)[0] > 99.0);
        }
    }

    #[test]
    fn rejects_bad_lengths() {
        let v = QPoint::from_scalars(&[0.0]).unwrap();
        assert!(homotopy_extend_square(&vec![v.clone(); 6]).is_err());
        assert!(homotopy_extend_square(&[]).is_err());
        assert!(homotopy_extend_square(&vec![v; 4]).unwrap().interior.is_empty());
    }
}
