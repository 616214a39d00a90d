//! The two explicit point-space constructions used by the maximum principle
//! and the decomposition of minimizers.

use super::{dist, metric_g, QPoint};
use crate::error::{Error, Result};

/// The retraction onto the closed ball of radius `r` around `center`.
///
/// Points inside the ball are fixed, points at distance at least `2r` go to
/// the center, and in between each cluster is shrunk towards its atom by the
/// factor `(2r - G) / G`. Requires `r < s(center) / 4`.
pub fn retraction_theta(center: &QPoint, r: f64, s: &QPoint) -> Result<QPoint> {
    center.same_shape(s)?;
    let sep = center.separation();
    if !(r > 0.0) || !(r < sep / 4.0) {
        return Err(Error::Precondition(format!(
            "retraction radius {r} must lie in (0, s(T)/4) with s(T) = {sep}"
        )));
    }
    let (g, m) = metric_g(center, s)?;
    if g <= r {
        return Ok(s.clone());
    }
    if g >= 2.0 * r {
        return Ok(center.clone());
    }
    let factor = (2.0 * r - g) / g;
    let n = s.n();
    let mut coords = s.coords().to_vec();
    for (i, &j) in m.perm.iter().enumerate() {
        let atom = center.point(i);
        // every point of S sits in the 2r-neighbourhood of the atom it is matched to
        assert!(
            dist(atom, s.point(j)) < 2.0 * r,
            "retraction: point {j} is not clustered around atom {i}"
        );
        for k in 0..n {
            coords[j * n + k] = atom[k] + factor * (s.point(j)[k] - atom[k]);
        }
    }
    QPoint::new(s.q(), n, coords)
}

/// β(ε, Q) = (ε/3)^(3^Q).
pub fn collapse_beta(eps: f64, q: usize) -> f64 {
    (eps / 3.0).powf(3f64.powi(q as i32))
}

/// Finds S with β(ε,Q) d(T) <= s(S) < +inf and G(S,T) <= ε s(S) by
/// recursively merging the closest pair of points.
///
/// The i-th point of the result is the image of the i-th point of `t`.
pub fn collapse_point(t: &QPoint, eps: f64) -> Result<QPoint> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Precondition(format!("eps = {eps} must lie in (0, 1)")));
    }
    if t.separation().is_infinite() {
        return Err(Error::Precondition("all points coincide".into()));
    }
    let pts: Vec<Vec<f64>> = t.points().map(<[f64]>::to_vec).collect();
    let out = collapse_rec(pts, eps);
    QPoint::from_points(&out)
}

fn diameter_of(pts: &[Vec<f64>], skip: usize) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if i != skip && j != skip {
                d = d.max(dist(&pts[i], &pts[j]));
            }
        }
    }
    d
}

fn collapse_rec(pts: Vec<Vec<f64>>, eps: f64) -> Vec<Vec<f64>> {
    let q = pts.len();
    if q <= 2 {
        return pts;
    }
    let mut d: f64 = 0.0;
    let mut s = f64::INFINITY;
    let mut pair = (0, 0);
    for i in 0..q {
        for j in i + 1..q {
            let dij = dist(&pts[i], &pts[j]);
            d = d.max(dij);
            if pts[i] != pts[j] && dij < s {
                s = dij;
                pair = (i, j);
            }
        }
    }
    if s >= collapse_beta(eps, q) * d {
        return pts;
    }
    let (a, b) = pair;
    let (drop, keep) = if diameter_of(&pts, b) > diameter_of(&pts, a) {
        (b, a)
    } else {
        (a, b)
    };
    let partner = pts[keep].clone();
    let mut rest = pts;
    rest.remove(drop);
    let sub = collapse_rec(rest, eps / 3.0);
    let mut nearest = 0;
    let mut best = f64::INFINITY;
    for (k, p) in sub.iter().enumerate() {
        let dk = dist(p, &partner);
        if dk < best {
            best = dk;
            nearest = k;
        }
    }
    let atom = sub[nearest].clone();
    let mut out = sub;
    out.insert(drop, atom);
    out
}
