use std::f64::consts::TAU;
use std::sync::Arc;

use crate::dirichlet::{Mesh, QFunction};
use crate::error::{dim_err, Error, Result};
use crate::qpoint::{geodesic, metric_g, QPoint};
use crate::selection::{SampledQPath, Topology};

/// Result of [`interpolate_annulus`].
#[derive(Clone, Debug)]
pub struct AnnulusInterpolation {
    /// The interpolating function on the annulus r(1-ε) ≤ |x| ≤ r.
    pub function: QFunction,
    pub energy: f64,
    /// Tangential Dirichlet energy of the outer trace on ∂B_r.
    pub outer_dirichlet: f64,
    /// Tangential Dirichlet energy of the inner trace on ∂B_{r(1-ε)}.
    pub inner_dirichlet: f64,
    /// ∫_{∂B_r} G(g(x), f((1-ε)x))² ds.
    pub mismatch: f64,
    /// ε r (outer + inner) + mismatch / (ε r).
    pub bound: f64,
    /// energy / bound, or 0 when both vanish.
    pub constant: f64,
}

/// Interpolates between `g_outer` on the circle of radius `r` and `g_inner`
/// on the circle of radius r(1-ε). Both traces must be sampled at the same
/// angles. The annulus mesh has one vertex per sample angle on each of
/// ⌈εK/2π⌉ + 1 rings, and along each ray the values follow the geodesic
/// from the inner to the outer value.
pub fn interpolate_annulus(g_outer: &SampledQPath, g_inner: &SampledQPath, r: f64, eps: f64) -> Result<AnnulusInterpolation> {
    if g_outer.topology != Topology::Circle || g_inner.topology != Topology::Circle {
        return Err(Error::InvalidInput("annulus traces must be circle paths".into()));
    }
    let k = g_outer.len();
    if g_inner.len() != k {
        return Err(dim_err(format!("{k} outer samples against {} inner samples", g_inner.len())));
    }
    g_outer.values[0].same_shape(&g_inner.values[0])?;
    if g_outer.params.iter().zip(&g_inner.params).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(dim_err("outer and inner traces are sampled at different angles"));
    }
    if k < 3 {
        return Err(Error::InvalidInput("at least three samples per circle are needed".into()));
    }
    if !(r > 0.0 && r.is_finite()) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput("need r > 0 and 0 < eps < 1".into()));
    }
    let theta = &g_outer.params;
    let r_in = r * (1.0 - eps);
    let rings = ((eps * k as f64 / TAU).ceil() as usize).max(1);

    let mut vertices = Vec::with_capacity((rings + 1) * k);
    let mut values = Vec::with_capacity((rings + 1) * k);
    for j in 0..=rings {
        let s = j as f64 / rings as f64;
        let rho = r_in + s * (r - r_in);
        for l in 0..k {
            vertices.push([rho * theta[l].cos(), rho * theta[l].sin()]);
            values.push(geodesic(&g_inner.values[l], &g_outer.values[l], s)?);
        }
    }
    let mut triangles = Vec::with_capacity(2 * rings * k);
    for j in 0..rings {
        for l in 0..k {
            let (a, b) = (j * k + l, j * k + (l + 1) % k);
            let (c, d) = (a + k, b + k);
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    let outer = (rings * k..(rings + 1) * k).collect();
    let inner = (0..k).collect();
    let mesh = Arc::new(Mesh::with_holes(vertices, triangles, outer, vec![inner])?);
    let mut function = QFunction::from_values(mesh, &values)?;
    function.match_edges();
    let energy = function.energy();

    let gaps: Vec<f64> = (0..k).map(|l| (theta[(l + 1) % k] - theta[l]).rem_euclid(TAU)).collect();
    let tangential = |vals: &[QPoint], rho: f64| -> Result<f64> {
        let mut e = 0.0;
        for l in 0..k {
            e += metric_g(&vals[l], &vals[(l + 1) % k])?.0.powi(2) / (rho * gaps[l]);
        }
        Ok(e)
    };
    let outer_dirichlet = tangential(&g_outer.values, r)?;
    let inner_dirichlet = tangential(&g_inner.values, r_in)?;
    let mut mismatch = 0.0;
    for l in 0..k {
        let w = 0.5 * (gaps[(l + k - 1) % k] + gaps[l]) * r;
        mismatch += metric_g(&g_outer.values[l], &g_inner.values[l])?.0.powi(2) * w;
    }
    let bound = eps * r * (outer_dirichlet + inner_dirichlet) + mismatch / (eps * r);
    let constant = if bound > 0.0 { energy / bound } else { 0.0 };
    Ok(AnnulusInterpolation { function, energy, outer_dirichlet, inner_dirichlet, mismatch, bound, constant })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_constant_traces_cost_nothing() {
        let v = QPoint::from_points(&[[1.0, 0.0], [0.0, 3.0]]).unwrap();
        let g = SampledQPath::circle_from_fn(32, |_| v.clone()).unwrap();
        let a = interpolate_annulus(&g, &g, 1.0, 0.25).unwrap();
        assert_eq!(a.energy, 0.0);
        assert_eq!(a.constant, 0.0);
        assert_eq!(a.function.mesh().holes().len(), 1);
        assert!(a.function.mesh().edges().iter().all(|e| e.weight >= -1e-12));
    }

    #[test]
    fn mismatched_traces_are_rejected() {
        let v = QPoint::from_scalars(&[0.0, 1.0]).unwrap();
        let g = SampledQPath::circle_from_fn(16, |_| v.clone()).unwrap();
        let h = SampledQPath::circle_from_fn(12, |_| v.clone()).unwrap();
        assert!(interpolate_annulus(&g, &h, 1.0, 0.1).is_err());
        assert!(interpolate_annulus(&g, &g, 1.0, 1.0).is_err());
        let w = SampledQPath::circle_from_fn(16, |_| QPoint::from_scalars(&[0.0]).unwrap()).unwrap();
        assert!(interpolate_annulus(&g, &w, 1.0, 0.1).is_err());
    }

    #[test]
    fn radial_interpolation_of_a_linear_map() {
        let trace = |rho: f64| SampledQPath::circle_from_fn(96, |t| QPoint::from_scalars(&[rho * t.cos()]).unwrap()).unwrap();
        let a = interpolate_annulus(&trace(1.0), &trace(0.7), 1.0, 0.3).unwrap();
        let exact = 0.5 * std::f64::consts::TAU * (1.0 - 0.49);
        assert!((a.energy - exact).abs() < 0.01 * exact, "{} vs {exact}", a.energy);
    }
}
