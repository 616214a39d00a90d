use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirichlet::{fmt17, QFunction};
use crate::error::{Error, Result};

/// Circle samples used for boundary integrals.
pub const CIRCLE_SAMPLES: usize = 512;

/// D, H and I = rD/H of a function around a center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    pub center: [f64; 2],
    pub radii: Vec<f64>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    #[serde(rename = "H")]
    pub h: Vec<f64>,
    #[serde(rename = "I")]
    pub i: Vec<Option<f64>>,
    pub mesh_size: f64,
}

impl FrequencyProfile {
    /// CSV with columns r,D,H,I; I is empty where H vanishes.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,D,H,I\n");
        for k in 0..self.radii.len() {
            let i = self.i[k].map(fmt17).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{}", fmt17(self.radii[k]), fmt17(self.d[k]), fmt17(self.h[k]), i);
        }
        s
    }
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Signed area of the intersection of the disk |x| ≤ r with the triangle
/// (0, a, b).
fn sector_clip(a: [f64; 2], b: [f64; 2], r: f64) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let (aa, bb) = (d[0] * d[0] + d[1] * d[1], a[0] * d[0] + a[1] * d[1]);
    let cc = a[0] * a[0] + a[1] * a[1] - r * r;
    let mut cuts = vec![0.0];
    if aa > 0.0 {
        let disc = bb * bb - aa * cc;
        if disc > 0.0 {
            let s = disc.sqrt();
            for t in [(-bb - s) / aa, (-bb + s) / aa] {
                if t > 0.0 && t < 1.0 {
                    cuts.push(t);
                }
            }
        }
    }
    cuts.push(1.0);
    let at = |t: f64| [a[0] + t * d[0], a[1] + t * d[1]];
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (p, q) = (at(w[0]), at(w[1]));
        let m = at(0.5 * (w[0] + w[1]));
        if m[0] * m[0] + m[1] * m[1] <= r * r {
            area += 0.5 * cross(p, q);
        } else {
            let ang = cross(p, q).atan2(p[0] * q[0] + p[1] * q[1]);
            area += 0.5 * r * r * ang;
        }
    }
    area
}

/// Area of the intersection of a triangle with the disk B_r(center).
pub fn triangle_disk_area(tri: [[f64; 2]; 3], center: [f64; 2], r: f64) -> f64 {
    let p = tri.map(|v| [v[0] - center[0], v[1] - center[1]]);
    (0..3).map(|k| sector_clip(p[k], p[(k + 1) % 3], r)).sum::<f64>().abs()
}

fn check_center(f: &QFunction, center: [f64; 2]) -> Result<f64> {
    let mesh = f.mesh();
    let v = mesh.vertex(mesh.nearest_vertex(center));
    if (v[0] - center[0]).hypot(v[1] - center[1]) > 1e-9 * (1.0 + center[0].hypot(center[1])) {
        return Err(Error::Precondition(format!("center {center:?} is not a mesh vertex")));
    }
    // distance from the center to the boundary polygon
    let bl = mesh.boundary_loop();
    let mut reach = f64::INFINITY;
    for k in 0..bl.len() {
        let (a, b) = (mesh.vertex(bl[k]), mesh.vertex(bl[(k + 1) % bl.len()]));
        let d = [b[0] - a[0], b[1] - a[1]];
        let t = (((center[0] - a[0]) * d[0] + (center[1] - a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
        reach = reach.min((a[0] + t * d[0] - center[0]).hypot(a[1] + t * d[1] - center[1]));
    }
    Ok(reach)
}

fn circle_point(center: [f64; 2], r: f64, k: usize, samples: usize) -> ([f64; 2], [f64; 2]) {
    let t = std::f64::consts::TAU * k as f64 / samples as f64;
    let nu = [t.cos(), t.sin()];
    ([center[0] + r * nu[0], center[1] + r * nu[1]], nu)
}

pub(crate) fn energy_in_ball(f: &QFunction, tri_energy: &[f64], center: [f64; 2], r: f64) -> f64 {
    let mesh = f.mesh();
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let ps = tri.map(|i| mesh.vertex(i));
        let far = ps.iter().map(|p| (p[0] - center[0]).hypot(p[1] - center[1])).fold(0.0, f64::max);
        if far <= r {
            total += tri_energy[t];
        } else if tri_energy[t] != 0.0 {
            let frac = triangle_disk_area(ps, center, r) / mesh.triangle_area(t);
            total += tri_energy[t] * frac.min(1.0);
        }
    }
    total
}

pub(crate) fn height(f: &QFunction, center: [f64; 2], r: f64, samples: usize) -> f64 {
    let ds = std::f64::consts::TAU * r / samples as f64;
    (0..samples)
        .map(|k| {
            let (p, _) = circle_point(center, r, k, samples);
            f.sample_sheets(p).0.iter().map(|x| x * x).sum::<f64>()
        })
        .sum::<f64>()
        * ds
}

fn validate_radii(radii: &[f64], reach: f64) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::InvalidInput("no radii".into()));
    }
    for w in radii.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidInput("radii must be increasing".into()));
        }
    }
    if !(radii[0] > 0.0) || radii[radii.len() - 1] > reach * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!("radii must lie in (0, {reach}]")));
    }
    Ok(())
}

/// D(r) from triangle energies clipped by area fraction, H(r) by the
/// trapezoidal rule on [`CIRCLE_SAMPLES`] circle points.
pub fn profile(f: &QFunction, center: [f64; 2], radii: &[f64]) -> Result<FrequencyProfile> {
    profile_with_samples(f, center, radii, CIRCLE_SAMPLES)
}

pub fn profile_with_samples(f: &QFunction, center: [f64; 2], radii: &[f64], samples: usize) -> Result<FrequencyProfile> {
    let reach = check_center(f, center)?;
    validate_radii(radii, reach)?;
    let tri_energy: Vec<f64> = (0..f.mesh().triangles().len()).map(|t| f.triangle_energy(t)).collect();
    let dh: Vec<(f64, f64)> = radii
        .par_iter()
        .map(|&r| (energy_in_ball(f, &tri_energy, center, r), height(f, center, r, samples)))
        .collect();
    let (d, h): (Vec<f64>, Vec<f64>) = dh.into_iter().unzip();
    if h.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateProfile);
    }
    let i = radii
        .iter()
        .zip(d.iter().zip(&h))
        .map(|(r, (d, h))| (*h > 0.0).then(|| r * d / h))
        .collect();
    Ok(FrequencyProfile { center, radii: radii.to_vec(), d, h, i, mesh_size: f.mesh().mesh_size() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    pub pass: bool,
    /// Largest I(r₁) − I(r₂) over r₁ < r₂; nonpositive for monotone profiles.
    pub worst_violation: f64,
}

/// Checks I(r₂) ≥ I(r₁) − tol for all r₁ < r₂ where I is defined.
pub fn check_monotonicity(p: &FrequencyProfile, tol: f64) -> MonotonicityCheck {
    let mut worst = f64::NEG_INFINITY;
    let mut running_max = f64::NEG_INFINITY;
    for i in p.i.iter().flatten() {
        worst = worst.max(running_max - i);
        running_max = running_max.max(*i);
    }
    if !worst.is_finite() {
        worst = 0.0;
    }
    MonotonicityCheck { pass: worst <= tol, worst_violation: worst }
}

/// Residuals of the planar first-variation identities on ∂B_r, each
/// relative to its dominant term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    pub r: f64,
    /// |∫|Df|² − 2∫Σ|∂_ν f_i|²| / ∫|Df|² over ∂B_r.
    pub cono: f64,
    /// |D(r) − ∫Σ⟨∂_ν f_i, f_i⟩| / D(r).
    pub perparti: f64,
    /// |H′(r) − H(r)/r − 2D(r)| / (H(r)/r + 2D(r)), H′ by central differences.
    pub h_prime: f64,
    pub energy: f64,
    pub height: f64,
}

/// Relative residual; scales at or below `floor` count as zero.
fn rel(residual: f64, scale: f64, floor: f64) -> f64 {
    if scale > floor {
        residual.abs() / scale
    } else if residual.abs() <= floor {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn check_variational_identities(f: &QFunction, center: [f64; 2], r: f64) -> Result<IdentityResiduals> {
    let reach = check_center(f, center)?;
    let step = 0.5 * f.mesh().mesh_size();
    validate_radii(&[r - step, r, r + step], reach)?;
    let tri_energy: Vec<f64> = (0..f.mesh().triangles().len()).map(|t| f.triangle_energy(t)).collect();
    let d = energy_in_ball(f, &tri_energy, center, r);
    let samples = CIRCLE_SAMPLES;
    let ds = std::f64::consts::TAU * r / samples as f64;
    let (q, n) = (f.q(), f.n());
    let (mut full, mut normal, mut mixed) = (0.0, 0.0, 0.0);
    for k in 0..samples {
        let (p, nu) = circle_point(center, r, k, samples);
        let (vals, t) = f.sample_sheets(p);
        let grad = f.triangle_gradient(t);
        for c in 0..q * n {
            let (gx, gy) = (grad[2 * c], grad[2 * c + 1]);
            let dn = gx * nu[0] + gy * nu[1];
            full += gx * gx + gy * gy;
            normal += dn * dn;
            mixed += dn * vals[c];
        }
    }
    let (full, normal, mixed) = (full * ds, normal * ds, mixed * ds);
    let h = height(f, center, r, samples);
    let dh = (height(f, center, r + step, samples) - height(f, center, r - step, samples)) / (2.0 * step);
    let floor = 1e-12 * (h / r).max(f64::MIN_POSITIVE);
    Ok(IdentityResiduals {
        r,
        cono: rel(full - 2.0 * normal, full, floor),
        perparti: rel(d - mixed, d.max(mixed.abs()), floor),
        h_prime: rel(dh - h / r - 2.0 * d, (h / r + 2.0 * d).max(dh.abs()), floor),
        energy: d,
        height: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirichlet::{analytic_example, build_disk_mesh, HomogeneousPiece};
    use crate::qpoint::QPoint;
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn clipped_areas() {
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!((triangle_disk_area(tri, [0.0, 0.0], 10.0) - 0.5).abs() < 1e-15);
        assert!((triangle_disk_area(tri, [0.0, 0.0], 0.5) - PI / 16.0).abs() < 1e-15);
        assert_eq!(triangle_disk_area(tri, [5.0, 5.0], 1.0), 0.0);
        // a disk inside the triangle
        let big = [[-10.0, -10.0], [10.0, -10.0], [0.0, 10.0]];
        assert!((triangle_disk_area(big, [0.0, 0.0], 1.0) - PI).abs() < 1e-13);
        // half disk cut by an edge through the center
        let half = [[-5.0, 0.0], [5.0, 0.0], [0.0, 5.0]];
        assert!((triangle_disk_area(half, [0.0, 0.0], 1.0) - PI / 2.0).abs() < 1e-13);
    }

    #[test]
    fn square_root_profile() {
        let mesh = Arc::new(build_disk_mesh(1.0, 64).unwrap());
        let id = HomogeneousPiece { k: 1, l: [vec![1.0, 0.0], vec![0.0, 1.0]] };
        let (f, _) = analytic_example(1, 2, 0, &[id], mesh).unwrap();
        let radii = [0.2, 0.4, 0.6, 0.8];
        let p = profile(&f, [0.0, 0.0], &radii).unwrap();
        for k in 0..radii.len() {
            let r = radii[k];
            assert!((p.d[k] - 2.0 * PI * r).abs() < 0.03 * 2.0 * PI * r, "{:?}", p);
            assert!((p.h[k] - 4.0 * PI * r * r).abs() < 0.03 * 4.0 * PI * r * r, "{:?}", p);
            assert!((p.i[k].unwrap() - 0.5).abs() < 0.03 * 0.5);
        }
        assert!(check_monotonicity(&p, 5.0 * p.mesh_size).pass);
        assert!(p.to_csv().starts_with("r,D,H,I\n2.0000000000000001e-1,"));
    }

    #[test]
    fn constant_profile() {
        let mesh = Arc::new(build_disk_mesh(1.0, 8).unwrap());
        let f = QFunction::constant(mesh, &QPoint::repeated(2, &[1.0, 0.0]));
        let p = profile(&f, [0.0, 0.0], &[0.5]).unwrap();
        assert_eq!(p.d[0], 0.0);
        assert!((p.h[0] - 2.0 * PI).abs() < 1e-12);
        assert_eq!(p.i[0], Some(0.0));
        let zero = QFunction::constant(Arc::clone(f.mesh_arc()), &QPoint::zero(2, 2));
        assert!(matches!(profile(&zero, [0.0, 0.0], &[0.5]), Err(Error::DegenerateProfile)));
        let id = check_variational_identities(&f, [0.0, 0.0], 0.5).unwrap();
        assert_eq!((id.cono, id.perparti), (0.0, 0.0));
    }

    #[test]
    fn monotonicity_detects_drops() {
        let p = FrequencyProfile {
            center: [0.0, 0.0],
            radii: vec![0.1, 0.2, 0.3],
            d: vec![1.0; 3],
            h: vec![1.0; 3],
            i: vec![Some(0.5), Some(0.4), Some(0.6)],
            mesh_size: 0.1,
        };
        let c = check_monotonicity(&p, 0.05);
        assert!(!c.pass);
        assert!((c.worst_violation - 0.1).abs() < 1e-15);
    }
}
