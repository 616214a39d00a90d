use serde::{Deserialize, Serialize};

use super::profile::FrequencyProfile;
use crate::error::{Error, Result};

/// Default noise floor: ten times the default solver tolerance.
pub const RATE_NOISE_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// I(r) − α ≈ c r^gamma_hat; c is the largest residual when converged.
    pub c: f64,
    pub gamma_hat: Option<f64>,
    #[serde(rename = "H0")]
    pub h0: f64,
    #[serde(rename = "D0")]
    pub d0: f64,
    /// D0 / H0, which should equal α.
    pub ratio: f64,
    /// No residual I − α exceeds the noise floor.
    pub converged: bool,
    /// Radii used in the log-log fit.
    pub fitted_radii: Vec<f64>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len();
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}

/// Least-squares line y = a + b x.
fn line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

/// Fits I(r) − α ≈ C r^γ over radii where the residual exceeds the noise
/// floor, then H(r)/r^{2α+1} and D(r)/r^{2α} against r^γ for the limits
/// H0 and D0. With fewer than two such radii the profile counts as
/// converged and the limits are medians.
pub fn rate_check(p: &FrequencyProfile, alpha: f64, noise_floor: f64) -> Result<RateFit> {
    let rows: Vec<(f64, f64, f64, f64)> = (0..p.radii.len())
        .filter_map(|k| p.i[k].map(|i| (p.radii[k], i, p.h[k], p.d[k])))
        .collect();
    if rows.is_empty() {
        return Err(Error::DegenerateProfile);
    }
    let hn: Vec<f64> = rows.iter().map(|&(r, _, h, _)| h / r.powf(2.0 * alpha + 1.0)).collect();
    let dn: Vec<f64> = rows.iter().map(|&(r, _, _, d)| d / r.powf(2.0 * alpha)).collect();
    let above: Vec<(f64, f64)> =
        rows.iter().filter(|&&(_, i, _, _)| i - alpha > noise_floor).map(|&(r, i, _, _)| (r, i - alpha)).collect();
    if above.len() < 2 {
        let c = rows.iter().map(|&(_, i, _, _)| i - alpha).fold(0.0, f64::max);
        let (h0, d0) = (median(hn), median(dn));
        return Ok(RateFit { c, gamma_hat: None, h0, d0, ratio: d0 / h0, converged: true, fitted_radii: vec![] });
    }
    let lx: Vec<f64> = above.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = above.iter().map(|p| p.1.ln()).collect();
    let (lc, gamma) = line(&lx, &ly);
    let x: Vec<f64> = rows.iter().map(|&(r, ..)| r.powf(gamma)).collect();
    let (h0, _) = line(&x, &hn);
    let (d0, _) = line(&x, &dn);
    Ok(RateFit {
        c: lc.exp(),
        gamma_hat: Some(gamma),
        h0,
        d0,
        ratio: d0 / h0,
        converged: false,
        fitted_radii: above.iter().map(|p| p.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn synthetic(eps: f64) -> FrequencyProfile {
        // f = ζ + ε ζ³ on the double cover: H = 4π(r² + ε² r⁴), D = 2π(r + 3ε² r³)
        let radii: Vec<f64> = (1..=9).map(|k| 0.1 * k as f64).collect();
        let h: Vec<f64> = radii.iter().map(|r| 4.0 * PI * (r * r + eps * eps * r.powi(4))).collect();
        let d: Vec<f64> = radii.iter().map(|r| 2.0 * PI * (r + 3.0 * eps * eps * r.powi(3))).collect();
        let i = radii.iter().zip(d.iter().zip(&h)).map(|(r, (d, h))| Some(r * d / h)).collect();
        FrequencyProfile { center: [0.0, 0.0], radii, d, h, i, mesh_size: 0.01 }
    }

    #[test]
    fn homogeneous_is_converged() {
        let fit = rate_check(&synthetic(0.0), 0.5, RATE_NOISE_FLOOR).unwrap();
        assert!(fit.converged);
        assert!((fit.h0 - 4.0 * PI).abs() < 1e-12 && (fit.d0 - 2.0 * PI).abs() < 1e-12);
        assert!((fit.ratio - 0.5).abs() < 1e-14);
    }

    #[test]
    fn perturbed_rate() {
        let fit = rate_check(&synthetic(0.1), 0.5, RATE_NOISE_FLOOR).unwrap();
        assert!(!fit.converged);
        let g = fit.gamma_hat.unwrap();
        assert!(g > 1.8 && g < 2.2, "{fit:?}");
        assert!((fit.h0 - 4.0 * PI).abs() < 0.01 * 4.0 * PI, "{fit:?}");
    }
}
