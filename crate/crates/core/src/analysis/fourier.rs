use std::f64::consts::{PI, TAU};

use num_rational::Ratio;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::{decompose_circle, unroll, SampledQPath};

/// Fourier coefficients of one irreducible piece, unrolled on its Q_j-fold
/// cover with ψ = φ/Q_j ∈ [0, 2π):
/// γ(ψ) = a_0/2 + Σ_l r^l (a_l cos lψ + b_l sin lψ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierPiece {
    pub multiplicity: usize,
    pub q_j: usize,
    /// a[l] for l = 0..=l_max; a[0] is the doubled mean.
    pub a: Vec<Vec<f64>>,
    /// b[l] for l = 0..=l_max; b[0] = 0.
    pub b: Vec<Vec<f64>>,
}

/// Coefficients of a circle trace sampled at `radius`, stored with the
/// powers of the radius divided out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierTrace {
    pub radius: f64,
    pub pieces: Vec<FourierPiece>,
}

impl FourierPiece {
    pub fn l_max(&self) -> usize {
        self.a.len() - 1
    }

    /// γ(ψ) at radius r.
    pub fn evaluate(&self, psi: f64, r: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self.a[0].iter().map(|x| 0.5 * x).collect();
        for l in 1..self.a.len() {
            let (c, s) = ((l as f64 * psi).cos(), (l as f64 * psi).sin());
            let rl = r.powi(l as i32);
            for d in 0..out.len() {
                out[d] += rl * (c * self.a[l][d] + s * self.b[l][d]);
            }
        }
        out
    }

    fn mode_energy(&self, l: usize) -> f64 {
        self.a[l].iter().chain(&self.b[l]).map(|x| x * x).sum()
    }
}

/// Decomposes the trace, unrolls each piece and takes its discrete Fourier
/// transform. Samples must be equally spaced in angle.
pub fn fourier_coeffs(g: &SampledQPath, radius: f64) -> Result<FourierTrace> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("radius must be positive".into()));
    }
    let k = g.len();
    let step = TAU / k as f64;
    for (l, &t) in g.params.iter().enumerate() {
        if ((t - g.params[0]) - step * l as f64).abs() > 1e-9 {
            return Err(Error::InvalidInput("fourier_coeffs needs equally spaced samples".into()));
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut pieces = Vec::new();
    for piece in decompose_circle(g)? {
        let q_j = piece.cycle_len();
        let h = unroll(&piece.path, q_j)?;
        let big_k = k * q_j;
        let psi0 = g.params[0] / q_j as f64;
        let l_max = (big_k - 1) / 2;
        let n = g.n();
        let mut a = vec![vec![0.0; n]; l_max + 1];
        let mut b = vec![vec![0.0; n]; l_max + 1];
        let fft = planner.plan_fft_forward(big_k);
        for d in 0..n {
            let mut buf: Vec<Complex<f64>> = h.points.iter().map(|p| Complex::new(p[d], 0.0)).collect();
            fft.process(&mut buf);
            for l in 0..=l_max {
                // Σ h_m e^{-ilψ_m} with ψ_m = ψ0 + 2πm/K
                let c = buf[l] * Complex::from_polar(1.0, -(l as f64) * psi0) * (2.0 / big_k as f64);
                let rl = radius.powi(l as i32);
                a[l][d] = c.re / rl;
                b[l][d] = -c.im / rl;
            }
        }
        pieces.push(FourierPiece { multiplicity: piece.multiplicity, q_j, a, b });
    }
    Ok(FourierTrace { radius, pieces })
}

/// D′(r), H(r) and the energy D_upper(r) of the harmonic competitor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierBounds {
    pub d_prime: f64,
    pub h: f64,
    pub d_upper: f64,
}

pub fn fourier_bounds(ft: &FourierTrace, r: f64) -> FourierBounds {
    let (mut d_prime, mut h, mut d_upper) = (0.0, 0.0, 0.0);
    for p in &ft.pieces {
        let (k, qj) = (p.multiplicity as f64, p.q_j as f64);
        h += k * PI * qj * r * p.a[0].iter().map(|x| x * x).sum::<f64>() / 2.0;
        for l in 1..=p.l_max() {
            let (e, lf) = (p.mode_energy(l), l as f64);
            d_prime += k * TAU * r.powi(2 * l as i32 - 1) * lf * lf / qj * e;
            h += k * PI * qj * r.powi(2 * l as i32 + 1) * e;
            d_upper += k * PI * r.powi(2 * l as i32) * lf * e;
        }
    }
    FourierBounds { d_prime, h, d_upper }
}

/// γ = min_{1≤k≤Q} (⌊αk⌋ + 1 − αk)/k, exactly.
pub fn gamma_exponent(alpha: Ratio<i64>, q: usize) -> Result<Ratio<i64>> {
    if q == 0 || alpha <= Ratio::from_integer(0) {
        return Err(Error::InvalidInput("need alpha > 0 and Q >= 1".into()));
    }
    Ok((1..=q as i64)
        .map(|k| {
            let ak = alpha * Ratio::from_integer(k);
            (ak.floor() + Ratio::from_integer(1) - ak) / Ratio::from_integer(k)
        })
        .min()
        .expect("q >= 1"))
}

/// Checks γ Q_j (l − αQ_j) ≤ (l − αQ_j)² for Q_j ≤ Q and
/// l ≤ ⌈2αQ + γQ⌉ + 1; beyond that the right side grows faster.
pub fn check_mode_inequality(alpha: Ratio<i64>, gamma: Ratio<i64>, q: usize) -> bool {
    let qq = Ratio::from_integer(q as i64);
    let l_top = (Ratio::from_integer(2) * alpha * qq + gamma * qq).ceil().to_integer() + 1;
    (1..=q as i64).all(|qj| {
        let qj = Ratio::from_integer(qj);
        (0..=l_top).all(|l| {
            let x = Ratio::from_integer(l) - alpha * qj;
            gamma * qj * x <= x * x
        })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck {
    /// (2α + γ) D_upper(r).
    pub lhs: f64,
    /// r D′(r)/2 + α(α + γ) H(r)/r.
    pub rhs: f64,
    /// rhs − lhs, nonnegative when the inequality holds.
    pub residual: f64,
}

pub fn verify_decay_inequality(ft: &FourierTrace, alpha: f64, gamma: f64, r: f64) -> DecayCheck {
    let b = fourier_bounds(ft, r);
    let lhs = (2.0 * alpha + gamma) * b.d_upper;
    let rhs = r * b.d_prime / 2.0 + alpha * (alpha + gamma) * b.h / r;
    DecayCheck { lhs, rhs, residual: rhs - lhs }
}
