//! Sorted-projection embeddings of A_Q(R^n) into Euclidean space.
//!
//! A direction set Λ = {e_1, …, e_h} with separation constant α has the
//! property that for any Q² vectors v_k some e_l satisfies
//! |v_k · e_l| >= α |v_k| for all k. Projecting the points of a Q-point onto
//! each e_l and sorting gives the embedding ξ; doing the same over
//! orthonormal frames built on Λ gives ξ_BW, which is locally isometric.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::qpoint::QPoint;

/// Seed used by [`build_lambda`].
pub const DEFAULT_SEED: u64 = 0x5eed;

/// Verification trials used when a basis is constructed.
const BUILD_TRIALS: usize = 20_000;

/// Fraction of the worst verified margin declared as α for n >= 3.
const ALPHA_SAFETY: f64 = 0.5;

/// Margins this close below α still count as passing.
const MARGIN_TOL: f64 = 1e-12;

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBasis {
    pub n: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    /// Number of directions of Λ (equivalently, of frames in Γ).
    pub h: usize,
    pub alpha: f64,
    pub directions: Vec<Vec<f64>>,
    /// When set, `directions` holds `h` orthonormal frames of `n` vectors.
    #[serde(default, skip_serializing_if = "is_false")]
    pub frames: bool,
}

impl EmbeddingBasis {
    /// Dimension of the target space: Q·h for ξ and Q·n·h for ξ_BW.
    pub fn embedded_dim(&self) -> usize {
        self.q * self.directions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.q == 0 {
            return Err(Error::InvalidInput("n and Q must be positive".into()));
        }
        let expect = if self.frames { self.n * self.h } else { self.h };
        if self.directions.len() != expect {
            return Err(dim_err(format!("expected {expect} directions, got {}", self.directions.len())));
        }
        if !(self.alpha >= 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidInput(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        for d in &self.directions {
            if d.len() != self.n {
                return Err(dim_err("direction has the wrong dimension"));
            }
            if (norm(d) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput("directions must be unit vectors".into()));
            }
        }
        if self.frames {
            for f in self.directions.chunks(self.n) {
                for i in 0..self.n {
                    for j in 0..i {
                        if dot(&f[i], &f[j]).abs() > 1e-12 {
                            return Err(Error::InvalidInput("frame is not orthonormal".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// The enlarged set Γ: each direction completed to an orthonormal frame.
    pub fn to_frames(&self) -> EmbeddingBasis {
        if self.frames {
            return self.clone();
        }
        let directions = self.directions.iter().flat_map(|e| complete_frame(e)).collect();
        EmbeddingBasis { directions, frames: true, ..self.clone() }
    }

    /// The direction set Λ underlying this basis.
    pub fn lambda(&self) -> Vec<&[f64]> {
        if self.frames {
            self.directions.chunks(self.n).map(|f| f[0].as_slice()).collect()
        } else {
            self.directions.iter().map(Vec::as_slice).collect()
        }
    }

    fn check_point(&self, t: &QPoint) -> Result<()> {
        if t.n() != self.n || t.q() != self.q {
            return Err(dim_err(format!(
                "basis is for (n, Q) = ({}, {}), point has ({}, {})",
                self.n,
                self.q,
                t.n(),
                t.q()
            )));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        1.0 / (self.h as f64).sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let l = norm(&v);
    v.iter_mut().for_each(|x| *x /= l);
    v
}

/// Gram–Schmidt against the standard basis, starting from `e`.
fn complete_frame(e: &[f64]) -> Vec<Vec<f64>> {
    let n = e.len();
    let mut frame = vec![e.to_vec()];
    for k in 0..n {
        if frame.len() == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        for f in &frame {
            let c = dot(&v, f);
            v.iter_mut().zip(f).for_each(|(x, y)| *x -= c * y);
        }
        // re-orthogonalize once for accuracy
        for f in &frame {
            let c = dot(&v, f);
            v.iter_mut().zip(f).for_each(|(x, y)| *x -= c * y);
        }
        if norm(&v) > 1e-6 {
            frame.push(normalized(v));
        }
    }
    frame
}

/// Builds Λ for (n, Q) with the default seed.
pub fn build_lambda(n: usize, q: usize) -> Result<EmbeddingBasis> {
    build_lambda_seeded(n, q, DEFAULT_SEED)
}

/// Builds Λ for (n, Q).
///
/// * n = 1: the single direction 1, α = 1.
/// * n = 2, Q = 1: three lines 60° apart, α = √3/2.
/// * n = 2, Q >= 2: h = 2Q² equally spaced lines and α = sin(π/(8Q²)).
///   A vector v violates |v·e| >= α|v| only for lines e within the open arc
///   of half-width π/(8Q²) around v's perpendicular. That arc is shorter
///   than the spacing π/(2Q²), so it holds at most one line; Q² vectors
///   exclude at most Q² < 2Q² lines and some line survives.
/// * n = 3: Fibonacci points on the upper hemisphere; n >= 4: seeded random
///   unit vectors. α is a fraction of the worst margin found by
///   [`verify_lambda`], and h is doubled if the search finds a violation.
pub fn build_lambda_seeded(n: usize, q: usize, seed: u64) -> Result<EmbeddingBasis> {
    if n == 0 || q == 0 {
        return Err(Error::InvalidInput("n and Q must be positive".into()));
    }
    let basis = |h: usize, alpha: f64, directions: Vec<Vec<f64>>| EmbeddingBasis {
        n,
        q,
        h,
        alpha,
        directions,
        frames: false,
    };
    match n {
        1 => return Ok(basis(1, 1.0, vec![vec![1.0]])),
        2 => {
            let (h, alpha) = if q == 1 {
                (3, 3f64.sqrt() / 2.0)
            } else {
                let q2 = (q * q) as f64;
                (2 * q * q, (std::f64::consts::PI / (8.0 * q2)).sin())
            };
            let dirs = (0..h)
                .map(|k| {
                    let t = std::f64::consts::PI * k as f64 / h as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect();
            return Ok(basis(h, alpha, dirs));
        }
        _ => {}
    }
    let mut h = if n == 3 { (8 * q * q).max(6) } else { 8 * q * q * (n - 1) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..4 {
        let dirs = if n == 3 { fibonacci_hemisphere(h) } else { random_sphere(n, h, &mut rng) };
        let candidate = basis(h, 0.0, dirs);
        let check = verify_lambda(&candidate, BUILD_TRIALS, rng.gen());
        if check.worst_margin > 0.0 {
            return Ok(EmbeddingBasis { alpha: ALPHA_SAFETY * check.worst_margin, ..candidate });
        }
        h *= 2;
    }
    Err(Error::Construction(format!("no direction set found for n = {n}, Q = {q}")))
}

fn fibonacci_hemisphere(h: usize) -> Vec<Vec<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..h)
        .map(|i| {
            let z = (i as f64 + 0.5) / h as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            vec![r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

fn random_sphere(n: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..h).map(|_| gaussian_unit(n, rng)).collect()
}

fn gaussian_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        if norm(&v) > 1e-9 {
            return normalized(v);
        }
    }
}

/// Outcome of [`verify_lambda`].
#[derive(Clone, Debug)]
pub struct LambdaCheck {
    pub pass: bool,
    /// Smallest margin max_l min_k |v_k·e_l| / |v_k| over all tried sets.
    pub worst_margin: f64,
    /// The set attaining `worst_margin`.
    pub worst_set: Vec<Vec<f64>>,
}

/// max over directions of min over vectors of |v·e| / |v|; zero vectors are
/// ignored.
pub fn lambda_margin(dirs: &[&[f64]], vecs: &[Vec<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for e in dirs {
        let mut m = f64::INFINITY;
        for v in vecs {
            let l = norm(v);
            if l > 0.0 {
                m = m.min(dot(v, e).abs() / l);
            }
        }
        best = best.max(m);
    }
    best
}

/// Randomized and adversarial check of the Λ property at the declared α.
///
/// Sets of Q² vectors are drawn as Gaussian samples, as greedy sets of
/// vectors orthogonal to n-1 directions each, and as smallest eigenvectors
/// of groups of directions; the worst sets found are then refined by local
/// search.
pub fn verify_lambda(basis: &EmbeddingBasis, trials: usize, seed: u64) -> LambdaCheck {
    let dirs = basis.lambda();
    let n = basis.n;
    let k = basis.q * basis.q;
    let evaluate = |t: usize| -> (f64, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let set = match t % 3 {
            0 => (0..k).map(|_| gaussian_unit(n, &mut rng)).collect(),
            1 => perpendicular_set(&dirs, n, k, &mut rng),
            _ => group_set(&dirs, n, k, t % 2 == 0, &mut rng),
        };
        (lambda_margin(&dirs, &set), set)
    };
    let mut results: Vec<(f64, Vec<Vec<f64>>)> = (0..trials).into_par_iter().map(evaluate).collect();
    results.sort_by(|a, b| a.0.total_cmp(&b.0));
    results.truncate(4);
    let steps = (trials / 4).clamp(200, 20_000);
    let refined: Vec<(f64, Vec<Vec<f64>>)> = results
        .into_par_iter()
        .enumerate()
        .map(|(i, (m, set))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 + i as u64));
            hill_climb(&dirs, set, m, steps, &mut rng)
        })
        .collect();
    let (worst_margin, worst_set) = refined
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap_or((1.0, Vec::new()));
    LambdaCheck { pass: worst_margin >= basis.alpha - MARGIN_TOL, worst_margin, worst_set }
}

fn smallest_eigvec(dirs: &[&[f64]], n: usize) -> Vec<f64> {
    let mut m = DMatrix::<f64>::zeros(n, n);
    for e in dirs {
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += e[i] * e[j];
            }
        }
    }
    let eig = SymmetricEigen::new(m);
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("n >= 1");
    eig.eigenvectors.column(idx).iter().copied().collect()
}

fn perpendicular_set(dirs: &[&[f64]], n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut alive: Vec<usize> = (0..dirs.len()).collect();
    let mut set = Vec::with_capacity(k);
    for _ in 0..k {
        if alive.is_empty() {
            set.push(gaussian_unit(n, rng));
            continue;
        }
        let pick: Vec<&[f64]> = alive
            .choose_multiple(rng, (n - 1).min(alive.len()).max(1))
            .map(|&i| dirs[i])
            .collect();
        let mut v = if n == 1 { vec![1.0] } else { smallest_eigvec(&pick, n) };
        let noise = 10f64.powf(rng.gen_range(-6.0..-1.0));
        v.iter_mut().for_each(|x| *x += noise * rng.sample::<f64, _>(StandardNormal));
        let v = normalized(v);
        // drop the directions this vector already defeats
        alive.retain(|&i| dot(&v, dirs[i]).abs() > 0.02);
        set.push(v);
    }
    set
}

fn group_set(dirs: &[&[f64]], n: usize, k: usize, contiguous: bool, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let h = dirs.len();
    let mut order: Vec<usize> = (0..h).collect();
    if contiguous && n == 2 {
        let mut ang: Vec<(f64, usize)> = dirs
            .iter()
            .enumerate()
            .map(|(i, e)| (e[1].atan2(e[0]).rem_euclid(std::f64::consts::PI), i))
            .collect();
        ang.sort_by(|a, b| a.0.total_cmp(&b.0));
        let off = rng.gen_range(0..h);
        order = (0..h).map(|i| ang[(i + off) % h].1).collect();
    } else {
        order.shuffle(rng);
    }
    (0..k)
        .map(|g| {
            let members: Vec<&[f64]> = order
                .iter()
                .enumerate()
                .filter(|(i, _)| i * k / h == g)
                .map(|(_, &d)| dirs[d])
                .collect();
            if members.is_empty() || n == 1 {
                gaussian_unit(n, rng)
            } else {
                normalized(smallest_eigvec(&members, n))
            }
        })
        .collect()
}

fn hill_climb(
    dirs: &[&[f64]],
    mut set: Vec<Vec<f64>>,
    mut m: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, Vec<Vec<f64>>) {
    if set.is_empty() {
        return (m, set);
    }
    for s in 0..steps {
        let step = 0.3 * (1e-5f64 / 0.3).powf(s as f64 / steps as f64);
        let i = rng.gen_range(0..set.len());
        let old = set[i].clone();
        let v: Vec<f64> = old.iter().map(|x| x + step * rng.sample::<f64, _>(StandardNormal)).collect();
        if norm(&v) == 0.0 {
            continue;
        }
        set[i] = normalized(v);
        let mm = lambda_margin(dirs, &set);
        if mm <= m {
            m = mm;
        } else {
            set[i] = old;
        }
    }
    (m, set)
}

fn sorted_projections(t: &QPoint, dirs: &[Vec<f64>], scale: f64) -> Vec<f64> {
    let q = t.q();
    let mut out = Vec::with_capacity(q * dirs.len());
    let mut buf = vec![0.0; q];
    for e in dirs {
        for (b, p) in buf.iter_mut().zip(t.points()) {
            *b = dot(e, p);
        }
        buf.sort_by(f64::total_cmp);
        out.extend(buf.iter().map(|x| x * scale));
    }
    out
}

/// ξ(T) = h^{-1/2}(π_1(T), …, π_h(T)) with π_l the sorted projections on e_l.
pub fn xi(t: &QPoint, basis: &EmbeddingBasis) -> Result<Vec<f64>> {
    basis.check_point(t)?;
    Ok(sorted_projections(t, &basis.directions, basis.scale()))
}

/// ξ_BW(T): sorted projections over every frame vector of Γ, scaled by
/// h^{-1/2}. A Λ basis is enlarged to frames first.
pub fn xi_bw(t: &QPoint, basis: &EmbeddingBasis) -> Result<Vec<f64>> {
    basis.check_point(t)?;
    if basis.frames {
        Ok(sorted_projections(t, &basis.directions, basis.scale()))
    } else {
        let g = basis.to_frames();
        Ok(sorted_projections(t, &g.directions, g.scale()))
    }
}

/// Radius of the ball around T on which ξ_BW is an isometry: a quarter of
/// the smallest positive gap between projections onto a frame vector.
/// Gaps at rounding level count as zero.
/// Infinite when no projections differ.
pub fn xi_bw_delta(t: &QPoint, basis: &EmbeddingBasis) -> Result<f64> {
    basis.check_point(t)?;
    let g = basis.to_frames();
    let mut gap = f64::INFINITY;
    let mut buf = vec![0.0; t.q()];
    // projections closer than rounding are treated as coincident
    let floor = 1e-12 * (1.0 + t.points().map(|p| norm(p)).fold(0.0, f64::max));
    for e in &g.directions {
        for (b, p) in buf.iter_mut().zip(t.points()) {
            *b = dot(e, p);
        }
        buf.sort_by(f64::total_cmp);
        for w in buf.windows(2) {
            let d = w[1] - w[0];
            if d > floor {
                gap = gap.min(d);
            }
        }
    }
    Ok(gap / 4.0)
}

/// Largest number of pairings tried as starting points by [`rho`].
const RHO_START_CAP: usize = 720;
/// Starting points that are fully descended.
const RHO_DESCENTS: usize = 6;
/// Number of pivot sets the starting points are solved from.
const RHO_PIVOT_SETS: usize = 4;
const RHO_MAX_ITER: usize = 200;

/// Nearest-point projection onto ξ(A_Q): a Q-point T approximately
/// minimizing |ξ(T) - p|.
///
/// Starting points are obtained by pairing the entries of n independent
/// blocks of `p` and solving for the points; each is refined by
/// alternating between the sorting permutations and a least-squares solve,
/// which never increases the residual.
pub fn rho(p: &[f64], basis: &EmbeddingBasis) -> Result<QPoint> {
    Ok(rho_residual(p, basis)?.0)
}

/// [`rho`] together with the residual |ξ(T) - p|.
pub fn rho_residual(p: &[f64], basis: &EmbeddingBasis) -> Result<(QPoint, f64)> {
    if p.len() != basis.embedded_dim() {
        return Err(dim_err(format!("vector of length {} for embedded dimension {}", p.len(), basis.embedded_dim())));
    }
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite entry".into()));
    }
    let ctx = RhoCtx::new(basis)?;
    let mut starts: Vec<(f64, Vec<f64>)> = ctx
        .starts(p)
        .into_iter()
        .map(|pts| {
            let obj = ctx.objective(&pts, p);
            let next = ctx.ls_step(&pts, p);
            match ctx.objective(&next, p) {
                o if o < obj => (o, next),
                _ => (obj, pts),
            }
        })
        .collect();
    // stable sort keeps the lowest start index among ties
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    starts.truncate(RHO_DESCENTS);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stalled = None;
    for (obj, pts) in starts {
        let (obj, pts, converged) = ctx.descend(pts, obj, p);
        if !converged {
            stalled = Some(obj);
        }
        if best.as_ref().map_or(true, |b| obj < b.0) {
            best = Some((obj, pts));
        }
    }
    let (obj, pts) = best.expect("at least one start");
    let t = QPoint::new(basis.q, basis.n, pts)?;
    if let Some(res) = stalled {
        if res <= obj {
            return Err(Error::NonConvergence {
                iterations: RHO_MAX_ITER,
                residual: res.sqrt(),
                best: Box::new(t),
            });
        }
    }
    Ok((t, obj.sqrt()))
}

struct RhoCtx<'a> {
    basis: &'a EmbeddingBasis,
    scale: f64,
    gram: DMatrix<f64>,
    normal: nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>,
    /// Sets of n directions used to solve for starting points.
    pivots: Vec<(Vec<usize>, nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>)>,
}

impl<'a> RhoCtx<'a> {
    fn new(basis: &'a EmbeddingBasis) -> Result<Self> {
        let n = basis.n;
        let scale = basis.scale();
        let mut a = DMatrix::<f64>::zeros(n, n);
        for e in &basis.directions {
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] += scale * scale * e[i] * e[j];
                }
            }
        }
        let normal = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("basis directions do not span R^n".into()))?;
        // greedily complete each first direction to n nearly orthogonal ones
        let h = basis.directions.len();
        let firsts = RHO_PIVOT_SETS.min(h);
        let mut pivots: Vec<(Vec<usize>, nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>)> = Vec::new();
        for f in 0..firsts {
            let mut set = vec![f * h / firsts];
            while set.len() < n {
                let next = (0..h)
                    .filter(|i| !set.contains(i))
                    .min_by(|&a, &b| {
                        let ca = set.iter().map(|&p| dot(&basis.directions[a], &basis.directions[p]).abs()).fold(0.0, f64::max);
                        let cb = set.iter().map(|&p| dot(&basis.directions[b], &basis.directions[p]).abs()).fold(0.0, f64::max);
                        ca.total_cmp(&cb)
                    })
                    .ok_or_else(|| Error::InvalidInput("too few directions".into()))?;
                set.push(next);
            }
            let mut sorted = set.clone();
            sorted.sort_unstable();
            if pivots.iter().any(|(other, _)| {
                let mut o = other.clone();
                o.sort_unstable();
                o == sorted
            }) {
                continue;
            }
            let b = DMatrix::from_fn(n, n, |r, c| basis.directions[set[r]][c]);
            pivots.push((set, b.lu()));
        }
        Ok(RhoCtx { basis, scale, gram: a, normal, pivots })
    }

    fn objective(&self, pts: &[f64], p: &[f64]) -> f64 {
        let t = QPoint::new(self.basis.q, self.basis.n, pts.to_vec()).expect("finite points");
        let x = sorted_projections(&t, &self.basis.directions, self.scale);
        x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    fn starts(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let q = self.basis.q;
        let n = self.basis.n;
        let perms = all_perms(q);
        let cap = RHO_START_CAP / self.pivots.len();
        let total = (perms.len() as f64).powi(n as i32 - 1);
        let mut pairings: Vec<Vec<usize>> = Vec::new();
        if total <= cap as f64 {
            let total = total as usize;
            for code in 0..total {
                let mut c = code;
                let mut choice = Vec::with_capacity(n - 1);
                for _ in 1..n {
                    choice.push(c % perms.len());
                    c /= perms.len();
                }
                pairings.push(choice);
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
            pairings.push(vec![0; n - 1]);
            while pairings.len() < cap {
                pairings.push((1..n).map(|_| rng.gen_range(0..perms.len())).collect());
            }
        }
        let mut out = Vec::with_capacity(pairings.len() * self.pivots.len());
        for (set, lu) in &self.pivots {
            for choice in &pairings {
                let mut pts = Vec::with_capacity(q * n);
                for i in 0..q {
                    let rhs = DVector::from_fn(n, |r, _| {
                        let slot = if r == 0 { i } else { perms[choice[r - 1]][i] };
                        p[set[r] * q + slot] / self.scale
                    });
                    let x = lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(n));
                    pts.extend(x.iter());
                }
                out.push(pts);
            }
        }
        out
    }

    /// Right-hand sides of the least-squares problem for the slot
    /// assignment induced by sorting, one per point.
    fn sorted_rhs(&self, pts: &[f64], p: &[f64]) -> Vec<DVector<f64>> {
        let q = self.basis.q;
        let n = self.basis.n;
        let mut rhs = vec![DVector::<f64>::zeros(n); q];
        let mut proj: Vec<(f64, usize)> = vec![(0.0, 0); q];
        for (l, e) in self.basis.directions.iter().enumerate() {
            for (i, pr) in proj.iter_mut().enumerate() {
                *pr = (dot(e, &pts[i * n..(i + 1) * n]), i);
            }
            proj.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (slot, &(_, i)) in proj.iter().enumerate() {
                let target = p[l * q + slot] * self.scale;
                for c in 0..n {
                    rhs[i][c] += target * e[c];
                }
            }
        }
        rhs
    }

    /// Least-squares points for the slot assignment induced by sorting.
    fn ls_step(&self, pts: &[f64], p: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(pts.len());
        for r in self.sorted_rhs(pts, p) {
            out.extend(self.normal.solve(&r).iter());
        }
        out
    }

    /// The same least-squares problem restricted to e·(T_i - T_j) = 0 for
    /// every row of `ties`.
    fn tied_ls_step(&self, pts: &[f64], ties: &[DVector<f64>], p: &[f64]) -> Option<Vec<f64>> {
        if ties.is_empty() {
            return Some(self.ls_step(pts, p));
        }
        let n = self.basis.n;
        let dim = pts.len();
        let rhs = self.sorted_rhs(pts, p);
        let r = DVector::from_fn(dim, |k, _| rhs[k / n][k % n]);
        let a = &self.gram;
        let normal = DMatrix::from_fn(dim, dim, |u, v| if u / n == v / n { a[(u % n, v % n)] } else { 0.0 });
        let c = DMatrix::from_fn(ties.len(), dim, |row, k| ties[row][k]);
        let svd = c.svd(false, true);
        let vt = svd.v_t?;
        let top = svd.singular_values.max();
        let mut range = DMatrix::<f64>::zeros(dim, dim);
        for (k, &sv) in svd.singular_values.iter().enumerate() {
            if sv > 1e-10 * top {
                let v = vt.row(k).transpose();
                range += &v * v.transpose();
            }
        }
        let null = DMatrix::<f64>::identity(dim, dim) - &range;
        let system = &null * normal * &null + range;
        let x = system.lu().solve(&(&null * r))?;
        x.iter().all(|v| v.is_finite()).then(|| x.iter().copied().collect())
    }

    /// Descent along faces where projections tie. Where the sorting step
    /// stalls the minimum lies on such a face: the least-squares points are
    /// followed until an ordering flips, the flip is added as a tie, and
    /// the step is repeated.
    fn face_step(&self, pts: &[f64], obj: f64, p: &[f64]) -> Option<(f64, Vec<f64>)> {
        let q = self.basis.q;
        let n = self.basis.n;
        let tol = 1e-12 * (1.0 + pts.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        let row = |e: &[f64], i: usize, j: usize| {
            let mut v = DVector::zeros(q * n);
            for c in 0..n {
                v[i * n + c] = e[c];
                v[j * n + c] = -e[c];
            }
            v
        };
        let gap = |x: &[f64], e: &[f64], i: usize, j: usize| dot(e, &x[i * n..(i + 1) * n]) - dot(e, &x[j * n..(j + 1) * n]);
        let mut ties = Vec::new();
        for e in &self.basis.directions {
            for i in 0..q {
                for j in i + 1..q {
                    if gap(pts, e, i, j).abs() <= tol {
                        ties.push(row(e, i, j));
                    }
                }
            }
        }
        let mut cur = pts.to_vec();
        for _ in 0..4 * q * n + 4 {
            let target = self.tied_ls_step(&cur, &ties, p)?;
            let mut first = 1.0;
            let mut hit = None;
            for e in &self.basis.directions {
                for i in 0..q {
                    for j in i + 1..q {
                        let d0 = gap(&cur, e, i, j);
                        let d1 = gap(&target, e, i, j);
                        if d0.abs() > tol && d0 * d1 <= 0.0 {
                            let s = d0 / (d0 - d1);
                            if s < first {
                                first = s;
                                hit = Some(row(e, i, j));
                            }
                        }
                    }
                }
            }
            for (x, t) in cur.iter_mut().zip(&target) {
                *x += first * (t - *x);
            }
            match hit {
                Some(r) => ties.push(r),
                None => break,
            }
        }
        let o = self.objective(&cur, p);
        (o < obj * (1.0 - 1e-15)).then_some((o, cur))
    }

    fn descend(&self, mut pts: Vec<f64>, mut obj: f64, p: &[f64]) -> (f64, Vec<f64>, bool) {
        for _ in 0..RHO_MAX_ITER {
            let next = self.ls_step(&pts, p);
            let plain = next.iter().all(|x| x.is_finite()).then(|| (self.objective(&next, p), next));
            let (o, next) = match plain {
                Some((o, next)) if o < obj => (o, next),
                _ => match self.face_step(&pts, obj, p) {
                    Some(better) => better,
                    None => return (obj, pts, true),
                },
            };
            let done = obj - o <= 1e-15 * obj.max(1e-300);
            pts = next;
            obj = o;
            if done {
                return (obj, pts, true);
            }
        }
        (obj, pts, false)
    }
}

fn all_perms(q: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(cur, used, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(q), &mut vec![false; q], &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qpoint::metric_g;

    #[test]
    fn planar_bases() {
        let b = build_lambda(2, 1).unwrap();
        assert_eq!(b.h, 3);
        assert_eq!(b.alpha, 3f64.sqrt() / 2.0);
        let b = build_lambda(2, 2).unwrap();
        assert_eq!(b.h, 8);
        assert_eq!(b.alpha, (std::f64::consts::PI / 32.0).sin());
        b.validate().unwrap();
        b.to_frames().validate().unwrap();
    }

    #[test]
    fn verify_detects_too_large_alpha() {
        let mut b = build_lambda(2, 1).unwrap();
        assert!(verify_lambda(&b, 2000, 1).pass);
        b.alpha += 1e-3;
        let c = verify_lambda(&b, 2000, 1);
        assert!(!c.pass);
        assert!(c.worst_margin < b.alpha);
        b.alpha = 0.0;
        assert!(verify_lambda(&b, 100, 1).pass);
    }

    #[test]
    fn xi_one_dimensional() {
        let b = build_lambda(1, 2).unwrap();
        let t = QPoint::from_scalars(&[3.0, 0.0]).unwrap();
        let s = QPoint::from_scalars(&[1.0, 2.0]).unwrap();
        assert_eq!(xi(&t, &b).unwrap(), vec![0.0, 3.0]);
        let (xt, xs) = (xi(&t, &b).unwrap(), xi(&s, &b).unwrap());
        let d: f64 = xt.iter().zip(&xs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert_eq!(d, metric_g(&t, &s).unwrap().0);
        assert!(xi(&QPoint::zero(2, 1), &b).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn xi_bw_local_isometry() {
        let b = build_lambda(2, 2).unwrap();
        let t = QPoint::from_points(&[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let s = QPoint::from_points(&[[1e-6, -1e-6], [1.0 + 1e-6, 1e-6]]).unwrap();
        assert!(xi_bw_delta(&t, &b).unwrap() > 1e-4);
        let (xt, xs) = (xi_bw(&t, &b).unwrap(), xi_bw(&s, &b).unwrap());
        let d: f64 = xt.iter().zip(&xs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!((d - metric_g(&t, &s).unwrap().0).abs() < 1e-12);
    }

    #[test]
    fn rho_inverts_xi() {
        let b = build_lambda(2, 3).unwrap();
        let t = QPoint::from_points(&[[0.3, -1.0], [2.0, 0.5], [-0.7, 0.1]]).unwrap();
        let r = rho(&xi(&t, &b).unwrap(), &b).unwrap();
        assert!(metric_g(&r, &t).unwrap().0 < 1e-9);
    }

    #[test]
    fn three_dimensional_basis() {
        let b = build_lambda(3, 2).unwrap();
        b.validate().unwrap();
        assert!(b.alpha > 0.0);
        assert!(verify_lambda(&b, 5000, 99).pass);
    }
}
