#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, Mutex, OnceLock};

use qval::embedding::{build_lambda, xi, xi_bw, xi_bw_delta, EmbeddingBasis};
use qval::extension::homotopy_extend_square;
use qval::qpoint::{collapse_beta, collapse_point, metric_g_oracle, retraction_theta};
use qval::selection::{roll, select_1d, squad_split, unrollings, SampledQPath, SquadSplit};
use qval::{metric_g, QPoint};
use rand::Rng;

pub mod strategy;

pub type Check = Result<(), String>;

fn g(t: &QPoint, s: &QPoint) -> f64 {
    metric_g(t, s).unwrap().0
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn slack(a: f64, b: f64) -> f64 {
    1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Bases are expensive for n = 3, so they are built once per (n, Q).
pub fn basis(n: usize, q: usize) -> Arc<EmbeddingBasis> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<EmbeddingBasis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(b) = cache.lock().unwrap().get(&(n, q)) {
        return b.clone();
    }
    let b = Arc::new(build_lambda(n, q).unwrap());
    cache.lock().unwrap().entry((n, q)).or_insert(b).clone()
}

/// Points uniform in [-scale, scale]^n; with probability `dup` a point
/// repeats an earlier one.
pub fn random_qpoint(rng: &mut impl Rng, q: usize, n: usize, scale: f64, dup: f64) -> QPoint {
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(q);
    for i in 0..q {
        if i > 0 && rng.gen::<f64>() < dup {
            let j = rng.gen_range(0..i);
            pts.push(pts[j].clone());
        } else {
            pts.push((0..n).map(|_| rng.gen_range(-scale..scale)).collect());
        }
    }
    QPoint::from_points(&pts).unwrap()
}

pub fn metric_axioms(t: &QPoint, s: &QPoint, u: &QPoint, perm: &[usize]) -> Check {
    let (ts, st, tu, su) = (g(t, s), g(s, t), g(t, u), g(s, u));
    if ts < 0.0 || tu < 0.0 || su < 0.0 {
        return Err(format!("negative distance {ts} {tu} {su}"));
    }
    if (ts - st).abs() > slack(ts, st) {
        return Err(format!("asymmetric: {ts} vs {st}"));
    }
    if tu > ts + su + slack(tu, ts + su) {
        return Err(format!("triangle: {tu} > {ts} + {su}"));
    }
    let same = t.canonical() == s.canonical();
    if same != (ts == 0.0) {
        return Err(format!("G = {ts} but multiset equality is {same}"));
    }
    let relabeled = g(t, &t.permuted(perm));
    if relabeled != 0.0 {
        return Err(format!("relabeling has distance {relabeled}"));
    }
    Ok(())
}

pub fn oracle_agrees(t: &QPoint, s: &QPoint) -> Check {
    let fast = g(t, s);
    let slow = metric_g_oracle(t, s).unwrap();
    if fast != slow {
        return Err(format!("metric_g {fast:e} != oracle {slow:e}"));
    }
    Ok(())
}

fn xi_dist(f: impl Fn(&QPoint) -> Vec<f64>, t: &QPoint, s: &QPoint) -> f64 {
    dist(&f(t), &f(s))
}

pub fn embedding_bounds(t: &QPoint, s: &QPoint) -> Check {
    let b = basis(t.n(), t.q());
    let d = xi_dist(|p| xi(p, &b).unwrap(), t, s);
    let gts = g(t, s);
    if d > gts + 1e-9 {
        return Err(format!("|xi(T) - xi(S)| = {d} > G = {gts}"));
    }
    let lower = (b.h as f64).sqrt() / b.alpha * d;
    if gts > lower + 1e-9 {
        return Err(format!("G = {gts} > sqrt(h)/alpha |dxi| = {lower}"));
    }
    let bw = xi_dist(|p| xi_bw(p, &b).unwrap(), t, s);
    if bw > gts + 1e-9 {
        return Err(format!("|xi_BW(T) - xi_BW(S)| = {bw} > G = {gts}"));
    }
    Ok(())
}

fn displaced(t: &QPoint, dir: &[f64], size: f64) -> QPoint {
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let coords = t.coords().iter().zip(dir).map(|(x, d)| x + size * d / norm).collect();
    QPoint::new(t.q(), t.n(), coords).unwrap()
}

/// `t` is moved by `frac * δ` along `dir` (in G), so S lies in the isometry
/// ball of T.
pub fn xi_bw_isometry(t: &QPoint, dir: &[f64], frac: f64) -> Check {
    let b = basis(t.n(), t.q());
    let delta = xi_bw_delta(t, &b).unwrap();
    if !delta.is_finite() || dir.iter().all(|&x| x == 0.0) {
        return Ok(());
    }
    let s = displaced(t, dir, frac * delta);
    let d = xi_dist(|p| xi_bw(p, &b).unwrap(), t, &s);
    let gts = g(t, &s);
    if (d - gts).abs() > 1e-12 {
        return Err(format!("xi_BW distance {d:e} vs G {gts:e} at delta {delta:e}"));
    }
    Ok(())
}

/// A closed loop inside the isometry ball of T; the discrete Dirichlet sums
/// of f and ξ_BW∘f agree.
pub fn energy_transfer(t: &QPoint, dirs: &[Vec<f64>; 2], k: usize) -> Check {
    let b = basis(t.n(), t.q());
    let delta = xi_bw_delta(t, &b).unwrap();
    if !delta.is_finite() {
        return Ok(());
    }
    let path: Vec<QPoint> = (0..=k)
        .map(|l| {
            let a = TAU * l as f64 / k as f64;
            let coords = t
                .coords()
                .iter()
                .zip(dirs[0].iter().zip(&dirs[1]))
                .map(|(x, (u, v))| x + 0.4 * delta * (a.cos() * u + a.sin() * v))
                .collect();
            QPoint::new(t.q(), t.n(), coords).unwrap()
        })
        .collect();
    let dt = TAU / k as f64;
    let mut ef = 0.0;
    let mut ex = 0.0;
    for w in path.windows(2) {
        ef += g(&w[0], &w[1]).powi(2) / dt;
        ex += xi_dist(|p| xi_bw(p, &b).unwrap(), &w[0], &w[1]).powi(2) / dt;
    }
    if (ef - ex).abs() > 1e-6 * ef.max(f64::MIN_POSITIVE) {
        return Err(format!("energy {ef:e} vs embedded {ex:e}"));
    }
    Ok(())
}

/// Radii not below s(center)/4 are skipped.
pub fn theta_contracts(center: &QPoint, r: f64, s1: &QPoint, s2: &QPoint) -> Check {
    let sep = center.separation();
    if !(r < sep / 4.0) {
        return Ok(());
    }
    let a = retraction_theta(center, r, s1).unwrap();
    let b = retraction_theta(center, r, s2).unwrap();
    let before = g(s1, s2);
    let after = g(&a, &b);
    if after > before + 1e-9 {
        return Err(format!("G(θS1, θS2) = {after} > G(S1, S2) = {before}"));
    }
    for (s, img) in [(s1, &a), (s2, &b)] {
        let to_center = g(img, center);
        if to_center > r + 1e-9 {
            return Err(format!("image at distance {to_center} outside radius {r}"));
        }
        if g(s, center) <= r && img != s {
            return Err("a point of the ball moved".into());
        }
    }
    Ok(())
}

pub fn collapse_inequalities(t: &QPoint, eps: f64) -> Check {
    if t.separation().is_infinite() {
        return Ok(());
    }
    let s = collapse_point(t, eps).unwrap();
    let sep = s.separation();
    let beta = collapse_beta(eps, t.q());
    if !(beta * t.diameter() <= sep) || sep.is_infinite() {
        return Err(format!("s(S) = {sep:e} below β d(T) = {:e}", beta * t.diameter()));
    }
    let gst = metric_g_oracle(&s, t).unwrap();
    if !(gst <= eps * sep) {
        return Err(format!("G(S, T) = {gst:e} > ε s(S) = {:e}", eps * sep));
    }
    Ok(())
}

/// Samples of Lipschitz functions x -> P_i + A_i x on [0, 1]^2 with some
/// sheets shifted far away; the squad split, when it happens, splits the
/// energy of every pair exactly.
pub fn squad_identity(samples: &[(Vec<f64>, QPoint)], lip: f64) -> Check {
    let diam = 2f64.sqrt();
    match squad_split(samples, 0, lip, diam).unwrap() {
        SquadSplit::NotSplittable => Ok(()),
        SquadSplit::Split { left, right, .. } => {
            for i in 0..samples.len() {
                let joined = left[i].concat(&right[i]).unwrap();
                if joined.canonical() != samples[i].1.canonical() {
                    return Err(format!("pieces do not sum to f at sample {i}"));
                }
                for j in 0..i {
                    let full = g(&samples[i].1, &samples[j].1).powi(2);
                    let parts = g(&left[i], &left[j]).powi(2) + g(&right[i], &right[j]).powi(2);
                    if (full - parts).abs() > 1e-9 * full.max(1.0) {
                        return Err(format!("G² = {full} but pieces give {parts}"));
                    }
                }
            }
            Ok(())
        }
    }
}

pub fn select_slopes(params: Vec<f64>, values: Vec<QPoint>) -> Check {
    let path = SampledQPath::interval(params, values.clone()).unwrap();
    let sel = select_1d(&path).unwrap();
    for l in 1..values.len() {
        let step = g(&values[l - 1], &values[l]);
        for p in &sel.paths {
            let d = dist(&p[l - 1], &p[l]);
            if d > step {
                return Err(format!("branch moves {d} on a segment where G = {step}"));
            }
        }
    }
    for (r, v) in sel.recombine().iter().zip(&values) {
        if r.canonical() != v.canonical() {
            return Err("selection does not recombine to f".into());
        }
    }
    Ok(())
}

/// The irreducible circle path θ -> {h(θ + 2πm) : m < q} of a
/// single-valued cover map h(φ) = e^{iφ/q} + Σ c_j e^{i j φ/q}.
pub fn cover_path(q: usize, n: usize, k: usize, coeffs: &[(i32, [f64; 2])], lift: f64) -> SampledQPath {
    let h = |phi: f64| {
        let mut z = [(phi / q as f64).cos(), (phi / q as f64).sin()];
        for &(j, c) in coeffs {
            let a = j as f64 * phi / q as f64;
            z[0] += c[0] * a.cos() - c[1] * a.sin();
            z[1] += c[0] * a.sin() + c[1] * a.cos();
        }
        [z[0], z[1], lift * (phi / q as f64).sin()]
    };
    SampledQPath::circle_from_fn(k, |t| {
        let pts: Vec<Vec<f64>> = (0..q).map(|m| h(t + TAU * m as f64)[..n].to_vec()).collect();
        QPoint::from_points(&pts).unwrap()
    })
    .unwrap()
}

pub fn roll_unroll(path: &SampledQPath) -> Check {
    let q = path.q();
    let all = unrollings(path, q).map_err(|e| format!("unroll failed: {e}"))?;
    if all.len() != q {
        return Err(format!("{} unrollings for Q_j = {q}", all.len()));
    }
    let k = path.len();
    for h in &all {
        let back = roll(h, q).unwrap();
        if back.params != path.params {
            return Err("rolled parameters differ".into());
        }
        for (a, b) in back.values.iter().zip(&path.values) {
            if a.canonical() != b.canonical() {
                return Err("roll(unroll(g)) != g".into());
            }
        }
    }
    for s in 0..q {
        let shifted: Vec<&Vec<f64>> = (0..k * q).map(|l| &all[0].points[(l + s * k) % (k * q)]).collect();
        if !all.iter().any(|h| h.points.iter().zip(&shifted).all(|(a, b)| a == *b)) {
            return Err(format!("no unrolling is the shift by {s} sheets"));
        }
    }
    Ok(())
}

/// max_x G(f(x), Q⟦P⟧) <= 2Q max_{∂C} G(h, Q⟦P⟧) for P the barycenter of one
/// boundary value and P = 0.
pub fn homotopy_linf(boundary: &[QPoint], pick: usize) -> Check {
    let ext = homotopy_extend_square(boundary).unwrap();
    let q = boundary[0].q();
    let n = boundary[0].n();
    for p in [boundary[pick % boundary.len()].barycenter(), vec![0.0; n]] {
        let center = QPoint::repeated(q, &p);
        let sup = boundary.iter().map(|b| g(b, &center)).fold(0.0, f64::max);
        for v in &ext.interior {
            let d = g(v, &center);
            if !(d <= 2.0 * q as f64 * sup) {
                return Err(format!("interior value at {d} from Q[P], boundary sup {sup}"));
            }
        }
    }
    Ok(())
}
