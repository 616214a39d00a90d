use qval::extension::*;
use qval::selection::SampledQPath;
use qval::{metric_g, QPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Worst grid-edge Lipschitz ratio output/input over the 100 instances of
/// [`instance`] for Q = 1, 2, 3.
const RECORDED_RATIO: [f64; 3] = [9.1515, 30.8491, 36.1719];
/// Same ratio for 2⟦x⟧ given on the left edge of the unit square.
const RECORDED_LEFT_EDGE: f64 = 2.0;
/// energy / bound for the square-root annulus at ε = 0.1, 0.2, 0.4.
const RECORDED_ANNULUS: [f64; 3] = [0.6552, 0.6426, 0.6134];

fn random_maps(rng: &mut ChaCha8Rng, q: usize, spread: f64) -> Vec<[f64; 6]> {
    (0..q)
        .map(|_| {
            let big = if rng.gen::<f64>() < 0.3 { spread } else { 1.0 };
            std::array::from_fn(|_| rng.gen_range(-1.0..1.0) * big)
        })
        .collect()
}

fn affine_sheets(maps: &[[f64; 6]], p: [f64; 2], scale: f64) -> QPoint {
    let pts: Vec<[f64; 2]> = maps
        .iter()
        .map(|m| [m[0] * p[0] + m[1] * p[1] + m[4] * scale, m[2] * p[0] + m[3] * p[1] + m[5] * scale])
        .collect();
    QPoint::from_points(&pts).unwrap()
}

fn instance(seed: u64, q: usize, size: usize) -> GridQFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::new([0.0, 0.0], 1.0 / (size - 1) as f64, size, size).unwrap();
    let kind = rng.gen_range(0..4);
    let c = [rng.gen::<f64>(), rng.gen::<f64>()];
    let mut mask: Vec<bool> = (0..grid.len())
        .map(|v| {
            let [i, j] = grid.coords(v);
            let p = grid.position(v);
            match kind {
                0 => i == 0,
                1 => (p[0] - c[0]).hypot(p[1] - c[1]) <= 0.3,
                2 => i == 0 || j == 0,
                _ => false,
            }
        })
        .collect();
    if kind == 3 || mask.iter().filter(|&&m| m).count() < 2 {
        for m in mask.iter_mut() {
            *m = *m || rng.gen::<f64>() < 0.1;
        }
    }
    let maps = random_maps(&mut rng, q, 1.0);
    GridQFunction::from_fn(grid, &mask, |p| affine_sheets(&maps, p, 1.0)).unwrap()
}

#[test]
fn random_extensions_stay_within_recorded_ratio() {
    for q in 1..=3 {
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            let f = instance(seed, q, 17);
            let g = lipschitz_extend(&f).unwrap();
            assert!(g.is_complete());
            for v in f.defined_nodes() {
                assert_eq!(g.value(v), f.value(v));
            }
            worst = worst.max(g.grid_lipschitz() / f.lipschitz());
        }
        println!("Q = {q}: worst ratio {worst:.4} (recorded {})", RECORDED_RATIO[q - 1]);
        assert!(worst <= 1.1 * RECORDED_RATIO[q - 1]);
    }
}

#[test]
fn left_edge_identity() {
    let grid = Grid::new([0.0, 0.0], 1.0 / 16.0, 17, 17).unwrap();
    let mask: Vec<bool> = (0..grid.len()).map(|v| grid.coords(v)[0] == 0).collect();
    let f = GridQFunction::from_fn(grid, &mask, |p| QPoint::repeated(2, &p)).unwrap();
    let g = lipschitz_extend(&f).unwrap();
    let ratio = g.grid_lipschitz() / f.lipschitz();
    assert!((f.lipschitz() - 2f64.sqrt()).abs() < 1e-12);
    assert!(ratio <= 1.1 * RECORDED_LEFT_EDGE, "{ratio}");
}

fn square_with_extension(boundary: &[QPoint]) -> (GridQFunction, GridQFunction) {
    let k = boundary.len() / 4;
    let ext = homotopy_extend_square(boundary).unwrap();
    let grid = Grid::new([0.0, 0.0], 1.0, k + 1, k + 1).unwrap();
    let mut edge = vec![None; grid.len()];
    for (o, v) in square_boundary_nodes(k).into_iter().zip(boundary) {
        edge[grid.index(o[0], o[1])] = Some(v.clone());
    }
    let mut full = edge.clone();
    for (o, v) in square_interior_nodes(k).into_iter().zip(ext.interior) {
        full[grid.index(o[0], o[1])] = Some(v);
    }
    (GridQFunction::new(grid, edge).unwrap(), GridQFunction::new(grid, full).unwrap())
}

#[test]
fn square_extension_lipschitz_and_sup_bounds() {
    for q in 1..=3usize {
        let mut worst: f64 = 0.0;
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let k = rng.gen_range(2..12);
            let maps = random_maps(&mut rng, q, 10.0);
            let boundary: Vec<QPoint> = square_boundary_nodes(k)
                .into_iter()
                .map(|o| affine_sheets(&maps, [o[0] as f64, o[1] as f64], k as f64))
                .collect();
            let (edge, full) = square_with_extension(&boundary);
            worst = worst.max(full.grid_lipschitz() / edge.lipschitz());
            let pick = rng.gen_range(0..boundary.len());
            for p in [boundary[pick].barycenter(), vec![0.0, 0.0]] {
                let bound = 2.0 * q as f64 * edge.sup_distance_to(&p);
                let center = QPoint::repeated(q, &p);
                for v in 0..full.grid().len() {
                    assert!(metric_g(&full.value(v).unwrap(), &center).unwrap().0 <= bound);
                }
            }
        }
        println!("Q = {q}: worst square ratio {worst:.3}");
        assert!(worst <= 12.0 * (q * q) as f64);
    }
}

#[test]
fn annulus_constant_is_stable_in_eps() {
    let sqrt = |rho: f64| {
        SampledQPath::circle_from_fn(64, |t| {
            let (s, h) = (rho.sqrt(), t / 2.0);
            QPoint::from_points(&[[s * h.cos(), s * h.sin()], [-s * h.cos(), -s * h.sin()]]).unwrap()
        })
        .unwrap()
    };
    let r = 0.8;
    let mut cs = Vec::new();
    for (i, eps) in [0.1, 0.2, 0.4].into_iter().enumerate() {
        let a = interpolate_annulus(&sqrt(r), &sqrt(r * (1.0 - eps)), r, eps).unwrap();
        println!("eps {eps}: energy {:.5}, bound {:.5}, C {:.4}", a.energy, a.bound, a.constant);
        assert!(a.energy <= a.constant * a.bound * (1.0 + 1e-12));
        assert!((a.constant - RECORDED_ANNULUS[i]).abs() <= 0.1 * RECORDED_ANNULUS[i]);
        cs.push(a.constant);
    }
    let (lo, hi) = cs.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &c| (l.min(c), h.max(c)));
    assert!(hi <= 1.1 * lo);
}
