use proptest::prelude::*;
use qval::QPoint;

/// Q-points with coordinates in [-5, 5]; about a quarter of the points
/// repeat an earlier one.
pub fn qpoint(q: usize, n: usize) -> impl Strategy<Value = QPoint> {
    (prop::collection::vec(prop::collection::vec(-5.0..5.0f64, n), q), prop::collection::vec(any::<u8>(), q))
        .prop_map(|(mut pts, flags)| {
            for i in 1..pts.len() {
                if flags[i] % 4 == 0 {
                    pts[i] = pts[flags[i] as usize % i].clone();
                }
            }
            QPoint::from_points(&pts).unwrap()
        })
}

/// Q-points whose points are pairwise distinct.
pub fn distinct_qpoint(q: usize, n: usize) -> impl Strategy<Value = QPoint> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, n), q)
        .prop_filter("repeated point", |pts| {
            (0..pts.len()).all(|i| (0..i).all(|j| pts[i] != pts[j]))
        })
        .prop_map(|pts| QPoint::from_points(&pts).unwrap())
}

pub fn permutation(q: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..q).collect::<Vec<usize>>()).prop_shuffle()
}

pub fn direction(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, len)
}

/// Points spread over many scales, so that some pairs nearly coincide.
pub fn multiscale_qpoint(q: usize, n: usize) -> impl Strategy<Value = QPoint> {
    prop::collection::vec((prop::collection::vec(-1.0..1.0f64, n), 0..12i32), q).prop_map(|pts| {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(pts.len());
        for (i, (p, e)) in pts.iter().enumerate() {
            let anchor = if i == 0 { vec![0.0; p.len()] } else { out[i - 1].clone() };
            let s = 10f64.powi(-e);
            out.push(anchor.iter().zip(p).map(|(a, x)| a + s * x).collect());
        }
        QPoint::from_points(&out).unwrap()
    })
}

pub fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}
