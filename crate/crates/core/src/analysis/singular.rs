use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirichlet::QFunction;
use crate::error::{Error, Result};
use crate::qpoint::{metric_g, sq_dist, QPoint};

/// Number of clusters among the Q values when points closer than `tol`
/// are linked (single linkage).
pub fn cluster_count(value: &QPoint, tol: f64) -> usize {
    let q = value.q();
    let mut parent: Vec<usize> = (0..q).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut count = q;
    for i in 0..q {
        for j in i + 1..q {
            if sq_dist(value.point(i), value.point(j)) <= tol * tol {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                    count -= 1;
                }
            }
        }
    }
    count
}

/// Constant in [`default_cluster_tol`].
pub const CLUSTER_TOL_FACTOR: f64 = 2.0;

/// Root-mean-square distance of the boundary values from their barycenters;
/// 1 when the boundary values are all collapsed.
pub fn boundary_spread(f: &QFunction) -> f64 {
    let bl = f.mesh().boundary_loop();
    let mut total = 0.0;
    for &v in bl {
        let value = f.value(v);
        let eta = value.barycenter();
        total += value.points().map(|p| sq_dist(p, &eta)).sum::<f64>();
    }
    let spread = (total / (bl.len() * f.q()) as f64).sqrt();
    if spread > 0.0 {
        spread
    } else {
        1.0
    }
}

/// `CLUSTER_TOL_FACTOR · h^{1/Q} · spread`, with h the mesh size and spread
/// from [`boundary_spread`]. Gaps at an α-branch point at distance h scale
/// like h^α ≥ h^{1/Q}.
pub fn default_cluster_tol(f: &QFunction) -> f64 {
    CLUSTER_TOL_FACTOR * f.mesh().mesh_size().powf(1.0 / f.q() as f64) * boundary_spread(f)
}

/// σ(x) = number of distinct values at each vertex, up to `cluster_tol`.
pub fn multiplicity_sigma(f: &QFunction, cluster_tol: f64) -> Result<Vec<usize>> {
    if !(cluster_tol > 0.0) {
        return Err(Error::InvalidInput("cluster_tol must be positive".into()));
    }
    Ok((0..f.mesh().num_vertices()).map(|v| cluster_count(&f.value(v), cluster_tol)).collect())
}

/// Vertices whose σ differs from that of some neighbor.
pub fn singular_set(f: &QFunction, cluster_tol: f64) -> Result<Vec<usize>> {
    let sigma = multiplicity_sigma(f, cluster_tol)?;
    let mesh = f.mesh();
    Ok((0..mesh.num_vertices())
        .filter(|&v| mesh.neighbors(v).iter().any(|&(w, _)| sigma[w] != sigma[v]))
        .collect())
}

/// A connected component of the singular set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularCluster {
    pub vertices: Vec<usize>,
    pub centroid: [f64; 2],
    /// Largest distance between two of its vertices.
    pub diameter: f64,
}

impl SingularCluster {
    /// Whether `p` is one of the cluster's vertices or lies within the
    /// cluster's extent around its centroid.
    pub fn surrounds(&self, p: [f64; 2]) -> bool {
        (self.centroid[0] - p[0]).hypot(self.centroid[1] - p[1]) <= 0.5 * self.diameter
    }
}

/// Connected components (along mesh edges) of the singular set.
pub fn singular_clusters(f: &QFunction, cluster_tol: f64) -> Result<Vec<SingularCluster>> {
    let set = singular_set(f, cluster_tol)?;
    let mesh = f.mesh();
    let mut member = vec![false; mesh.num_vertices()];
    for &v in &set {
        member[v] = true;
    }
    let mut seen = vec![false; mesh.num_vertices()];
    let mut out = Vec::new();
    for &s in &set {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![s];
        let mut comp = Vec::new();
        while let Some(v) = stack.pop() {
            comp.push(v);
            for &(w, _) in mesh.neighbors(v) {
                if member[w] && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        let pts: Vec<[f64; 2]> = comp.iter().map(|&v| mesh.vertex(v)).collect();
        let k = pts.len() as f64;
        let centroid = [pts.iter().map(|p| p[0]).sum::<f64>() / k, pts.iter().map(|p| p[1]).sum::<f64>() / k];
        let mut diameter: f64 = 0.0;
        for a in &pts {
            for b in &pts {
                diameter = diameter.max((a[0] - b[0]).hypot(a[1] - b[1]));
            }
        }
        out.push(SingularCluster { vertices: comp, centroid, diameter });
    }
    Ok(out)
}

/// Maximal G-oscillation in one dyadic distance band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderBin {
    pub lo: f64,
    pub hi: f64,
    pub max_g: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    /// Slope of log max G against log distance; absent for constant inputs.
    pub alpha_hat: Option<f64>,
    /// max over bands of max G / hi^alpha_hat; `hi` is capped at 2 delta.
    pub seminorm: Option<f64>,
    pub bins: Vec<HolderBin>,
}

/// Fits sup G(f(x), f(y)) over pairs in B_delta(center) against |x − y| in
/// dyadic bands starting at twice the mesh size.
pub fn holder_estimate(f: &QFunction, center: [f64; 2], delta: f64) -> Result<HolderEstimate> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("delta must be positive".into()));
    }
    let mesh = f.mesh();
    let inside: Vec<usize> = (0..mesh.num_vertices())
        .filter(|&v| {
            let p = mesh.vertex(v);
            (p[0] - center[0]).hypot(p[1] - center[1]) <= delta
        })
        .collect();
    let d0 = 2.0 * mesh.mesh_size();
    if 2.0 * delta <= 2.0 * d0 {
        return Err(Error::Precondition("delta is too small for the mesh".into()));
    }
    let nbins = ((2.0 * delta / d0).log2().ceil() as usize).max(1);
    let values: Vec<QPoint> = inside.iter().map(|&v| f.value(v)).collect();
    let maxima: Vec<(f64, usize)> = (0..inside.len())
        .into_par_iter()
        .map(|a| {
            let mut local = vec![(0.0f64, 0usize); nbins];
            let pa = mesh.vertex(inside[a]);
            for b in a + 1..inside.len() {
                let pb = mesh.vertex(inside[b]);
                let d = (pa[0] - pb[0]).hypot(pa[1] - pb[1]);
                if d < d0 {
                    continue;
                }
                let k = ((d / d0).log2().floor() as usize).min(nbins - 1);
                let g = metric_g(&values[a], &values[b]).expect("same shape").0;
                local[k].0 = local[k].0.max(g);
                local[k].1 += 1;
            }
            local
        })
        .reduce(
            || vec![(0.0, 0); nbins],
            |mut x, y| {
                for (a, b) in x.iter_mut().zip(y) {
                    a.0 = a.0.max(b.0);
                    a.1 += b.1;
                }
                x
            },
        );
    let bins: Vec<HolderBin> = maxima
        .iter()
        .enumerate()
        .filter(|(_, m)| m.1 > 0)
        .map(|(k, m)| HolderBin {
            lo: d0 * 2f64.powi(k as i32),
            hi: (d0 * 2f64.powi(k as i32 + 1)).min(2.0 * delta),
            max_g: m.0,
            pairs: m.1,
        })
        .collect();
    let pts: Vec<(f64, f64)> = bins.iter().filter(|b| b.max_g > 0.0).map(|b| (b.hi.ln(), b.max_g.ln())).collect();
    if pts.len() < 2 {
        return Ok(HolderEstimate { alpha_hat: None, seminorm: None, bins });
    }
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let alpha = sxy / sxx;
    let seminorm = bins.iter().map(|b| b.max_g / b.hi.powf(alpha)).fold(0.0, f64::max);
    Ok(HolderEstimate { alpha_hat: Some(alpha), seminorm: Some(seminorm), bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirichlet::{analytic_example, build_disk_mesh, HomogeneousPiece};
    use std::sync::Arc;

    #[test]
    fn clusters_of_points() {
        let v = QPoint::from_scalars(&[0.0, 0.05, 0.1, 1.0]).unwrap();
        assert_eq!(cluster_count(&v, 0.06), 2);
        assert_eq!(cluster_count(&v, 0.01), 4);
        assert_eq!(cluster_count(&v, 2.0), 1);
    }

    #[test]
    fn square_root_example() {
        let mesh = Arc::new(build_disk_mesh(1.0, 32).unwrap());
        let id = HomogeneousPiece { k: 1, l: [vec![1.0, 0.0], vec![0.0, 1.0]] };
        let (f, _) = analytic_example(1, 2, 0, &[id], Arc::clone(&mesh)).unwrap();
        let sigma = multiplicity_sigma(&f, 1e-9).unwrap();
        assert_eq!(sigma[0], 1);
        assert!(sigma[1..].iter().all(|&s| s == 2));
        let set = singular_set(&f, 1e-9).unwrap();
        assert_eq!(set, (0..7).collect::<Vec<_>>());
        let cl = singular_clusters(&f, 1e-9).unwrap();
        assert_eq!(cl.len(), 1);
        assert!(cl[0].surrounds([0.0, 0.0]));
        let est = holder_estimate(&f, [0.0, 0.0], 0.5).unwrap();
        assert!((est.alpha_hat.unwrap() - 0.5).abs() < 0.05, "{est:?}");
    }

    #[test]
    fn linear_is_lipschitz_and_regular() {
        let mesh = Arc::new(build_disk_mesh(1.0, 32).unwrap());
        let vals: Vec<QPoint> = mesh.vertices().iter().map(|p| QPoint::repeated(2, &[p[0], 2.0 * p[1]])).collect();
        let f = QFunction::from_values(Arc::clone(&mesh), &vals).unwrap();
        assert!(singular_set(&f, 1e-9).unwrap().is_empty());
        let est = holder_estimate(&f, [0.0, 0.0], 0.5).unwrap();
        assert!((est.alpha_hat.unwrap() - 1.0).abs() < 0.05, "{est:?}");
        let c = QFunction::constant(mesh, &QPoint::zero(2, 1));
        assert_eq!(holder_estimate(&c, [0.0, 0.0], 0.5).unwrap().alpha_hat, None);
    }
}
