use std::sync::Arc;

use super::QFunction;
use crate::error::{Error, Result};
use crate::qpoint::{collapse_point, metric_g, QPoint};

#[derive(Clone, Debug, Default)]
pub struct DecomposeOptions {
    /// Also require every boundary value within α(Q) d(T) of the center T,
    /// α(Q) = 24^{-3^Q}/8.
    pub strict_hypothesis: bool,
}

/// α(Q) = 24^{-3^Q} / 8.
pub fn decomposition_alpha(q: usize) -> f64 {
    24f64.powf(-(3f64.powi(q as i32))) / 8.0
}

/// Splits `f` into one piece per atom of S = collapse_point(T, 1/8), where T
/// is the boundary value minimizing the largest G-distance to the other
/// boundary values. Requires every value of `f` to lie within s(S)/4 of S,
/// so that each point is matched to a single cluster.
pub fn decompose_minimizer(f: &QFunction, opts: &DecomposeOptions) -> Result<Vec<QFunction>> {
    let mesh = f.mesh();
    let bvals: Vec<QPoint> = mesh.boundary_loop().iter().map(|&v| f.value(v)).collect();
    let mut center = (f64::INFINITY, 0usize);
    for (i, a) in bvals.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for b in &bvals {
            worst = worst.max(metric_g(a, b)?.0);
        }
        if worst < center.0 {
            center = (worst, i);
        }
    }
    let t = &bvals[center.1];
    if t.separation().is_infinite() {
        return Err(Error::NotDecomposable("the boundary center is a single atom".into()));
    }
    if opts.strict_hypothesis && center.0 > decomposition_alpha(f.q()) * t.diameter() {
        return Err(Error::NotDecomposable(format!(
            "boundary oscillation {} exceeds α(Q) d(T)",
            center.0
        )));
    }
    let s = collapse_point(t, 1.0 / 8.0)?;
    let sep = s.separation();
    // group the points of S by atom
    let mut atom_of = vec![usize::MAX; s.q()];
    let mut atoms = 0;
    for i in 0..s.q() {
        if atom_of[i] == usize::MAX {
            for j in i..s.q() {
                if atom_of[j] == usize::MAX && s.point(j) == s.point(i) {
                    atom_of[j] = atoms;
                }
            }
            atoms += 1;
        }
    }
    let nv = mesh.num_vertices();
    let mut groups: Vec<Vec<Vec<usize>>> = vec![Vec::with_capacity(nv); atoms];
    for v in 0..nv {
        let (g, m) = metric_g(&f.value(v), &s)?;
        if !(g < sep / 4.0) {
            return Err(Error::NotDecomposable(format!(
                "value at vertex {v} is at distance {g} from the cluster center, beyond s(S)/4 = {}",
                sep / 4.0
            )));
        }
        let mut by_atom = vec![Vec::new(); atoms];
        for (i, &j) in m.perm.iter().enumerate() {
            by_atom[atom_of[j]].push(i);
        }
        for (a, labels) in by_atom.into_iter().enumerate() {
            groups[a].push(labels);
        }
    }
    let mut pieces = Vec::with_capacity(atoms);
    for labels in &groups {
        let values = (0..nv)
            .map(|v| f.value(v).subset(&labels[v]))
            .collect::<Result<Vec<_>>>()?;
        let mut piece = QFunction::from_values(Arc::clone(f.mesh_arc()), &values)?;
        let mut consistent = true;
        for (e, edge) in mesh.edges().iter().enumerate() {
            let (lu, lv) = (&labels[edge.u], &labels[edge.v]);
            let m = f.matching(e);
            let perm: Option<Vec<usize>> = lu.iter().map(|&i| lv.iter().position(|&j| j == m[i])).collect();
            match perm {
                Some(p) => piece.set_matching(e, &p)?,
                None => {
                    consistent = false;
                    break;
                }
            }
        }
        if !consistent {
            piece.match_edges();
        }
        pieces.push(piece);
    }
    Ok(pieces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirichlet::build_disk_mesh;

    #[test]
    fn separated_clusters_split() {
        let mesh = Arc::new(build_disk_mesh(1.0, 6).unwrap());
        let vals: Vec<QPoint> = mesh
            .vertices()
            .iter()
            .map(|p| QPoint::from_scalars(&[0.01 * p[0], 10.0 + 0.01 * p[1], 0.01 * p[0]]).unwrap())
            .collect();
        let mut f = QFunction::from_values(Arc::clone(&mesh), &vals).unwrap();
        f.match_edges();
        let pieces = decompose_minimizer(&f, &DecomposeOptions::default()).unwrap();
        assert_eq!(pieces.len(), 2);
        let total: f64 = pieces.iter().map(QFunction::energy).sum();
        assert!((total - f.energy()).abs() <= 1e-12 * f.energy());
        assert!(decompose_minimizer(&f, &DecomposeOptions { strict_hypothesis: true }).is_err());
    }

    #[test]
    fn single_cluster_is_not_decomposable() {
        let mesh = Arc::new(build_disk_mesh(1.0, 4).unwrap());
        let vals: Vec<QPoint> = mesh.vertices().iter().map(|p| QPoint::repeated(2, &[p[0]])).collect();
        let f = QFunction::from_values(Arc::clone(&mesh), &vals).unwrap();
        assert!(matches!(
            decompose_minimizer(&f, &DecomposeOptions::default()),
            Err(Error::NotDecomposable(_))
        ));
    }
}
