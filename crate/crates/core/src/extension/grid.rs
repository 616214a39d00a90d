use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirichlet::SCHEMA;
use crate::error::{dim_err, Error, Result};
use crate::qpoint::{metric_g, QPoint};

/// A square lattice of `nx` by `ny` nodes; node (i, j) sits at
/// `origin + spacing (i, j)` and has index `j nx + i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: [f64; 2],
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(origin: [f64; 2], spacing: f64, nx: usize, ny: usize) -> Result<Self> {
        let g = Grid { origin, spacing, nx, ny };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidInput("a grid needs at least 2 nodes per side".into()));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) || self.origin.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("grid spacing must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, node: usize) -> [usize; 2] {
        [node % self.nx, node / self.nx]
    }

    pub fn position(&self, node: usize) -> [f64; 2] {
        let [i, j] = self.coords(node);
        [self.origin[0] + self.spacing * i as f64, self.origin[1] + self.spacing * j as f64]
    }
}

/// A Q-valued function given on a subset of the nodes of a [`Grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridQFunctionRepr", into = "GridQFunctionRepr")]
pub struct GridQFunction {
    grid: Grid,
    q: usize,
    n: usize,
    mask: Vec<bool>,
    /// Q n coordinates per node, zero where the mask is unset.
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridQFunctionRepr {
    schema: String,
    kind: String,
    q: usize,
    n: usize,
    grid: Grid,
    mask: Vec<bool>,
    /// `null` at nodes outside the mask.
    values: Vec<Option<Vec<Vec<f64>>>>,
}

impl TryFrom<GridQFunctionRepr> for GridQFunction {
    type Error = Error;
    fn try_from(r: GridQFunctionRepr) -> Result<Self> {
        if r.schema != SCHEMA || r.kind != "grid_qfunction" {
            return Err(Error::InvalidInput(format!("expected a {SCHEMA} grid_qfunction document")));
        }
        r.grid.validate()?;
        if r.mask.len() != r.grid.len() || r.values.len() != r.grid.len() {
            return Err(dim_err("mask and values need one entry per grid node"));
        }
        let mut values = Vec::with_capacity(r.grid.len());
        for (m, v) in r.mask.iter().zip(r.values) {
            match (m, v) {
                (true, Some(pts)) => values.push(Some(QPoint::from_points(&pts)?)),
                (false, None) => values.push(None),
                _ => return Err(Error::InvalidInput("mask and values disagree".into())),
            }
        }
        let f = GridQFunction::new(r.grid, values)?;
        if f.q != r.q || f.n != r.n {
            return Err(dim_err("q or n does not match the values"));
        }
        Ok(f)
    }
}

impl From<GridQFunction> for GridQFunctionRepr {
    fn from(f: GridQFunction) -> Self {
        let values = (0..f.grid.len())
            .map(|v| f.value(v).map(|p| p.points().map(<[f64]>::to_vec).collect()))
            .collect();
        GridQFunctionRepr {
            schema: SCHEMA.into(),
            kind: "grid_qfunction".into(),
            q: f.q,
            n: f.n,
            grid: f.grid,
            mask: f.mask,
            values,
        }
    }
}

impl GridQFunction {
    /// One optional value per node; at least one must be present.
    pub fn new(grid: Grid, values: Vec<Option<QPoint>>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(dim_err(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        let first = values
            .iter()
            .flatten()
            .next()
            .ok_or_else(|| Error::InvalidInput("the mask is empty".into()))?;
        let (q, n) = (first.q(), first.n());
        let mut flat = vec![0.0; grid.len() * q * n];
        let mut mask = vec![false; grid.len()];
        for (v, val) in values.iter().enumerate() {
            if let Some(p) = val {
                first.same_shape(p)?;
                flat[v * q * n..(v + 1) * q * n].copy_from_slice(p.coords());
                mask[v] = true;
            }
        }
        Ok(GridQFunction { grid, q, n, mask, values: flat })
    }

    /// Samples `f` at the node positions where `mask` is set.
    pub fn from_fn(grid: Grid, mask: &[bool], mut f: impl FnMut([f64; 2]) -> QPoint) -> Result<Self> {
        if mask.len() != grid.len() {
            return Err(dim_err("one mask entry per node expected"));
        }
        let values = (0..grid.len()).map(|v| mask[v].then(|| f(grid.position(v)))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_defined(&self, node: usize) -> bool {
        self.mask[node]
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn value(&self, node: usize) -> Option<QPoint> {
        let w = self.q * self.n;
        self.mask[node].then(|| {
            QPoint::new(self.q, self.n, self.values[node * w..(node + 1) * w].to_vec()).expect("stored shape")
        })
    }

    pub fn defined_nodes(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&v| self.mask[v]).collect()
    }

    /// Largest G(f(x), f(y)) / |x - y| over pairs of defined nodes.
    pub fn lipschitz(&self) -> f64 {
        let nodes = self.defined_nodes();
        let vals: Vec<QPoint> = nodes.iter().map(|&v| self.value(v).expect("defined")).collect();
        (0..nodes.len())
            .into_par_iter()
            .map(|a| {
                let pa = self.grid.position(nodes[a]);
                let mut best: f64 = 0.0;
                for b in a + 1..nodes.len() {
                    let pb = self.grid.position(nodes[b]);
                    let g = metric_g(&vals[a], &vals[b]).expect("same shape").0;
                    best = best.max(g / (pa[0] - pb[0]).hypot(pa[1] - pb[1]));
                }
                best
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Largest G / spacing over horizontal and vertical grid edges with both
    /// ends defined.
    pub fn grid_lipschitz(&self) -> f64 {
        let g = self.grid;
        (0..g.len())
            .into_par_iter()
            .filter(|&v| self.mask[v])
            .map(|v| {
                let [i, j] = g.coords(v);
                let a = self.value(v).expect("defined");
                let mut best: f64 = 0.0;
                for (ok, w) in [(i + 1 < g.nx, v + 1), (j + 1 < g.ny, v + g.nx)] {
                    if ok && self.mask[w] {
                        let b = self.value(w).expect("defined");
                        best = best.max(metric_g(&a, &b).expect("same shape").0 / g.spacing);
                    }
                }
                best
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Largest G(f(x), Q⟦p⟧) over defined nodes.
    pub fn sup_distance_to(&self, p: &[f64]) -> f64 {
        let center = QPoint::repeated(self.q, p);
        self.defined_nodes()
            .iter()
            .map(|&v| metric_g(&self.value(v).expect("defined"), &center).expect("same shape").0)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_keeps_the_mask() {
        let grid = Grid::new([0.0, 0.0], 0.5, 3, 2).unwrap();
        let mask = [true, false, false, true, false, true];
        let f = GridQFunction::from_fn(grid, &mask, |p| QPoint::from_scalars(&[p[0], -p[1]]).unwrap()).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let back: GridQFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        assert!(s.contains("null"));
        let broken = s.replacen("true", "false", 1);
        assert!(serde_json::from_str::<GridQFunction>(&broken).is_err());
    }

    #[test]
    fn empty_mask_is_rejected() {
        let grid = Grid::new([0.0, 0.0], 1.0, 2, 2).unwrap();
        assert!(GridQFunction::new(grid, vec![None; 4]).is_err());
        assert!(Grid::new([0.0, 0.0], 0.0, 2, 2).is_err());
    }

    #[test]
    fn lipschitz_of_a_linear_function() {
        let grid = Grid::new([-1.0, -1.0], 0.25, 9, 9).unwrap();
        let f = GridQFunction::from_fn(grid, &vec![true; 81], |p| {
            QPoint::from_points(&[[3.0 * p[0]], [-3.0 * p[0]]]).unwrap()
        })
        .unwrap();
        assert!((f.lipschitz() - 3.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((f.grid_lipschitz() - 3.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((f.sup_distance_to(&[0.0]) - 3.0 * 2f64.sqrt()).abs() < 1e-12);
    }
}
