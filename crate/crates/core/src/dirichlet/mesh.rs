use std::collections::HashMap;
use std::sync::OnceLock;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An undirected mesh edge with `u < v` and its cotangent weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// A triangulated planar domain with cotangent edge weights.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MeshRepr", into = "MeshRepr")]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_loop: Vec<usize>,
    /// Inner boundary loops, empty for a disk.
    holes: Vec<Vec<usize>>,
    edges: Vec<Edge>,
    edge_index: HashMap<(usize, usize), usize>,
    /// For each triangle, the edges opposite to its three corners.
    tri_edges: Vec<[usize; 3]>,
    adj_start: Vec<usize>,
    adj: Vec<(usize, usize)>,
    is_boundary: Vec<bool>,
    locator: OnceLock<Locator>,
}

/// Uniform bucket grid over the bounding box; each cell lists the triangles
/// whose bounding boxes meet it.
#[derive(Clone, Debug)]
struct Locator {
    lo: [f64; 2],
    cell: [f64; 2],
    dims: [usize; 2],
    start: Vec<usize>,
    items: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct MeshRepr {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    holes: Vec<Vec<usize>>,
}

impl TryFrom<MeshRepr> for Mesh {
    type Error = Error;
    fn try_from(r: MeshRepr) -> Result<Self> {
        Mesh::with_holes(r.vertices, r.triangles, r.boundary, r.holes)
    }
}

impl From<Mesh> for MeshRepr {
    fn from(m: Mesh) -> Self {
        MeshRepr { vertices: m.vertices, triangles: m.triangles, boundary: m.boundary_loop, holes: m.holes }
    }
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// Cotangent of the angle at `a` in triangle (a, b, c).
fn cot_at(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1]];
    let v = [c[0] - a[0], c[1] - a[1]];
    let dot = u[0] * v[0] + u[1] * v[1];
    let cross = (u[0] * v[1] - u[1] * v[0]).abs();
    dot / cross
}

fn angle_at(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1]];
    let v = [c[0] - a[0], c[1] - a[1]];
    let dot = u[0] * v[0] + u[1] * v[1];
    let cross = u[0] * v[1] - u[1] * v[0];
    cross.abs().atan2(dot)
}

impl Mesh {
    /// Builds a mesh from vertices, triangles and the ordered boundary loop.
    /// Triangles are reoriented counter-clockwise; weights are cotangent
    /// weights ½(cot α + cot β).
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>, boundary_loop: Vec<usize>) -> Result<Self> {
        Self::with_holes(vertices, triangles, boundary_loop, Vec::new())
    }

    /// [`Mesh::new`] for a domain with holes: `boundary_loop` is the outer
    /// loop and each entry of `holes` one inner loop.
    pub fn with_holes(
        vertices: Vec<[f64; 2]>,
        mut triangles: Vec<[usize; 3]>,
        boundary_loop: Vec<usize>,
        holes: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let nv = vertices.len();
        if nv == 0 || triangles.is_empty() {
            return Err(Error::InvalidInput("empty mesh".into()));
        }
        if vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite vertex".into()));
        }
        for t in triangles.iter_mut() {
            if t.iter().any(|&i| i >= nv) || t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidInput(format!("bad triangle {t:?}")));
            }
            let a = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            if a == 0.0 {
                return Err(Error::InvalidInput(format!("degenerate triangle {t:?}")));
            }
            if a < 0.0 {
                t.swap(1, 2);
            }
        }
        for l in std::iter::once(&boundary_loop).chain(&holes) {
            if l.len() < 3 || l.iter().any(|&i| i >= nv) {
                return Err(Error::InvalidInput("boundary loop needs at least three vertices".into()));
            }
        }

        let mut weights: HashMap<(usize, usize), f64> = HashMap::new();
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &triangles {
            for k in 0..3 {
                let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
                let key = (b.min(c), b.max(c));
                *weights.entry(key).or_insert(0.0) += 0.5 * cot_at(vertices[a], vertices[b], vertices[c]);
                *count.entry(key).or_insert(0) += 1;
            }
        }
        if count.values().any(|&c| c > 2) {
            return Err(Error::InvalidInput("non-manifold edge".into()));
        }
        let mut keys: Vec<(usize, usize)> = weights.keys().copied().collect();
        keys.sort_unstable();
        let edges: Vec<Edge> = keys.iter().map(|&(u, v)| Edge { u, v, weight: weights[&(u, v)] }).collect();
        let edge_index: HashMap<(usize, usize), usize> = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let tri_edges = triangles
            .iter()
            .map(|t| {
                let e = |a: usize, b: usize| edge_index[&(a.min(b), a.max(b))];
                [e(t[1], t[2]), e(t[2], t[0]), e(t[0], t[1])]
            })
            .collect();

        let mut deg = vec![0usize; nv];
        for e in &edges {
            deg[e.u] += 1;
            deg[e.v] += 1;
        }
        let mut adj_start = vec![0usize; nv + 1];
        for i in 0..nv {
            adj_start[i + 1] = adj_start[i] + deg[i];
        }
        let mut fill = adj_start.clone();
        let mut adj = vec![(0usize, 0usize); adj_start[nv]];
        for (k, e) in edges.iter().enumerate() {
            adj[fill[e.u]] = (e.v, k);
            fill[e.u] += 1;
            adj[fill[e.v]] = (e.u, k);
            fill[e.v] += 1;
        }

        let mut is_boundary = vec![false; nv];
        let mut loop_edges = 0;
        for l in std::iter::once(&boundary_loop).chain(&holes) {
            for (i, &b) in l.iter().enumerate() {
                let next = l[(i + 1) % l.len()];
                if count.get(&(b.min(next), b.max(next))) != Some(&1) {
                    return Err(Error::InvalidInput("boundary loop does not follow boundary edges".into()));
                }
                is_boundary[b] = true;
            }
            loop_edges += l.len();
        }
        let boundary_edges = count.values().filter(|&&c| c == 1).count();
        if boundary_edges != loop_edges {
            return Err(Error::InvalidInput("boundary loop does not cover the boundary".into()));
        }

        Ok(Mesh { vertices, triangles, boundary_loop, holes, edges, edge_index, tri_edges, adj_start, adj, is_boundary, locator: OnceLock::new() })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> [f64; 2] {
        self.vertices[i]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_loop(&self) -> &[usize] {
        &self.boundary_loop
    }

    pub fn holes(&self) -> &[Vec<usize>] {
        &self.holes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.is_boundary[v]
    }

    /// Index of the edge {a, b}, if present.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&(a.min(b), a.max(b))).copied()
    }

    /// Edges opposite to the three corners of triangle `t`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    /// (neighbor, edge index) pairs around `v`.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[self.adj_start[v]..self.adj_start[v + 1]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Half-cotangent of the angle opposite to each edge of triangle `t`,
    /// in the order of [`Mesh::triangle_edges`].
    pub fn triangle_half_cots(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        [0.5 * cot_at(a, b, c), 0.5 * cot_at(b, c, a), 0.5 * cot_at(c, a, b)]
    }

    /// Longest edge length.
    pub fn mesh_size(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| {
                let (a, b) = (self.vertices[e.u], self.vertices[e.v]);
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .fold(0.0, f64::max)
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                angle_at(a, b, c).min(angle_at(b, c, a)).min(angle_at(c, a, b))
            })
            .fold(PI, f64::min)
    }

    /// Vertex closest to `p`; ties go to the lowest index.
    pub fn nearest_vertex(&self, p: [f64; 2]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, v) in self.vertices.iter().enumerate() {
            let d = (v[0] - p[0]).powi(2) + (v[1] - p[1]).powi(2);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Barycentric coordinates of `p` in triangle `t`, in corner order.
    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        let area = signed_area(a, b, c);
        [signed_area(p, b, c) / area, signed_area(a, p, c) / area, signed_area(a, b, p) / area]
    }

    fn locator(&self) -> &Locator {
        self.locator.get_or_init(|| {
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for v in &self.vertices {
                for k in 0..2 {
                    lo[k] = lo[k].min(v[k]);
                    hi[k] = hi[k].max(v[k]);
                }
            }
            let side = ((self.triangles.len() as f64 / 2.0).sqrt().ceil() as usize).max(1);
            let dims = [side, side];
            let cell = [0, 1].map(|k| ((hi[k] - lo[k]) / side as f64).max(f64::MIN_POSITIVE));
            let index = |x: f64, k: usize| (((x - lo[k]) / cell[k]).floor().max(0.0) as usize).min(dims[k] - 1);
            let mut lists: Vec<Vec<usize>> = vec![Vec::new(); side * side];
            for (t, tri) in self.triangles.iter().enumerate() {
                let ps = tri.map(|i| self.vertices[i]);
                let (mut a, mut b) = ([usize::MAX; 2], [0usize; 2]);
                for p in ps {
                    for k in 0..2 {
                        a[k] = a[k].min(index(p[k], k));
                        b[k] = b[k].max(index(p[k], k));
                    }
                }
                for i in a[0]..=b[0] {
                    for j in a[1]..=b[1] {
                        lists[j * side + i].push(t);
                    }
                }
            }
            let mut start = vec![0];
            let mut items = Vec::new();
            for l in lists {
                items.extend(l);
                start.push(items.len());
            }
            Locator { lo, cell, dims, start, items }
        })
    }

    /// Triangle containing `p` with its barycentric coordinates. Points
    /// outside the mesh are attached to the triangle with the least negative
    /// barycentric coordinate and the coordinates are clamped and
    /// renormalized.
    pub fn locate(&self, p: [f64; 2]) -> (usize, [f64; 3]) {
        let loc = self.locator();
        let idx = [0, 1].map(|k| ((p[k] - loc.lo[k]) / loc.cell[k]).floor());
        let inside = (0..2).all(|k| idx[k] >= 0.0 && (idx[k] as usize) < loc.dims[k]);
        let mut best = (f64::NEG_INFINITY, 0usize, [0.0; 3]);
        let consider = |t: usize, best: &mut (f64, usize, [f64; 3])| {
            let l = self.barycentric(t, p);
            let m = l[0].min(l[1]).min(l[2]);
            if m > best.0 {
                *best = (m, t, l);
            }
        };
        if inside {
            let c = idx[1] as usize * loc.dims[0] + idx[0] as usize;
            for &t in &loc.items[loc.start[c]..loc.start[c + 1]] {
                consider(t, &mut best);
            }
        }
        if best.0 < -1e-12 {
            for t in 0..self.triangles.len() {
                consider(t, &mut best);
            }
        }
        let (m, t, mut l) = best;
        if m < 0.0 {
            l = l.map(|x| x.max(0.0));
            let s: f64 = l.iter().sum();
            l = l.map(|x| x / s);
        }
        (t, l)
    }

    /// Same connectivity with moved vertices; weights are recomputed.
    pub fn with_vertices(&self, vertices: Vec<[f64; 2]>) -> Result<Mesh> {
        Mesh::with_holes(vertices, self.triangles.clone(), self.boundary_loop.clone(), self.holes.clone())
    }
}

/// A triangulated disk of the given radius: a center vertex and rings
/// k = 1..=resolution of 6k equally spaced vertices, the first at angle 0.
/// Consecutive rings are zipped by angle and the result is made Delaunay
/// by edge flips, so all cotangent weights are nonnegative.
pub fn build_disk_mesh(radius: f64, resolution: usize) -> Result<Mesh> {
    build_graded_disk_mesh(radius, resolution, 1.0)
}

/// [`build_disk_mesh`] with ring k at radius R (k/N)^grading. Grading 2
/// keeps the triangle aspect ratio bounded while the spacing near the
/// center drops to R/N².
pub fn build_graded_disk_mesh(radius: f64, resolution: usize, grading: f64) -> Result<Mesh> {
    if resolution < 3 {
        return Err(Error::InvalidInput("resolution must be at least 3".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidInput("radius must be positive".into()));
    }
    if !(grading >= 1.0 && grading <= 3.0) {
        return Err(Error::InvalidInput("grading must lie in [1, 3]".into()));
    }
    let n = resolution;
    let mut vertices = vec![[0.0, 0.0]];
    let mut ring_start = vec![0usize];
    for k in 1..=n {
        ring_start.push(vertices.len());
        let m = 6 * k;
        let r = if k == n { radius } else { radius * (k as f64 / n as f64).powf(grading) };
        for j in 0..m {
            let t = TAU * j as f64 / m as f64;
            vertices.push([r * t.cos(), r * t.sin()]);
        }
    }
    let mut triangles = Vec::new();
    for j in 0..6 {
        triangles.push([0, 1 + j, 1 + (j + 1) % 6]);
    }
    for k in 2..=n {
        let (m_in, m_out) = (6 * (k - 1), 6 * k);
        let (s_in, s_out) = (ring_start[k - 1], ring_start[k]);
        let (mut i, mut j) = (0usize, 0usize);
        while i < m_in || j < m_out {
            let next_in = (i + 1) as f64 / m_in as f64;
            let next_out = (j + 1) as f64 / m_out as f64;
            let inner = s_in + i % m_in;
            let outer = s_out + j % m_out;
            if j < m_out && (i == m_in || next_out <= next_in) {
                triangles.push([inner, outer, s_out + (j + 1) % m_out]);
                j += 1;
            } else {
                triangles.push([inner, outer, s_in + (i + 1) % m_in]);
                i += 1;
            }
        }
    }
    for t in triangles.iter_mut() {
        if signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }
    delaunay_flip(&vertices, &mut triangles);
    let boundary = (ring_start[n]..vertices.len()).collect();
    Mesh::new(vertices, triangles, boundary)
}

/// Flips interior edges whose opposite angles sum to more than π.
fn delaunay_flip(vertices: &[[f64; 2]], triangles: &mut [[usize; 3]]) {
    loop {
        let mut owner: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (ti, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                owner.entry((a.min(b), a.max(b))).or_default().push(ti);
            }
        }
        let mut keys: Vec<_> = owner.keys().copied().collect();
        keys.sort_unstable();
        let mut flipped = false;
        let mut touched = vec![false; triangles.len()];
        for key in keys {
            let ts = &owner[&key];
            if ts.len() != 2 || touched[ts[0]] || touched[ts[1]] {
                continue;
            }
            let (t1, t2) = (ts[0], ts[1]);
            let opp = |t: &[usize; 3]| *t.iter().find(|&&x| x != key.0 && x != key.1).expect("triangle");
            let (c, d) = (opp(&triangles[t1]), opp(&triangles[t2]));
            let (a, b) = key;
            let alpha = angle_at(vertices[c], vertices[a], vertices[b]);
            let beta = angle_at(vertices[d], vertices[a], vertices[b]);
            if alpha + beta <= PI + 1e-12 {
                continue;
            }
            let mut n1 = [c, d, a];
            let mut n2 = [d, c, b];
            for t in [&mut n1, &mut n2] {
                if signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < 0.0 {
                    t.swap(1, 2);
                }
            }
            triangles[t1] = n1;
            triangles[t2] = n2;
            touched[t1] = true;
            touched[t2] = true;
            flipped = true;
        }
        if !flipped {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_mesh_basics() {
        let m = build_disk_mesh(1.0, 8).unwrap();
        assert_eq!(m.num_vertices(), 1 + 3 * 8 * 9);
        assert!(m.vertices().iter().all(|v| v[0].hypot(v[1]) <= 1.0 + 1e-12));
        assert_eq!(m.boundary_loop().len(), 48);
        assert_eq!(build_disk_mesh(1.0, 16).unwrap().boundary_loop().len(), 96);
        assert!(m.edges().iter().all(|e| e.weight >= -1e-12 && e.weight.is_finite()));
        assert!(m.min_angle() > 20f64.to_radians());
        assert!(build_disk_mesh(1.0, 2).is_err());
    }

    #[test]
    fn cotangent_energy_of_linear_map() {
        // cotangent weights reproduce ∫|∇x|² = area exactly for linear data
        let m = build_disk_mesh(1.0, 12).unwrap();
        let e: f64 = m
            .edges()
            .iter()
            .map(|e| e.weight * (m.vertex(e.u)[0] - m.vertex(e.v)[0]).powi(2))
            .sum();
        let area: f64 = (0..m.triangles().len()).map(|t| m.triangle_area(t)).sum();
        assert!((e - area).abs() < 1e-12);
        assert!((area - PI).abs() < 0.01);
    }

    #[test]
    fn json_roundtrip() {
        let m = build_disk_mesh(2.0, 3).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: Mesh = serde_json::from_str(&s).unwrap();
        assert_eq!(back.edges(), m.edges());
    }
}
