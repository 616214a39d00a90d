//! Square assignment problems over f64 costs.

/// A dense square cost matrix in row-major order.
#[derive(Clone, Debug)]
pub struct CostMatrix {
    size: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                data.push(f(i, j));
            }
        }
        CostMatrix { size, data }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    /// Cost of `perm`, summed in row order.
    pub fn cost(&self, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, &j)| self.get(i, j)).sum()
    }
}

/// Exhaustive branch-and-bound search in lexicographic order. Among all
/// optimal permutations the lexicographically smallest one is returned.
pub fn lexicographic_min(c: &CostMatrix) -> (Vec<usize>, f64) {
    let q = c.size;
    let mut best = f64::INFINITY;
    let mut best_perm: Vec<usize> = (0..q).collect();
    let mut cur = Vec::with_capacity(q);
    let mut used = vec![false; q];

    fn rec(
        c: &CostMatrix,
        row: usize,
        partial: f64,
        cur: &mut Vec<usize>,
        used: &mut [bool],
        best: &mut f64,
        best_perm: &mut Vec<usize>,
    ) {
        let q = c.size;
        if row == q {
            if partial < *best {
                *best = partial;
                best_perm.clone_from(cur);
            }
            return;
        }
        for j in 0..q {
            if used[j] {
                continue;
            }
            let p = partial + c.get(row, j);
            // costs are nonnegative, so a tie can only come from a later permutation
            if p >= *best {
                continue;
            }
            used[j] = true;
            cur.push(j);
            rec(c, row + 1, p, cur, used, best, best_perm);
            cur.pop();
            used[j] = false;
        }
    }

    rec(c, 0, 0.0, &mut cur, &mut used, &mut best, &mut best_perm);
    (best_perm, best)
}

/// Kuhn–Munkres with potentials, O(q³). Returns the row -> column assignment.
pub fn hungarian(c: &CostMatrix) -> Vec<usize> {
    let n = c.size;
    let inf = f64::INFINITY;
    // 1-based arrays, column 0 is a virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = c.get(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            perm[p[j] - 1] = j - 1;
        }
    }
    perm
}

/// Largest size for which [`second_best`] enumerates permutations.
const ENUMERATE_MAX: usize = 8;

/// Cost of the cheapest permutation that is not `equivalent` to the optimum
/// `best`, or `None` when every permutation is equivalent.
///
/// Up to size 8 this enumerates; above it, Murty's partition of the solution
/// space is used and `equivalent` is only consulted on the returned candidate.
pub fn second_best(
    c: &CostMatrix,
    best: &[usize],
    equivalent: impl Fn(&[usize]) -> bool,
) -> Option<f64> {
    let q = c.size;
    if q <= ENUMERATE_MAX {
        let mut out: Option<f64> = None;
        let mut perm: Vec<usize> = (0..q).collect();
        permute_all(&mut perm, 0, &mut |p| {
            if p != best && !equivalent(p) {
                let cost = c.cost(p);
                if out.map_or(true, |o| cost < o) {
                    out = Some(cost);
                }
            }
        });
        return out;
    }

    let total: f64 = c.data.iter().sum();
    let big = (total + 1.0) * 1e6;
    let mut out: Option<(f64, Vec<usize>)> = None;
    for k in 0..q {
        let m = CostMatrix::from_fn(q, |i, j| {
            if i < k {
                if j == best[i] {
                    c.get(i, j)
                } else {
                    big
                }
            } else if i == k && j == best[k] {
                big
            } else {
                c.get(i, j)
            }
        });
        let perm = hungarian(&m);
        let cost = m.cost(&perm);
        if cost >= big {
            continue;
        }
        let cost = c.cost(&perm);
        if out.as_ref().map_or(true, |(o, _)| cost < *o) {
            out = Some((cost, perm));
        }
    }
    match out {
        Some((cost, perm)) if !equivalent(&perm) => Some(cost),
        Some(_) => None,
        None => None,
    }
}

fn permute_all(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute_all(p, k + 1, f);
        p.swap(k, i);
    }
}
