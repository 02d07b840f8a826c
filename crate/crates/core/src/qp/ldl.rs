//! Envelope (skyline) LDLᵀ factorization of symmetric quasi-definite
//! matrices with a reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

/// Reverse Cuthill-McKee permutation of an undirected graph given as
/// adjacency lists. Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adj, seed, &degree);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(adj: &[Vec<usize>], seed: usize, degree: &[usize]) -> usize {
    let mut root = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(adj, root);
        let max_level = levels.iter().filter_map(|l| *l).max().unwrap_or(0);
        if max_level <= ecc && ecc > 0 {
            break;
        }
        ecc = max_level;
        let cand = levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(max_level))
            .map(|(i, _)| i)
            .min_by_key(|&i| (degree[i], i));
        match cand {
            Some(c) if c != root => root = c,
            _ => break,
        }
    }
    root
}

fn bfs_levels(adj: &[Vec<usize>], root: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    let mut queue = VecDeque::new();
    level[root] = Some(0);
    queue.push_back(root);
    while let Some(v) = queue.pop_front() {
        let l = level[v].unwrap();
        for &w in &adj[v] {
            if level[w].is_none() {
                level[w] = Some(l + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

/// Skyline storage of the lower triangle: row `i` holds columns
/// `first[i] ..= i` contiguously.
#[derive(Debug, Clone)]
pub struct Skyline {
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
}

impl Skyline {
    /// Envelope from the lower-triangular pattern `(i, j)` with `j ≤ i`.
    pub fn new(n: usize, pattern: impl Iterator<Item = (usize, usize)>) -> Self {
        let mut first: Vec<usize> = (0..n).collect();
        for (i, j) in pattern {
            let (i, j) = if j > i { (j, i) } else { (i, j) };
            if j < first[i] {
                first[i] = j;
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for i in 0..n {
            start.push(acc);
            acc += i - first[i] + 1;
        }
        start.push(acc);
        Skyline { first, start, values: vec![0.0; acc], diag: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `v` at symmetric position `(i, j)`; entries outside the envelope
    /// are a logic error.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        debug_assert!(j >= self.first[i]);
        self.values[self.start[i] + j - self.first[i]] += v;
    }

    /// In-place LDLᵀ. Pivots smaller than `pivot_floor` in magnitude are
    /// replaced by `±pivot_floor` using `signs` (the expected inertia).
    pub fn factor(&mut self, signs: &[f64], pivot_floor: f64) {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            for j in fi..i {
                let fj = self.first[j];
                let lo = fi.max(fj);
                let sj = self.start[j];
                let mut acc = 0.0;
                if lo < j {
                    let a = &self.values[si + lo - fi..si + j - fi];
                    let b = &self.values[sj + lo - fj..sj + j - fj];
                    acc = dot(a, b);
                }
                self.values[si + j - fi] -= acc;
            }
            let mut d = self.values[si + i - fi];
            for j in fi..i {
                let g = self.values[si + j - fi];
                let l = g / self.diag[j];
                d -= g * l;
                self.values[si + j - fi] = l;
            }
            if !(d.abs() >= pivot_floor) || d.signum() != signs[i].signum() {
                d = signs[i].signum() * pivot_floor.max(d.abs());
            }
            self.diag[i] = d;
            self.values[si + i - fi] = 1.0;
        }
    }

    /// Solves `L D Lᵀ x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            let row = &self.values[si..si + i - fi];
            b[i] -= dot(row, &b[fi..i]);
        }
        for i in 0..n {
            b[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let si = self.start[i];
            let xi = b[i];
            if xi != 0.0 {
                for (k, l) in self.values[si..si + i - fi].iter().enumerate() {
                    b[fi + k] -= l * xi;
                }
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    let n = a.len();
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    for k in 4 * chunks..n {
        s0 += a[k] * b[k];
    }
    (s0 + s1) + (s2 + s3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn factor_solves_quasi_definite_system() {
        // [[4, 1, 1], [1, 3, 0], [1, 0, -1]]
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 1.0, 1.0, 3.0, 0.0, 1.0, 0.0, -1.0]);
        let mut sky = Skyline::new(3, [(1, 0), (2, 0)].into_iter());
        for i in 0..3 {
            for j in 0..=i {
                if a[(i, j)] != 0.0 && (j >= sky.first[i]) {
                    sky.add(i, j, a[(i, j)]);
                }
            }
        }
        sky.factor(&[1.0, 1.0, -1.0], 1e-14);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let mut x = b.as_slice().to_vec();
        sky.solve(&mut x);
        let r = &a * DVector::from_vec(x) - b;
        assert!(r.amax() < 1e-12);
    }

    #[test]
    fn rcm_reduces_bandwidth_of_shuffled_path() {
        // Path graph 0-5-1-4-2-3 labelled out of order.
        let edges = [(0, 5), (5, 1), (1, 4), (4, 2), (2, 3)];
        let mut adj = vec![Vec::new(); 6];
        for (a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut pos = vec![0; 6];
        for (new, old) in perm.iter().enumerate() {
            pos[*old] = new;
        }
        let bw = edges.iter().map(|(a, b)| (pos[*a] as i64 - pos[*b] as i64).abs()).max().unwrap();
        assert_eq!(bw, 1);
    }
}
