//! Coordinate-form sparse matrices, a reusable sparse LU, and structural rank.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Sparse matrix in coordinate form. Duplicate entries are summed when compressed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CooMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl CooMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.nrows && c < self.ncols);
        self.entries.push((r, c, v));
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<Triplet<usize, usize, f64>> = self
            .entries
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::Numeric(format!("sparse assembly failed: {e:?}")))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn transpose(&self) -> CooMatrix {
        CooMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            entries: self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect(),
        }
    }

    /// Entries of each row, in insertion order.
    pub fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.nrows];
        for &(r, c, v) in &self.entries {
            rows[r].push((c, v));
        }
        rows
    }

    /// `Aᵀ diag(w) A` in coordinate form.
    pub fn weighted_gram(&self, w: &[f64]) -> CooMatrix {
        let mut out = CooMatrix::new(self.ncols, self.ncols);
        for (r, row) in self.rows().iter().enumerate() {
            for &(i, a) in row {
                for &(j, b) in row {
                    out.push(i, j, w[r] * a * b);
                }
            }
        }
        out
    }

    /// Frobenius norm (duplicates summed).
    pub fn frobenius_norm(&self) -> f64 {
        self.to_dense().norm()
    }
}

/// Sparse LU factorization of a square matrix.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(a: &CooMatrix) -> Result<Self> {
        LuCache::default().factor(a)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut m = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(m.as_mut());
        (0..self.n).map(|i| m[(i, 0)]).collect()
    }

    /// Solve for every column of `b` (row-major n × k dense matrix).
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, k) = (b.nrows(), b.ncols());
        let mut m = Mat::<f64>::from_fn(n, k, |i, j| b[(i, j)]);
        self.lu.solve_in_place(m.as_mut());
        DMatrix::from_fn(n, k, |i, j| m[(i, j)])
    }
}

/// Keeps the symbolic factorization for a fixed sparsity pattern so repeated
/// numeric factorizations skip the ordering step.
#[derive(Default)]
pub struct LuCache {
    pattern: Vec<(usize, usize)>,
    symbolic: Option<SymbolicLu<usize>>,
}

impl LuCache {
    pub fn factor(&mut self, a: &CooMatrix) -> Result<SparseLu> {
        if a.nrows != a.ncols {
            return Err(Error::Numeric(format!(
                "LU needs a square matrix, got {}x{}",
                a.nrows, a.ncols
            )));
        }
        let m = a.to_faer()?;
        let same = self.symbolic.is_some()
            && self.pattern.len() == a.entries.len()
            && self
                .pattern
                .iter()
                .zip(&a.entries)
                .all(|(p, e)| p.0 == e.0 && p.1 == e.1);
        if !same {
            let sym = SymbolicLu::try_new(m.symbolic())
                .map_err(|e| Error::Numeric(format!("symbolic LU failed: {e:?}")))?;
            self.symbolic = Some(sym);
            self.pattern = a.entries.iter().map(|e| (e.0, e.1)).collect();
        }
        let sym = self.symbolic.clone().expect("symbolic factor present");
        let lu = Lu::try_new_with_symbolic(sym, m.as_ref())
            .map_err(|e| Error::Numeric(format!("LU factorization failed: {e:?}")))?;
        Ok(SparseLu { n: a.nrows, lu })
    }
}

/// Maximum bipartite matching between rows and columns (Hopcroft-Karp).
///
/// Returns the structural rank and, for each column, its matched row.
pub fn structural_matching(a: &CooMatrix) -> (usize, Vec<Option<usize>>, Vec<Option<usize>>) {
    let mut adj = vec![Vec::new(); a.ncols];
    for &(r, c, _) in &a.entries {
        adj[c].push(r);
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    let (nc, nr) = (a.ncols, a.nrows);
    let mut col_match: Vec<Option<usize>> = vec![None; nc];
    let mut row_match: Vec<Option<usize>> = vec![None; nr];
    let mut dist = vec![u32::MAX; nc];
    loop {
        // BFS layering from free columns
        let mut queue = std::collections::VecDeque::new();
        for c in 0..nc {
            if col_match[c].is_none() {
                dist[c] = 0;
                queue.push_back(c);
            } else {
                dist[c] = u32::MAX;
            }
        }
        let mut found = false;
        while let Some(c) = queue.pop_front() {
            for &r in &adj[c] {
                match row_match[r] {
                    None => found = true,
                    Some(c2) if dist[c2] == u32::MAX => {
                        dist[c2] = dist[c] + 1;
                        queue.push_back(c2);
                    }
                    _ => {}
                }
            }
        }
        if !found {
            break;
        }
        let mut progress = false;
        for c in 0..nc {
            if col_match[c].is_none()
                && augment(c, &adj, &mut col_match, &mut row_match, &mut dist)
            {
                progress = true;
            }
        }
        if !progress {
            break;
        }
    }
    let rank = col_match.iter().filter(|m| m.is_some()).count();
    (rank, col_match, row_match)
}

fn augment(
    c: usize,
    adj: &[Vec<usize>],
    col_match: &mut [Option<usize>],
    row_match: &mut [Option<usize>],
    dist: &mut [u32],
) -> bool {
    // iterative DFS along the BFS layers
    let mut stack: Vec<(usize, usize)> = vec![(c, 0)];
    let mut path: Vec<(usize, usize)> = Vec::new();
    while let Some(&mut (col, ref mut next)) = stack.last_mut() {
        if *next >= adj[col].len() {
            dist[col] = u32::MAX;
            stack.pop();
            path.pop();
            continue;
        }
        let r = adj[col][*next];
        *next += 1;
        match row_match[r] {
            None => {
                path.push((col, r));
                for &(cc, rr) in &path {
                    col_match[cc] = Some(rr);
                    row_match[rr] = Some(cc);
                }
                return true;
            }
            Some(c2) if dist[c2] == dist[col].wrapping_add(1) => {
                path.push((col, r));
                stack.push((c2, 0));
            }
            _ => {}
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_rank(m: &DMatrix<f64>) -> usize {
        m.clone().svd(false, false).rank(1e-9)
    }

    #[test]
    fn lu_solves_small_system() {
        let mut a = CooMatrix::new(3, 3);
        for (r, c, v) in [(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 2.0), (2, 0, 1.0)] {
            a.push(r, c, v);
        }
        let lu = SparseLu::new(&a).unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]);
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn cache_reuses_symbolic_for_same_pattern() {
        let mut cache = LuCache::default();
        let mut a = CooMatrix::new(2, 2);
        a.push(0, 0, 2.0);
        a.push(1, 1, 3.0);
        a.push(0, 1, 1.0);
        let x1 = cache.factor(&a).unwrap().solve(&[1.0, 1.0]);
        a.entries[0].2 = 5.0;
        let x2 = cache.factor(&a).unwrap().solve(&[1.0, 1.0]);
        assert!((x1[1] - 1.0 / 3.0).abs() < 1e-14);
        assert!((x2[0] - (1.0 - 1.0 / 3.0) / 5.0).abs() < 1e-14);
    }

    #[test]
    fn duplicates_are_summed() {
        let mut a = CooMatrix::new(1, 1);
        a.push(0, 0, 1.0);
        a.push(0, 0, 2.0);
        assert_eq!(a.to_dense()[(0, 0)], 3.0);
        let lu = SparseLu::new(&a).unwrap();
        assert!((lu.solve(&[3.0])[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn structural_rank_of_empty_column() {
        let mut a = CooMatrix::new(3, 3);
        a.push(0, 0, 1.0);
        a.push(1, 0, 1.0);
        a.push(2, 2, 1.0);
        let (rank, cols, _) = structural_matching(&a);
        assert_eq!(rank, 2);
        assert!(cols[1].is_none());
    }

    proptest! {
        #[test]
        fn structural_rank_bounds_numeric_rank(
            n in 1usize..7, m in 1usize..7,
            cells in proptest::collection::vec((0usize..7, 0usize..7, -3i32..4), 0..30)
        ) {
            let mut a = CooMatrix::new(n, m);
            for (r, c, v) in cells {
                if r < n && c < m && v != 0 {
                    a.push(r, c, v as f64);
                }
            }
            let (rank, cols, rows) = structural_matching(&a);
            prop_assert!(rank >= dense_rank(&a.to_dense()));
            prop_assert!(rank <= n.min(m));
            // matching is consistent and uses only nonzero positions
            for (c, r) in cols.iter().enumerate() {
                if let Some(r) = r {
                    prop_assert_eq!(rows[*r], Some(c));
                    prop_assert!(a.entries.iter().any(|e| e.0 == *r && e.1 == c));
                }
            }
        }
    }
}
