//! Compressed sparse row matrices sized for the state-space slices.
//!
//! The slices couple each state to a handful of upstream neighbours, so a
//! hand-rolled CSR with the few kernels the simulation loop needs (matvec,
//! dense projection products, and a topological solve for the implicit-scheme
//! `E`) beats pulling in a general sparse stack.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("triplet ({row}, {col}) outside {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("coupling cycle through state {state}; upstream substitution order does not exist")]
    CouplingCycle { state: usize },
    #[error("zero diagonal at state {state}; matrix is singular")]
    ZeroDiagonal { state: usize },
}

/// Triplet accumulator; duplicate entries sum on build.
#[derive(Debug, Clone)]
pub struct Triplets {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn build(self) -> CsrMatrix {
        let mut entries = self.entries;
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (row, col, value) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == row && last.1 == col => last.2 += value,
                _ => merged.push((row, col, value)),
            }
        }

        let mut row_ptr = vec![0usize; self.nrows + 1];
        for &(row, _, _) in &merged {
            row_ptr[row + 1] += 1;
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let (col_idx, values) = merged.into_iter().map(|(_, c, v)| (c, v)).unzip();

        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Immutable CSR matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 1.0);
        }
        t.build()
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Triplets::new(nrows, ncols).build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of one row as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .find_map(|(col, v)| (col == j).then_some(v))
            .unwrap_or(0.0)
    }

    /// `y = self * x`.
    pub fn mul_vec(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    /// `y += self^T * x`.
    pub fn transpose_mul_vec_add(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for i in 0..self.nrows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * xi;
            }
        }
    }

    /// `self * rhs` with a dense right factor.
    pub fn mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        debug_assert_eq!(rhs.nrows(), self.ncols);
        let mut out = DMatrix::zeros(self.nrows, rhs.ncols());
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let v = self.values[k];
                let j = self.col_idx[k];
                for c in 0..rhs.ncols() {
                    out[(i, c)] += v * rhs[(j, c)];
                }
            }
        }
        out
    }

    /// `lhs * self` with a dense left factor.
    pub fn pre_mul_dense(&self, lhs: &DMatrix<f64>) -> DMatrix<f64> {
        debug_assert_eq!(lhs.ncols(), self.nrows);
        let mut out = DMatrix::zeros(lhs.nrows(), self.ncols);
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let v = self.values[k];
                let j = self.col_idx[k];
                for r in 0..lhs.nrows() {
                    out[(r, j)] += lhs[(r, i)] * v;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// Dense column `self * e_j`.
    pub fn column_dense(&self, j: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.nrows);
        for i in 0..self.nrows {
            for (col, v) in self.row(i) {
                if col == j {
                    out[i] += v;
                }
            }
        }
        out
    }
}

/// Substitution order for square systems whose off-diagonal couplings follow
/// the instantaneous flow directions.
///
/// Water cannot circulate around a loop at a single instant, so the coupling
/// graph of the implicit-scheme `E` is acyclic and a topological order turns
/// the solve into one substitution sweep. The order is the symbolic
/// factorization; it is recomputed once per hydraulic step.
#[derive(Debug, Clone)]
pub struct UpstreamFactor {
    order: Vec<usize>,
}

impl UpstreamFactor {
    pub fn analyze(m: &CsrMatrix) -> Result<Self, SparseError> {
        assert_eq!(m.nrows(), m.ncols());
        let n = m.nrows();
        for i in 0..n {
            if m.get(i, i) == 0.0 {
                return Err(SparseError::ZeroDiagonal { state: i });
            }
        }

        // Kahn's algorithm over "row i needs column j first" edges.
        let mut indegree = vec![0usize; n];
        let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            for (j, _) in m.row(i) {
                if j != i {
                    indegree[i] += 1;
                    dependents[j].push(i);
                }
            }
        }
        let mut queue: std::collections::VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &d in &dependents[i] {
                indegree[d] -= 1;
                if indegree[d] == 0 {
                    queue.push_back(d);
                }
            }
        }
        if order.len() != n {
            let state = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
            return Err(SparseError::CouplingCycle { state });
        }
        Ok(Self { order })
    }

    /// Solve `m * x = rhs` by substitution in topological order.
    pub fn solve(&self, m: &CsrMatrix, rhs: &DVector<f64>, x: &mut DVector<f64>) {
        debug_assert_eq!(rhs.len(), m.nrows());
        for &i in &self.order {
            let mut acc = rhs[i];
            let mut diag = 0.0;
            for (j, v) in m.row(i) {
                if j == i {
                    diag = v;
                } else {
                    acc -= v * x[j];
                }
            }
            x[i] = acc / diag;
        }
    }

    /// Solve `m^T * x = rhs` by the reverse substitution sweep.
    pub fn solve_transpose(&self, m: &CsrMatrix, rhs: &DVector<f64>, x: &mut DVector<f64>) {
        let mut acc = rhs.clone();
        for &i in self.order.iter().rev() {
            let diag = m.get(i, i);
            x[i] = acc[i] / diag;
            for (j, v) in m.row(i) {
                if j != i {
                    acc[j] -= v * x[i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example() -> CsrMatrix {
        // [2 0 0; -1 1 0; 0 -0.5 1] — row 1 depends on 0, row 2 on 1.
        let mut t = Triplets::new(3, 3);
        t.push(0, 0, 2.0);
        t.push(1, 0, -1.0);
        t.push(1, 1, 1.0);
        t.push(2, 1, -0.5);
        t.push(2, 2, 1.0);
        t.build()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 1, 1.5);
        t.push(0, 1, 0.5);
        t.push(1, 0, -1.0);
        let m = t.build();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn matvec_matches_dense() {
        let m = example();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let mut y = DVector::zeros(3);
        m.mul_vec(&x, &mut y);
        let yd = m.to_dense() * &x;
        assert_relative_eq!(y, yd, epsilon = 1e-14);
    }

    #[test]
    fn topo_solve_matches_dense_lu() {
        let m = example();
        let rhs = DVector::from_vec(vec![4.0, 1.0, -2.0]);
        let factor = UpstreamFactor::analyze(&m).unwrap();
        let mut x = DVector::zeros(3);
        factor.solve(&m, &rhs, &mut x);
        let xd = m.to_dense().lu().solve(&rhs).unwrap();
        assert_relative_eq!(x, xd, epsilon = 1e-12);

        let mut xt = DVector::zeros(3);
        factor.solve_transpose(&m, &rhs, &mut xt);
        let xtd = m.to_dense().transpose().lu().solve(&rhs).unwrap();
        assert_relative_eq!(xt, xtd, epsilon = 1e-12);
    }

    #[test]
    fn cycle_detected() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 1, -0.5);
        t.push(1, 1, 1.0);
        t.push(1, 0, -0.5);
        let m = t.build();
        assert!(matches!(
            UpstreamFactor::analyze(&m),
            Err(SparseError::CouplingCycle { .. })
        ));
    }

    #[test]
    fn projection_products_match_dense() {
        let m = example();
        let dense = m.to_dense();
        let rhs = DMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64 - 1.0);
        let lhs = DMatrix::from_fn(2, 3, |i, j| (3 * i + j) as f64 * 0.5);
        assert_relative_eq!(m.mul_dense(&rhs), &dense * &rhs, epsilon = 1e-14);
        assert_relative_eq!(m.pre_mul_dense(&lhs), &lhs * &dense, epsilon = 1e-14);
    }
}
