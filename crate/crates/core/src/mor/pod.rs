//! Proper orthogonal decomposition via the snapshot Gramian.

use nalgebra::{DMatrix, DVector};

use super::{MorError, SnapshotSet};

/// Relative eigenvalue floor; directions below it do not count toward the
/// numerical rank.
const EIG_RTOL: f64 = 1e-12;

/// Projection pair `x ~ V_r x_r`, `x_r = L_r x`.
#[derive(Debug, Clone)]
pub struct TransformPair {
    pub v_r: DMatrix<f64>,
    pub l_r: DMatrix<f64>,
    /// Retained eigen/singular values, descending.
    pub retained: DVector<f64>,
}

impl TransformPair {
    pub fn n_r(&self) -> usize {
        self.v_r.ncols()
    }

    pub fn dim(&self) -> usize {
        self.v_r.nrows()
    }

    /// Identity "reduction" at full order, mostly for equivalence checks.
    pub fn identity(dim: usize) -> Self {
        Self {
            v_r: DMatrix::identity(dim, dim),
            l_r: DMatrix::identity(dim, dim),
            retained: DVector::from_element(dim, 1.0),
        }
    }
}

fn sorted_eigs(g: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = nalgebra::SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(eig.eigenvectors.nrows(), order.len());
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

fn rank_from(values: &[f64]) -> usize {
    let max = values.first().copied().unwrap_or(0.0).max(0.0);
    if max <= 0.0 {
        return 0;
    }
    values.iter().take_while(|&&v| v > EIG_RTOL * max).count()
}

/// Count of snapshot directions above the relative eigenvalue floor.
pub fn numerical_rank(snap: &SnapshotSet) -> usize {
    let x = &snap.x;
    let g = if x.ncols() < x.nrows() {
        x.transpose() * x
    } else {
        x * x.transpose()
    };
    let (values, _) = sorted_eigs(g);
    rank_from(&values)
}

/// Normalize so each column's largest-magnitude entry is positive;
/// the matching row of `l_r` flips with it.
fn fix_signs(v_r: &mut DMatrix<f64>, l_r: &mut DMatrix<f64>) {
    for c in 0..v_r.ncols() {
        let col = v_r.column(c);
        let mut idx = 0;
        let mut best = -1.0f64;
        for (i, &val) in col.iter().enumerate() {
            if val.abs() > best {
                best = val.abs();
                idx = i;
            }
        }
        if v_r[(idx, c)] < 0.0 {
            for i in 0..v_r.nrows() {
                v_r[(i, c)] = -v_r[(i, c)];
            }
            for j in 0..l_r.ncols() {
                l_r[(c, j)] = -l_r[(c, j)];
            }
        }
    }
}

/// Small-Gramian branch: eigendecompose `X^T X` (m x m) and lift,
/// `V = X Q Lambda^{-1/2}`. Preferred when there are fewer snapshots than
/// states.
pub fn pod_via_small_gramian(x: &DMatrix<f64>, n_r: usize) -> Result<TransformPair, MorError> {
    let (values, q) = sorted_eigs(x.transpose() * x);
    let rank = rank_from(&values);
    if n_r > rank {
        return Err(MorError::RankExceeded { requested: n_r, rank });
    }
    let mut v_r = DMatrix::zeros(x.nrows(), n_r);
    for k in 0..n_r {
        let col = x * q.column(k) / values[k].sqrt();
        v_r.set_column(k, &col);
    }
    // The lifted columns are orthonormal, so the pseudo-inverse rows are just
    // the transpose: L = Lambda^{-1/2} Q^T X^T.
    let mut l_r = v_r.transpose();
    fix_signs(&mut v_r, &mut l_r);
    Ok(TransformPair {
        v_r,
        l_r,
        retained: DVector::from_vec(values[..n_r].to_vec()),
    })
}

/// Large-Gramian branch: eigendecompose `X X^T` (n x n) directly.
pub fn pod_via_large_gramian(x: &DMatrix<f64>, n_r: usize) -> Result<TransformPair, MorError> {
    let (values, vectors) = sorted_eigs(x * x.transpose());
    let rank = rank_from(&values);
    if n_r > rank {
        return Err(MorError::RankExceeded { requested: n_r, rank });
    }
    let mut v_r = DMatrix::zeros(x.nrows(), n_r);
    for k in 0..n_r {
        v_r.set_column(k, &vectors.column(k));
    }
    let mut l_r = v_r.transpose();
    fix_signs(&mut v_r, &mut l_r);
    Ok(TransformPair {
        v_r,
        l_r,
        retained: DVector::from_vec(values[..n_r].to_vec()),
    })
}

/// POD transform of the state snapshots, choosing the cheaper Gramian.
pub fn pod_transform(snap: &SnapshotSet, n_r: usize) -> Result<TransformPair, MorError> {
    if snap.x.ncols() < snap.x.nrows() {
        pod_via_small_gramian(&snap.x, n_r)
    } else {
        pod_via_large_gramian(&snap.x, n_r)
    }
}
