//! Discrete empirical interpolation: greedy measurement selection for the
//! bilinear term.

use nalgebra::DMatrix;

use super::MorError;

const SV_RTOL: f64 = 1e-12;

/// DEIM basis and measurement set: `f ~ U_fr (K^T U_fr)^{-1} K^T f`, with
/// `K` the unit-vector columns at `indices`.
#[derive(Debug, Clone)]
pub struct DeimData {
    /// First `r` left singular vectors of the nonlinear-term snapshots.
    pub u_fr: DMatrix<f64>,
    /// Selected state rows, in selection order; all distinct.
    pub indices: Vec<usize>,
}

impl DeimData {
    pub fn order(&self) -> usize {
        self.indices.len()
    }

    /// `(K^T U_fr)^{-1}`.
    pub fn interpolation_inverse(&self) -> Result<DMatrix<f64>, MorError> {
        let r = self.order();
        let mut ktu = DMatrix::zeros(r, r);
        for (row, &i) in self.indices.iter().enumerate() {
            for col in 0..r {
                ktu[(row, col)] = self.u_fr[(i, col)];
            }
        }
        ktu.try_inverse()
            .ok_or_else(|| MorError::RankDeficient("K^T U_fr is singular".into()))
    }

    /// Oblique projector `U_fr (K^T U_fr)^{-1} K^T` applied to a full
    /// vector; exact for vectors in the span of the basis.
    pub fn reconstruct(&self, f: &nalgebra::DVector<f64>) -> Result<nalgebra::DVector<f64>, MorError> {
        let inv = self.interpolation_inverse()?;
        let sampled = nalgebra::DVector::from_iterator(
            self.order(),
            self.indices.iter().map(|&i| f[i]),
        );
        Ok(&self.u_fr * (inv * sampled))
    }
}

/// Lowest index wins ties, so selection is deterministic.
fn argmax_abs(v: &nalgebra::DVector<f64>) -> (usize, f64) {
    let mut idx = 0;
    let mut best = -1.0f64;
    for (i, &val) in v.iter().enumerate() {
        if val.abs() > best {
            best = val.abs();
            idx = i;
        }
    }
    (idx, best)
}

/// Greedy interpolation-point selection on the SVD basis of the
/// nonlinear-term snapshots.
///
/// The first index is the largest-magnitude entry of the first mode; each
/// following index maximizes the residual of the next mode against the
/// current measurement subspace.
pub fn greedy_deim(f_snapshots: &DMatrix<f64>, n_r: usize) -> Result<DeimData, MorError> {
    if n_r == 0 {
        return Err(MorError::Setup("DEIM order must be positive".into()));
    }
    let svd = f_snapshots.clone().svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("finite singular values")
    });
    let sigma_max = svd.singular_values[order[0]].max(0.0);
    let rank = order
        .iter()
        .take_while(|&&i| svd.singular_values[i] > SV_RTOL * sigma_max)
        .count();
    if n_r > rank {
        return Err(MorError::RankExceeded { requested: n_r, rank });
    }

    let dim = u.nrows();
    let mut u_fr = DMatrix::zeros(dim, n_r);
    for (k, &i) in order.iter().take(n_r).enumerate() {
        u_fr.set_column(k, &u.column(i));
    }

    let mut indices = Vec::with_capacity(n_r);
    let (i1, s1) = argmax_abs(&u_fr.column(0).into_owned());
    if s1 <= 0.0 {
        return Err(MorError::RankDeficient("first mode is zero".into()));
    }
    indices.push(i1);
    for next in 1..n_r {
        // Solve (K^T U_sel) b = K^T u_next on the current selection.
        let mut ktu = DMatrix::zeros(next, next);
        let mut rhs = nalgebra::DVector::zeros(next);
        for (row, &i) in indices.iter().enumerate() {
            for col in 0..next {
                ktu[(row, col)] = u_fr[(i, col)];
            }
            rhs[row] = u_fr[(i, next)];
        }
        let b = ktu
            .lu()
            .solve(&rhs)
            .ok_or_else(|| MorError::RankDeficient("measurement system singular".into()))?;
        let mut q = u_fr.column(next).into_owned();
        for col in 0..next {
            q -= u_fr.column(col) * b[col];
        }
        let (i_next, s) = argmax_abs(&q);
        if s <= 1e-14 * sigma_max.max(1.0) {
            return Err(MorError::RankDeficient(format!(
                "zero residual after {next} indices"
            )));
        }
        debug_assert!(!indices.contains(&i_next), "duplicate DEIM index");
        indices.push(i_next);
    }

    Ok(DeimData { u_fr, indices })
}
