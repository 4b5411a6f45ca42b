//! Small shared helpers for symmetric matrix factorization with explicit
//! conditioning checks. Everything here operates on small dense matrices
//! (3x3 through 9x9), so eigendecomposition is the cheapest robust route.

use nalgebra::{DMatrix, DVector};

/// Eigenvalue-based condition estimate for a symmetric matrix.
/// Returns infinity when the smallest eigenvalue is non-positive.
#[cfg(test)]
pub(crate) fn sym_condition(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solve `M X = B` for symmetric positive-definite `M` through its spectral
/// factorization. Returns `None` together with the condition estimate when
/// `M` is too ill-conditioned for the solve to be meaningful.
pub(crate) fn sym_solve(
    m: &DMatrix<f64>,
    b: &DMatrix<f64>,
    cond_threshold: f64,
) -> Result<DMatrix<f64>, f64> {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if min <= 0.0 { f64::INFINITY } else { max / min };
    if !(cond < cond_threshold) {
        return Err(cond);
    }
    // M^{-1} B = Q diag(1/lambda) Q^T B
    let qtb = eig.eigenvectors.transpose() * b;
    let scaled = DMatrix::from_fn(qtb.nrows(), qtb.ncols(), |i, j| qtb[(i, j)] / eig.eigenvalues[i]);
    Ok(&eig.eigenvectors * scaled)
}

/// Inverse of a symmetric positive-definite matrix, with conditioning guard.
pub(crate) fn sym_inverse(m: &DMatrix<f64>, cond_threshold: f64) -> Result<DMatrix<f64>, f64> {
    let n = m.nrows();
    sym_solve(m, &DMatrix::identity(n, n), cond_threshold)
}

/// Generalized solve `M^+ B` for a PSD matrix `M` that may be rank-deficient.
///
/// Eigenvalues below `lambda_max / cond_threshold` are treated as exact
/// zeros and dropped. The solve is only meaningful when `B`'s columns lie
/// in the numerical range of `M`; a Fisher information block and its
/// coupling always satisfy this in exact arithmetic because both come from
/// the same Gram matrix. If a dropped eigendirection carries a
/// non-negligible component of `B`, the marginalization is genuinely
/// undefined and the condition estimate is returned as the error.
pub(crate) fn psd_marginal_solve(
    m: &DMatrix<f64>,
    b: &DMatrix<f64>,
    cond_threshold: f64,
) -> Result<DMatrix<f64>, f64> {
    let eig = m.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if lambda_max <= 0.0 {
        // M is (numerically) zero: valid only for zero coupling.
        let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        return if b_norm == 0.0 { Ok(DMatrix::zeros(m.nrows(), b.ncols())) } else { Err(f64::INFINITY) };
    }
    let cutoff = lambda_max / cond_threshold;
    let b_scale = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let qtb = eig.eigenvectors.transpose() * b;
    let mut scaled = DMatrix::zeros(qtb.nrows(), qtb.ncols());
    for i in 0..qtb.nrows() {
        let lambda = eig.eigenvalues[i];
        if lambda >= cutoff {
            for j in 0..qtb.ncols() {
                scaled[(i, j)] = qtb[(i, j)] / lambda;
            }
        } else {
            // Range check along the dropped direction.
            let row_norm: f64 =
                (0..qtb.ncols()).map(|j| qtb[(i, j)] * qtb[(i, j)]).sum::<f64>().sqrt();
            if row_norm > 1e-6 * b_scale {
                let cond = if lambda > 0.0 { lambda_max / lambda } else { f64::INFINITY };
                return Err(cond);
            }
        }
    }
    Ok(&eig.eigenvectors * scaled)
}

/// Smallest eigenvalue of a symmetric matrix.
#[cfg(test)]
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Largest absolute eigenvalue (spectral norm for symmetric input).
#[cfg(test)]
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
}

#[allow(dead_code)]
pub(crate) fn as_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
