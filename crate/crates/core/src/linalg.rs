//! Small dense-matrix helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

/// Operator (spectral) norm via singular values.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Operator norm of a symmetric matrix via its eigenvalues. Cheaper and
/// more accurate than the SVD route on the symmetric matrices that dominate
/// this crate's inner loops.
pub fn sym_op_norm(m: &DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues().iter().fold(0.0, |acc, l| acc.max(l.abs()))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig_sym(m: &DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues().min()
}

/// Replace a nominally symmetric matrix by (M + Mᵀ)/2. Float drift breaks
/// PSD tests otherwise.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn frob_norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Whether `m` is PSD up to `tol` (entrywise-scale absolute tolerance on the
/// smallest eigenvalue).
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    min_eig_sym(m) >= -tol
}

/// Stack the state and input blocks of a `(x, u)` covariate into one vector.
pub fn stack_vec(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

/// Horizontal concatenation [a | b].
pub fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "hcat: row mismatch");
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix via its
/// eigendecomposition, with relative cutoff `cutoff · λ_max`.
pub fn psd_pinv(m: &DMatrix<f64>, cutoff: f64) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let thresh = cutoff * lmax.max(f64::MIN_POSITIVE);
    let mut inv = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > thresh {
            let v = eig.eigenvectors.column(i);
            inv += v * v.transpose() / l;
        }
    }
    inv
}

/// Rank of a symmetric PSD matrix under the same relative cutoff as
/// [`psd_pinv`].
pub fn psd_rank(m: &DMatrix<f64>, cutoff: f64) -> usize {
    let eigs = m.symmetric_eigenvalues();
    let lmax = eigs.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let thresh = cutoff * lmax.max(f64::MIN_POSITIVE);
    eigs.iter().filter(|&&l| l > thresh).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_norm_matches_sym_op_norm_on_symmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        assert!((op_norm(&m) - sym_op_norm(&m)).abs() < 1e-12);
    }

    #[test]
    fn psd_pinv_inverts_full_rank() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = psd_pinv(&m, 1e-12);
        let id = &m * &inv;
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn psd_pinv_handles_rank_deficiency() {
        // rank-one projector onto e1
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let inv = psd_pinv(&m, 1e-12);
        assert!((&inv - &m).norm() < 1e-14);
        assert_eq!(psd_rank(&m, 1e-12), 1);
    }
}
