//! Least-squares system identification and exploration-subspace geometry.
//!
//! The OLS estimator regresses x_{s+1} on the stacked covariate
//! z_s = (x_s, u_s): [Â | B̂] = (Σ x_{s+1} z_sᵀ) Λ† with Λ = Σ z_s z_sᵀ.
//! The confidence radius is the self-normalized bound
//!
//!   Conf = 6 λ_min(Λ)⁻¹ (d log 5 + log(4k² det(3Λ)/δ)),
//!
//! infinite when Λ is not positive definite. Exploration projectors split
//! ℝ^{d_x+d_u} into the closed-loop subspace span{(x, K̂x)} and its
//! d_u-dimensional complement, where persistent excitation is expensive;
//! two-scale diagnostics measure Λ against that split.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{hcat, min_eig_sym, op_norm, psd_pinv, psd_rank, stack_vec, sym_op_norm, symmetrize};

/// Relative eigenvalue cutoff for the pseudo-inverse of Λ.
pub const PINV_CUTOFF: f64 = 1e-12;

/// OLS fit of one data window.
#[derive(Clone, Debug)]
pub struct OlsEstimate {
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    /// Empirical covariance Σ z zᵀ over the fitted window.
    pub lambda: DMatrix<f64>,
    pub n_samples: usize,
    /// Λ was rank deficient; the pseudo-inverse route was load-bearing.
    pub rank_deficient: bool,
}

impl OlsEstimate {
    /// [Â | B̂] as one d_x × (d_x + d_u) block.
    pub fn theta(&self) -> DMatrix<f64> {
        hcat(&self.a_hat, &self.b_hat)
    }
}

/// Fit [Â | B̂] on the window with covariates z_s = (x_s, u_s),
/// s = 0..n−1, and targets x_{s+1}. `states` must hold one more entry than
/// `inputs`. Rank deficiency is handled by the pseudo-inverse and flagged.
pub fn ols_fit(states: &[DVector<f64>], inputs: &[DVector<f64>]) -> Result<OlsEstimate> {
    if states.len() != inputs.len() + 1 || inputs.is_empty() {
        return Err(Error::DimensionMismatch(
            "ols_fit needs n ≥ 1 inputs and n + 1 states".into(),
        ));
    }
    let dx = states[0].len();
    let du = inputs[0].len();
    let d = dx + du;
    let n = inputs.len();

    let mut lambda = DMatrix::zeros(d, d);
    let mut cross = DMatrix::zeros(dx, d);
    for s in 0..n {
        let z = stack_vec(&states[s], &inputs[s]);
        lambda += &z * z.transpose();
        cross += &states[s + 1] * z.transpose();
    }
    lambda = symmetrize(&lambda);
    let rank = psd_rank(&lambda, PINV_CUTOFF);
    let theta = &cross * psd_pinv(&lambda, PINV_CUTOFF);
    let a_hat = theta.columns(0, dx).into_owned();
    let b_hat = theta.columns(dx, du).into_owned();
    Ok(OlsEstimate { a_hat, b_hat, lambda, n_samples: n, rank_deficient: rank < d })
}

/// Self-normalized confidence radius for epoch `k`. Returns
/// `f64::INFINITY` when Λ is not positive definite. det(3Λ) is evaluated
/// in log space to avoid overflow at moderate dimensions and sample counts.
pub fn confidence_radius(lambda: &DMatrix<f64>, k: u32, delta: f64) -> Result<f64> {
    if lambda.nrows() != lambda.ncols() {
        return Err(Error::DimensionMismatch("Λ must be square".into()));
    }
    if !(0.0..1.0).contains(&delta) || delta == 0.0 {
        return Err(Error::InvalidArgument("confidence level δ must lie in (0, 1)".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("epoch index k must be ≥ 1".into()));
    }
    let eigs = lambda.symmetric_eigenvalues();
    let lambda_min = eigs.min();
    if lambda_min <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let d = lambda.nrows() as f64;
    let log_det_3l: f64 = eigs.iter().map(|&l| (3.0 * l).ln()).sum();
    let log_term = (4.0 * (k as f64) * (k as f64) / delta).ln() + log_det_3l;
    Ok(6.0 / lambda_min * (d * 5f64.ln() + log_term))
}

/// Orthogonal split of covariate space induced by a gain K̂.
#[derive(Clone, Debug)]
pub struct ExplorationProjector {
    /// Projector onto the d_u-dimensional complement of span{(x, K̂x)}.
    pub p_mat: DMatrix<f64>,
    /// Orthonormal basis (d × d_u) of range(p_mat): the exploration
    /// subspace, reachable only through input-side excitation.
    pub basis_par: DMatrix<f64>,
    /// Orthonormal basis (d × d_x) of the kernel: the closed-loop subspace
    /// swept for free by the process noise.
    pub basis_perp: DMatrix<f64>,
}

/// Build the projector annihilating every (x, K̂x).
pub fn exploration_projector(k_hat: &DMatrix<f64>) -> ExplorationProjector {
    let du = k_hat.nrows();
    let dx = k_hat.ncols();
    let d = dx + du;
    // stacked map x ↦ (x, K̂x), orthonormalized
    let mut stacked = DMatrix::zeros(d, dx);
    stacked.rows_mut(0, dx).copy_from(&DMatrix::identity(dx, dx));
    stacked.rows_mut(dx, du).copy_from(k_hat);
    let basis_perp = stacked.qr().q().columns(0, dx).into_owned();
    let p_mat = DMatrix::identity(d, d) - &basis_perp * basis_perp.transpose();

    // complete the basis: eigenvectors of the (symmetric, idempotent)
    // projector with eigenvalue 1
    let eig = symmetrize(&p_mat).symmetric_eigen();
    let mut cols = Vec::with_capacity(du);
    for i in 0..d {
        if eig.eigenvalues[i] > 0.5 {
            cols.push(eig.eigenvectors.column(i).into_owned());
        }
    }
    debug_assert_eq!(cols.len(), du);
    let basis_par = DMatrix::from_columns(&cols);
    ExplorationProjector { p_mat: symmetrize(&p_mat), basis_par, basis_perp }
}

/// Rayleigh-quotient extremes of Λ along the two bases, and the cross
/// block ‖P Λ (I − P)‖_op.
#[derive(Clone, Copy, Debug)]
pub struct TwoScaleDiagnostics {
    pub min_par: f64,
    pub min_perp: f64,
    pub max_par: f64,
    pub max_perp: f64,
    pub cross: f64,
}

pub fn two_scale_diagnostics(
    lambda: &DMatrix<f64>,
    proj: &ExplorationProjector,
) -> Result<TwoScaleDiagnostics> {
    let d = proj.p_mat.nrows();
    if lambda.nrows() != d || lambda.ncols() != d {
        return Err(Error::DimensionMismatch("Λ and projector dimensions disagree".into()));
    }
    let quad = |v: nalgebra::DVectorView<f64>| (v.transpose() * lambda * v)[(0, 0)];
    let (mut min_par, mut max_par) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..proj.basis_par.ncols() {
        let q = quad(proj.basis_par.column(i));
        min_par = min_par.min(q);
        max_par = max_par.max(q);
    }
    let (mut min_perp, mut max_perp) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..proj.basis_perp.ncols() {
        let q = quad(proj.basis_perp.column(i));
        min_perp = min_perp.min(q);
        max_perp = max_perp.max(q);
    }
    let cross = op_norm(&(&proj.p_mat * lambda * (DMatrix::identity(d, d) - &proj.p_mat)));
    Ok(TwoScaleDiagnostics { min_par, min_perp, max_par, max_perp, cross })
}

/// Squared-matrix Löwner certificate: under
///
///   X ⪰ λ₁ P + λ₂ (I − P),  ‖P X (I − P)‖ ≤ ν,  λ₁ ≤ ν ≤ √(λ₁λ₂)/2,
///
/// decides whether X² ⪰ (λ₁²/4) P + (λ₁²λ₂²/(16ν²)) (I − P). Precondition
/// violations are errors naming the failing inequality; the PSD
/// comparisons use eigenvalue tolerance −1e-9 times the natural scale.
pub fn squared_lowner_check(
    x: &DMatrix<f64>,
    proj: &ExplorationProjector,
    lambda1: f64,
    lambda2: f64,
    nu: f64,
) -> Result<bool> {
    let d = proj.p_mat.nrows();
    if x.nrows() != d || x.ncols() != d {
        return Err(Error::DimensionMismatch("X and projector dimensions disagree".into()));
    }
    if lambda1.is_nan() || lambda1 <= 0.0 || lambda2 < lambda1 {
        return Err(Error::PreconditionFailed("0 < λ₁ ≤ λ₂ is required".into()));
    }
    if nu < lambda1 {
        return Err(Error::PreconditionFailed(format!("ν ≥ λ₁ violated: {nu} < {lambda1}")));
    }
    let nu_cap = (lambda1 * lambda2).sqrt() / 2.0;
    if nu > nu_cap {
        return Err(Error::PreconditionFailed(format!(
            "ν ≤ √(λ₁λ₂)/2 violated: {nu} > {nu_cap}"
        )));
    }
    let x_norm = sym_op_norm(x);
    let id = DMatrix::identity(d, d);
    let floor = &proj.p_mat * lambda1 + (&id - &proj.p_mat) * lambda2;
    if min_eig_sym(&(x - &floor)) < -1e-9 * x_norm.max(1.0) {
        return Err(Error::PreconditionFailed(
            "X ⪰ λ₁P + λ₂(I − P) violated".into(),
        ));
    }
    let cross = op_norm(&(&proj.p_mat * x * (&id - &proj.p_mat)));
    if cross > nu * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::PreconditionFailed(format!(
            "‖P X (I − P)‖ ≤ ν violated: {cross} > {nu}"
        )));
    }

    let x_sq = symmetrize(&(x * x));
    let target = &proj.p_mat * (lambda1 * lambda1 / 4.0)
        + (&id - &proj.p_mat) * (lambda1 * lambda1 * lambda2 * lambda2 / (16.0 * nu * nu));
    Ok(min_eig_sym(&(x_sq - target)) >= -1e-9 * x_norm * x_norm)
}
