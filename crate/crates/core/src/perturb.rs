//! Riccati perturbation certificates.
//!
//! For a stabilizable instance with DARE solution P, the radius constants
//!
//!   C_safe = 54 ‖P‖⁵,   C_est = 142 ‖P‖⁸
//!
//! govern certainty equivalence: any estimate within operator distance
//! 1/C_safe synthesizes a stabilizing controller whose excess cost is at
//! most C_est · ε_F². The derivative formulas route through the Stein
//! operator: along a linear interpolation (A + tΔ_A, B + tΔ_B),
//!
//!   P′ = dlyap(A_cl, A_clᵀP Δ_cl + Δ_clᵀP A_cl),  Δ_cl = Δ_A + Δ_B K,
//!
//! and ‖P′(t)‖ ≤ 4‖P(t)‖³ ε_op self-bounds the curve, giving
//! ‖P(t)‖ ≤ (1 − α)^{−1/2} ‖P(0)‖ whenever α = 8‖P(0)‖² ε_op < 1.

use nalgebra::DMatrix;

use crate::control::{
    controller_value, solve_dare_default, solve_dare_from, solve_dlyap, spectral_radius,
    LqrInstance, RiccatiSolution, DEFAULT_DARE_MAX_ITER, DEFAULT_DARE_TOL,
};
use crate::error::{Error, Result};
use crate::linalg::{frob_norm, min_eig_sym, op_norm, sym_op_norm, symmetrize};

/// Default grid size for [`trace_riccati_curve`].
pub const DEFAULT_CURVE_STEPS: usize = 32;

/// Safe/estimation radius constants (C_safe, C_est) from the DARE solution.
///
/// Rejects ‖P‖ < 1 rather than clamping: the cost normalization R_x ⪰ I
/// forces P ⪰ I, so a smaller norm indicates caller error.
pub fn certificate_constants(p: &DMatrix<f64>) -> Result<(f64, f64)> {
    let norm = sym_op_norm(p);
    if norm < 1.0 - 1e-9 {
        return Err(Error::InvalidNormalization(format!(
            "certificate constants need ‖P‖ ≥ 1, got {norm}"
        )));
    }
    Ok((54.0 * norm.powi(5), 142.0 * norm.powi(8)))
}

/// Directional derivatives (P′, K′) of the DARE solution and optimal gain
/// at `inst` along the perturbation (dA, dB).
pub fn riccati_derivative(
    inst: &LqrInstance,
    d_a: &DMatrix<f64>,
    d_b: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sol = solve_dare_default(inst)?;
    riccati_derivative_at(inst, &sol, d_a, d_b)
}

/// [`riccati_derivative`] re-using an existing DARE solution.
pub fn riccati_derivative_at(
    inst: &LqrInstance,
    sol: &RiccatiSolution,
    d_a: &DMatrix<f64>,
    d_b: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (dx, du) = (inst.dim_x(), inst.dim_u());
    if d_a.nrows() != dx || d_a.ncols() != dx || d_b.nrows() != dx || d_b.ncols() != du {
        return Err(Error::DimensionMismatch("perturbation shapes must match (A, B)".into()));
    }
    let p = &sol.p;
    let k = &sol.k;
    let a_cl = sol.closed_loop(inst);
    let d_cl = d_a + d_b * k;
    let q1 = a_cl.transpose() * p * &d_cl + d_cl.transpose() * p * &a_cl;
    let p_prime = solve_dlyap(&a_cl, &symmetrize(&q1))?;

    let b = inst.b();
    let btpb = symmetrize(&(inst.r_u() + b.transpose() * p * b));
    let chol = btpb
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("R_u + BᵀPB not positive definite".into()))?;
    let rhs = d_b.transpose() * p * &a_cl + b.transpose() * p * &d_cl + b.transpose() * &p_prime * &a_cl;
    let k_prime = -chol.solve(&rhs);
    Ok((p_prime, k_prime))
}

/// Gain derivative for the packing perturbation (dA, dB) = (−ΔK, Δ), for
/// which P′(0) = 0 and the formula collapses to
/// −(R_u + BᵀPB)⁻¹ Δᵀ P A_cl.
pub fn special_perturbation_derivative(
    inst: &LqrInstance,
    sol: &RiccatiSolution,
    delta: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if delta.nrows() != inst.dim_x() || delta.ncols() != inst.dim_u() {
        return Err(Error::DimensionMismatch("Δ must be d_x × d_u".into()));
    }
    let p = &sol.p;
    let a_cl = sol.closed_loop(inst);
    let b = inst.b();
    let btpb = symmetrize(&(inst.r_u() + b.transpose() * p * b));
    let chol = btpb
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("R_u + BᵀPB not positive definite".into()))?;
    Ok(-chol.solve(&(delta.transpose() * p * a_cl)))
}

/// The DARE solution and gain sampled along the line from `inst` to
/// (A_hat, B_hat), with the self-bounding diagnostics.
#[derive(Clone, Debug)]
pub struct CurveTrace {
    /// Sample points in [0, 1].
    pub t_grid: Vec<f64>,
    /// P(t) at each sample.
    pub p_samples: Vec<DMatrix<f64>>,
    /// K(t) at each sample.
    pub k_samples: Vec<DMatrix<f64>>,
    /// ‖P′(t)‖_op at each sample.
    pub p_prime_norms: Vec<f64>,
    /// Guaranteed ceiling (1 − α)^{−1/2} ‖P(0)‖.
    pub p_norm_bound: f64,
    /// Observed max ‖P(t)‖_op.
    pub max_p_norm: f64,
    /// α = 8 ‖P(0)‖² ε_op for this curve.
    pub alpha: f64,
    /// ε_op of the perturbation direction.
    pub eps_op: f64,
}

/// Trace the DARE solution along (A + tΔ_A, B + tΔ_B) on a uniform grid,
/// re-solving at each point (warm-started) and checking the self-bound
/// ‖P′(t)‖ ≤ 4‖P(t)‖³ ε_op and the norm ceiling at every sample.
pub fn trace_riccati_curve(
    inst: &LqrInstance,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    n_steps: usize,
) -> Result<CurveTrace> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be ≥ 1".into()));
    }
    let d_a = a_hat - inst.a();
    let d_b = b_hat - inst.b();
    let eps_op = op_norm(&d_a).max(op_norm(&d_b));
    let sol0 = solve_dare_default(inst)?;
    let p0_norm = sym_op_norm(&sol0.p);
    let alpha = 8.0 * p0_norm * p0_norm * eps_op;
    if alpha >= 1.0 {
        return Err(Error::OutsideGuarantee { alpha });
    }
    let p_norm_bound = (1.0 - alpha).powf(-0.5) * p0_norm;

    let mut trace = CurveTrace {
        t_grid: Vec::with_capacity(n_steps + 1),
        p_samples: Vec::with_capacity(n_steps + 1),
        k_samples: Vec::with_capacity(n_steps + 1),
        p_prime_norms: Vec::with_capacity(n_steps + 1),
        p_norm_bound,
        max_p_norm: 0.0,
        alpha,
        eps_op,
    };

    let mut warm = sol0.p.clone();
    for i in 0..=n_steps {
        let t = i as f64 / n_steps as f64;
        let a_t = inst.a() + &d_a * t;
        let b_t = inst.b() + &d_b * t;
        let inst_t = inst.with_dynamics(a_t, b_t)?;
        let sol_t = solve_dare_from(&inst_t, warm.clone(), DEFAULT_DARE_TOL, DEFAULT_DARE_MAX_ITER)
            .map_err(|e| match e {
                Error::NotStabilizable { .. } => Error::NotStabilizableOnCurve { t },
                other => other,
            })?;
        let (p_prime, _) = riccati_derivative_at(&inst_t, &sol_t, &d_a, &d_b)?;
        let p_norm = sym_op_norm(&sol_t.p);
        let dp_norm = sym_op_norm(&p_prime);

        let self_bound = 4.0 * p_norm.powi(3) * eps_op;
        if dp_norm > self_bound * (1.0 + 1e-8) + 1e-12 {
            return Err(Error::NumericalFailure(format!(
                "self-bound violated at t = {t}: ‖P′‖ = {dp_norm:.6e} > {self_bound:.6e}"
            )));
        }
        if p_norm > p_norm_bound * (1.0 + 1e-8) {
            return Err(Error::NumericalFailure(format!(
                "norm ceiling violated at t = {t}: ‖P‖ = {p_norm:.6e} > {p_norm_bound:.6e}"
            )));
        }

        trace.max_p_norm = trace.max_p_norm.max(p_norm);
        trace.t_grid.push(t);
        warm = sol_t.p.clone();
        trace.p_samples.push(sol_t.p);
        trace.k_samples.push(sol_t.k);
        trace.p_prime_norms.push(dp_norm);
    }
    Ok(trace)
}

/// Algorithm-level safe test: a confidence radius `conf` (a bound on the
/// squared operator error of the estimate) certifies the neighborhood when
/// 1/conf ≥ 9 C_safe(A₀, B₀)². Infinite or non-positive radii never certify.
pub fn certify_safe_neighborhood(solution: &RiccatiSolution, conf: f64) -> bool {
    if !conf.is_finite() || conf <= 0.0 {
        return false;
    }
    match certificate_constants(&solution.p) {
        Ok((c_safe, _)) => 1.0 / conf >= 9.0 * c_safe * c_safe,
        Err(_) => false,
    }
}

/// First-order Taylor model of the optimal gain at (A_hat, B_hat) and the
/// Frobenius norm of its remainder against the exact re-solve.
///
/// Requires the safe radius ε_op ≤ 1/C_safe; the remainder is O(ε²).
pub fn taylor_error(
    inst: &LqrInstance,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, f64)> {
    let sol = solve_dare_default(inst)?;
    let d_a = a_hat - inst.a();
    let d_b = b_hat - inst.b();
    let eps_op = op_norm(&d_a).max(op_norm(&d_b));
    let (c_safe, _) = certificate_constants(&sol.p)?;
    if eps_op > 1.0 / c_safe {
        return Err(Error::PreconditionFailed(format!(
            "taylor_error needs ε_op ≤ 1/C_safe: {eps_op:.3e} > {:.3e}",
            1.0 / c_safe
        )));
    }
    let (_, k_prime) = riccati_derivative_at(inst, &sol, &d_a, &d_b)?;
    let first_order = &sol.k + k_prime;
    let hat = solve_dare_default(&inst.with_dynamics(a_hat.clone(), b_hat.clone())?)?;
    let remainder = frob_norm(&(&hat.k - &first_order));
    Ok((first_order, remainder))
}

/// Shared-Lyapunov contraction test: with V = dlyap(A_cl,⋆, I), checks
///
///   A_cl,hatᵀ V A_cl,hat ⪯ (1 − ½‖V‖⁻¹) V
///
/// up to eigenvalue tolerance. A destabilizing gain fails the comparison
/// and returns false rather than an error.
pub fn lyapunov_contraction_check(
    inst: &LqrInstance,
    star: &RiccatiSolution,
    k_hat: &DMatrix<f64>,
) -> Result<bool> {
    if k_hat.nrows() != inst.dim_u() || k_hat.ncols() != inst.dim_x() {
        return Err(Error::DimensionMismatch("gain must be d_u × d_x".into()));
    }
    let a_cl_star = star.closed_loop(inst);
    let v = solve_dlyap(&a_cl_star, &DMatrix::identity(inst.dim_x(), inst.dim_x()))?;
    let v_norm = sym_op_norm(&v);
    let a_cl_hat = inst.a() + inst.b() * k_hat;
    let lhs = symmetrize(&(a_cl_hat.transpose() * &v * &a_cl_hat));
    let rhs = &v * (1.0 - 0.5 / v_norm);
    Ok(min_eig_sym(&(rhs - lhs)) >= -1e-9 * v_norm.max(1.0))
}

/// Numeric record of one certainty-equivalence perturbation experiment.
#[derive(Clone, Debug)]
pub struct PerturbationReport {
    /// max(‖Â − A‖_op, ‖B̂ − B‖_op).
    pub eps_op: f64,
    /// max(‖Â − A‖_F, ‖B̂ − B‖_F).
    pub eps_fro: f64,
    /// 8 ‖P⋆‖² ε_op.
    pub alpha: f64,
    /// Whether ε_op ≤ 1/C_safe.
    pub safe: bool,
    pub c_safe: f64,
    pub c_est: f64,
    /// J(K̂; A⋆, B⋆) − J⋆ (+∞ when K̂ does not stabilize the truth).
    pub j_gap: f64,
    /// C_est · ε_F².
    pub j_gap_bound: f64,
}

/// Synthesize the certainty-equivalent controller from (A_hat, B_hat) and
/// evaluate it on the true instance against the certificate bounds.
pub fn perturbation_report(
    inst: &LqrInstance,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
) -> Result<PerturbationReport> {
    let star = solve_dare_default(inst)?;
    let (c_safe, c_est) = certificate_constants(&star.p)?;
    let d_a = a_hat - inst.a();
    let d_b = b_hat - inst.b();
    let eps_op = op_norm(&d_a).max(op_norm(&d_b));
    let eps_fro = frob_norm(&d_a).max(frob_norm(&d_b));
    let p_norm = sym_op_norm(&star.p);
    let alpha = 8.0 * p_norm * p_norm * eps_op;
    let safe = eps_op <= 1.0 / c_safe;

    let hat = solve_dare_default(&inst.with_dynamics(a_hat.clone(), b_hat.clone())?)?;
    let rho_hat = spectral_radius(&(inst.a() + inst.b() * &hat.k))?;
    let j_gap = if rho_hat < 1.0 {
        let (_, j) = controller_value(inst, &hat.k)?;
        j - star.j_star()
    } else {
        f64::INFINITY
    };
    Ok(PerturbationReport {
        eps_op,
        eps_fro,
        alpha,
        safe,
        c_safe,
        c_est,
        j_gap,
        j_gap_bound: c_est * eps_fro * eps_fro,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::solve_dare_default;
    use nalgebra::dmatrix;

    fn scalar_inst(a: f64, b: f64) -> LqrInstance {
        LqrInstance::scalar(a, b)
    }

    #[test]
    fn certificate_constants_examples() {
        // coefficients 54 and 142 at ‖P‖ = 1; powers 5 and 8 at ‖P‖ = 2
        let p1 = DMatrix::identity(3, 3);
        let (cs, ce) = certificate_constants(&p1).unwrap();
        assert_eq!((cs, ce), (54.0, 142.0));

        let p2 = DMatrix::from_diagonal(&nalgebra::dvector![2.0, 1.0]);
        let (cs, ce) = certificate_constants(&p2).unwrap();
        assert!((cs - 1728.0).abs() < 1e-9);
        assert!((ce - 36352.0).abs() < 1e-9);
    }

    #[test]
    fn certificate_constants_reject_subunit_p() {
        let p = DMatrix::from_element(1, 1, 0.5);
        assert!(matches!(
            certificate_constants(&p),
            Err(Error::InvalidNormalization(_))
        ));
    }

    #[test]
    fn derivative_is_zero_for_zero_direction() {
        let inst = scalar_inst(0.7, 1.0);
        let (dp, dk) =
            riccati_derivative(&inst, &DMatrix::zeros(1, 1), &DMatrix::zeros(1, 1)).unwrap();
        assert!(dp.amax() < 1e-14);
        assert!(dk.amax() < 1e-14);
    }

    #[test]
    fn special_perturbation_of_zero_is_zero() {
        let inst = scalar_inst(0.6, 1.0);
        let sol = solve_dare_default(&inst).unwrap();
        let kp = special_perturbation_derivative(&inst, &sol, &DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(kp[(0, 0)], 0.0);
    }

    #[test]
    fn scalar_special_perturbation_matches_closed_form() {
        // a = b = 1: K′ along (−δK⋆, δ) equals −δ/φ³
        let inst = scalar_inst(1.0, 1.0);
        let sol = solve_dare_default(&inst).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let delta = 0.01;
        let d = DMatrix::from_element(1, 1, delta);
        let kp = special_perturbation_derivative(&inst, &sol, &d).unwrap();
        assert!((kp[(0, 0)] + delta / phi.powi(3)).abs() < 1e-10, "{}", kp[(0, 0)]);

        // and the general formula agrees on the same direction
        let d_a = -&d * &sol.k;
        let (_, kp_general) = riccati_derivative_at(&inst, &sol, &d_a, &d).unwrap();
        assert!((kp_general[(0, 0)] - kp[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn scalar_derivative_matches_finite_difference() {
        let inst = scalar_inst(1.0, 1.0);
        let sol = solve_dare_default(&inst).unwrap();
        let delta = DMatrix::from_element(1, 1, 1.0);
        let d_a = -&delta * &sol.k;

        let h = 1e-6;
        let plus = solve_dare_default(
            &inst.with_dynamics(inst.a() + &d_a * h, inst.b() + &delta * h).unwrap(),
        )
        .unwrap();
        let minus = solve_dare_default(
            &inst.with_dynamics(inst.a() - &d_a * h, inst.b() - &delta * h).unwrap(),
        )
        .unwrap();
        let fd = (&plus.k - &minus.k) / (2.0 * h);
        let (_, kp) = riccati_derivative_at(&inst, &sol, &d_a, &delta).unwrap();
        assert!((fd[(0, 0)] - kp[(0, 0)]).abs() < 1e-5 * kp[(0, 0)].abs().max(1.0));
    }

    #[test]
    fn trace_constant_curve() {
        let inst = scalar_inst(0.5, 1.0);
        let trace = trace_riccati_curve(&inst, inst.a(), inst.b(), 8).unwrap();
        let p0 = sym_op_norm(&trace.p_samples[0]);
        assert!((trace.max_p_norm - p0).abs() < 1e-10);
        assert!(trace.p_prime_norms.iter().all(|&x| x < 1e-10));
    }

    #[test]
    fn trace_scalar_growing_a() {
        // a: 1 → 1.01 stays within the guarantee and below the ceiling,
        // with P(t) monotone along the grid
        let inst = scalar_inst(1.0, 1.0);
        let a_hat = DMatrix::from_element(1, 1, 1.01);
        let trace = trace_riccati_curve(&inst, &a_hat, inst.b(), 16).unwrap();
        for w in trace.p_samples.windows(2) {
            assert!(w[1][(0, 0)] >= w[0][(0, 0)] - 1e-12);
        }
        assert!(trace.max_p_norm <= trace.p_norm_bound);

        // endpoint gain equals the direct solve
        let hat_inst = inst.with_dynamics(a_hat, inst.b().clone()).unwrap();
        let hat = solve_dare_default(&hat_inst).unwrap();
        let k_end = trace.k_samples.last().unwrap();
        assert!((k_end - &hat.k).amax() < 1e-9);
    }

    #[test]
    fn trace_rejects_alpha_at_least_one() {
        let inst = scalar_inst(1.0, 1.0);
        let a_hat = DMatrix::from_element(1, 1, 2.0);
        assert!(matches!(
            trace_riccati_curve(&inst, &a_hat, inst.b(), 4),
            Err(Error::OutsideGuarantee { .. })
        ));
    }

    #[test]
    fn certify_safe_examples() {
        let inst = scalar_inst(0.0, 1.0); // P = 1
        let sol = solve_dare_default(&inst).unwrap();
        let boundary = 1.0 / (9.0 * 54.0 * 54.0);
        assert!(certify_safe_neighborhood(&sol, boundary));
        assert!(!certify_safe_neighborhood(&sol, f64::INFINITY));
        assert!(!certify_safe_neighborhood(&sol, 1.0 / 1000.0));
    }

    #[test]
    fn taylor_error_zero_at_base_point() {
        let inst = scalar_inst(0.8, 1.0);
        let (_, rem) = taylor_error(&inst, inst.a(), inst.b()).unwrap();
        assert!(rem < 1e-9);
    }

    #[test]
    fn taylor_error_scalar_small_radius() {
        // special direction at ε = 1e-3 leaves a remainder ≤ 1e-4
        let inst = scalar_inst(1.0, 1.0);
        let sol = solve_dare_default(&inst).unwrap();
        let eps = 1e-3;
        let delta = DMatrix::from_element(1, 1, eps);
        let a_hat = inst.a() - &delta * &sol.k;
        let b_hat = inst.b() + &delta;
        let (_, rem) = taylor_error(&inst, &a_hat, &b_hat).unwrap();
        assert!(rem <= 1e-4, "remainder {rem}");
    }

    #[test]
    fn taylor_error_quartic_ratio() {
        // halving ε quarters the remainder
        let inst = scalar_inst(0.9, 1.0);
        let dir_a = dmatrix![1.0];
        let dir_b = dmatrix![-0.5];
        let sol = solve_dare_default(&inst).unwrap();
        let (c_safe, _) = certificate_constants(&sol.p).unwrap();
        let eps = 0.5 / c_safe;
        let rem = |e: f64| {
            taylor_error(&inst, &(inst.a() + &dir_a * e), &(inst.b() + &dir_b * e))
                .unwrap()
                .1
        };
        let ratio = rem(eps) / rem(eps / 2.0);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn taylor_error_enforces_radius() {
        let inst = scalar_inst(1.0, 1.0);
        let a_hat = DMatrix::from_element(1, 1, 1.5);
        assert!(matches!(
            taylor_error(&inst, &a_hat, inst.b()),
            Err(Error::PreconditionFailed(_))
        ));
    }

    #[test]
    fn lyapunov_check_at_fixed_point_and_destabilized() {
        let inst = scalar_inst(0.9, 1.0);
        let star = solve_dare_default(&inst).unwrap();
        assert!(lyapunov_contraction_check(&inst, &star, &star.k).unwrap());

        let bad = DMatrix::from_element(1, 1, 1.0); // a + b·1 = 1.9
        assert!(!lyapunov_contraction_check(&inst, &star, &bad).unwrap());
    }

    #[test]
    fn lyapunov_check_for_ce_gain_in_safe_radius() {
        let inst = scalar_inst(0.9, 1.0);
        let star = solve_dare_default(&inst).unwrap();
        let (c_safe, _) = certificate_constants(&star.p).unwrap();
        let eps = 0.9 / c_safe;
        let hat_inst = inst
            .with_dynamics(inst.a().add_scalar(eps), inst.b().add_scalar(-eps))
            .unwrap();
        let hat = solve_dare_default(&hat_inst).unwrap();
        assert!(lyapunov_contraction_check(&inst, &star, &hat.k).unwrap());
    }

    #[test]
    fn report_bounds_hold_in_safe_radius() {
        let inst = scalar_inst(0.95, 0.8);
        let star = solve_dare_default(&inst).unwrap();
        let (c_safe, _) = certificate_constants(&star.p).unwrap();
        let eps = 0.999 / c_safe;
        let rep = perturbation_report(
            &inst,
            &inst.a().add_scalar(eps),
            &inst.b().add_scalar(-eps),
        )
        .unwrap();
        assert!(rep.safe);
        assert!(rep.j_gap <= rep.j_gap_bound);
        assert!(rep.j_gap >= -1e-12);
    }
}
