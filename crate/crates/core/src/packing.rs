//! Lower-bound packing constructions.
//!
//! Around a nominal instance with optimal gain K⋆, the alternatives
//!
//!   (A_e, B_e) = (A⋆ − Δ_e K⋆, B⋆ + Δ_e),  Δ_e = ε Σ_{ij} e_{ij} v_j w_iᵀ,
//!
//! indexed by sign patterns e ∈ {−1,+1}^{n×m}, are exactly
//! indistinguishable from the nominal instance under u = K⋆x:
//! A_e + B_e K⋆ = A⋆ + B⋆K⋆ identically. Here w_i ∈ ℝ^{d_u} is the
//! eigenbasis of (R_u + B⋆ᵀP⋆B⋆)⁻¹ and v_j ∈ ℝ^{d_x} collects the top-m
//! right singular vectors of A_cl,⋆P⋆. To first order the optimal gain of
//! an alternative is displaced by −(R_u + B⋆ᵀP⋆B⋆)⁻¹ Δ_eᵀ P⋆ A_cl,⋆, so a
//! good controller estimate decodes the sign pattern.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::control::{LqrInstance, RiccatiSolution};
use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::perturb::{certificate_constants, special_perturbation_derivative};

/// Relative gap under which consecutive spectral values count as tied.
const TIE_TOL: f64 = 1e-9;

/// One lower-bound alternative with its construction data.
#[derive(Clone, Debug)]
pub struct PackingInstance {
    /// Sign pattern, n × m with n = d_u, entries ±1.
    pub e: DMatrix<f64>,
    pub eps_pack: f64,
    /// Eigenbasis of (R_u + B⋆ᵀP⋆B⋆)⁻¹, columns ordered by decreasing
    /// eigenvalue of the inverse, d_u × n.
    pub w: DMatrix<f64>,
    /// Top-m right singular vectors of A_cl,⋆ P⋆, d_x × m.
    pub v: DMatrix<f64>,
    /// ε Σ e_{ij} v_j w_iᵀ, d_x × d_u.
    pub delta: DMatrix<f64>,
    pub a_e: DMatrix<f64>,
    pub b_e: DMatrix<f64>,
    /// Spectral ties made the bases non-unique; they were fixed by the
    /// deterministic tie-break and the construction is flagged.
    pub degenerate: bool,
    /// Whether ε²nm clears the safe-radius guard
    /// ε² nm ≤ 1/(2 C_safe(A⋆,B⋆) ‖P⋆‖).
    pub within_guard: bool,
}

/// Sign-normalize a column so its largest-magnitude entry is positive
/// (first index wins ties).
fn sign_normalize(col: &mut DVector<f64>) {
    let mut best = 0usize;
    for i in 1..col.len() {
        if col[i].abs() > col[best].abs() {
            best = i;
        }
    }
    if col[best] < 0.0 {
        *col *= -1.0;
    }
}

/// Order a spectral basis deterministically: values descending, vectors
/// sign-normalized, ties resolved by lexicographic comparison of entries.
/// Returns the reordered (values, vectors) and whether ties occurred.
fn canonical_basis(values: &[f64], vectors: &[DVector<f64>]) -> (Vec<f64>, Vec<DVector<f64>>, bool) {
    let mut cols: Vec<(f64, DVector<f64>)> = values
        .iter()
        .zip(vectors)
        .map(|(&v, c)| {
            let mut c = c.clone();
            sign_normalize(&mut c);
            (v, c)
        })
        .collect();
    let scale = values.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1.0);
    let mut degenerate = false;
    cols.sort_by(|(va, ca), (vb, cb)| {
        if (va - vb).abs() <= TIE_TOL * scale {
            ca.iter()
                .zip(cb.iter())
                .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
                .unwrap_or(std::cmp::Ordering::Equal)
        } else {
            vb.partial_cmp(va).unwrap()
        }
    });
    for w in cols.windows(2) {
        if (w[0].0 - w[1].0).abs() <= TIE_TOL * scale {
            degenerate = true;
        }
    }
    let (vals, vecs) = cols.into_iter().unzip();
    (vals, vecs, degenerate)
}

/// Build the packing alternative for one sign pattern.
pub fn build_packing(
    inst: &LqrInstance,
    star: &RiccatiSolution,
    m: usize,
    eps_pack: f64,
    e: &DMatrix<f64>,
) -> Result<PackingInstance> {
    let (dx, du) = (inst.dim_x(), inst.dim_u());
    let n = du;
    if m == 0 || m > dx {
        return Err(Error::InvalidArgument(format!("m must lie in 1..=d_x, got {m}")));
    }
    if eps_pack < 0.0 {
        return Err(Error::InvalidArgument("eps_pack must be ≥ 0".into()));
    }
    if e.nrows() != n || e.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "sign pattern must be {n} × {m}, got {} × {}",
            e.nrows(),
            e.ncols()
        )));
    }
    if e.iter().any(|&s| s != 1.0 && s != -1.0) {
        return Err(Error::InvalidArgument("sign pattern entries must be ±1".into()));
    }

    // w_i: eigenbasis of (R_u + B⋆ᵀP⋆B⋆)⁻¹, decreasing eigenvalues of the
    // inverse = increasing eigenvalues of the forward matrix.
    let gram = symmetrize(&(inst.r_u() + inst.b().transpose() * &star.p * inst.b()));
    let eig = gram.clone().symmetric_eigen();
    let inv_vals: Vec<f64> = eig.eigenvalues.iter().map(|&l| 1.0 / l).collect();
    let vecs: Vec<DVector<f64>> =
        (0..du).map(|i| eig.eigenvectors.column(i).into_owned()).collect();
    let (_, w_cols, deg_w) = canonical_basis(&inv_vals, &vecs);
    let w = DMatrix::from_columns(&w_cols);

    // v_j: top-m right singular vectors of A_cl,⋆ P⋆.
    let a_cl = star.closed_loop(inst);
    let target = &a_cl * &star.p;
    let svd = target.svd(false, true);
    let v_t = svd.v_t.expect("svd with right vectors");
    let sigmas: Vec<f64> = svd.singular_values.iter().copied().collect();
    let v_vecs: Vec<DVector<f64>> = (0..dx).map(|j| v_t.row(j).transpose()).collect();
    let (_, v_cols, deg_v) = canonical_basis(&sigmas, &v_vecs);
    let v = DMatrix::from_columns(&v_cols[..m]);

    let mut delta = DMatrix::zeros(dx, du);
    for i in 0..n {
        for j in 0..m {
            delta += v.column(j) * w.column(i).transpose() * (eps_pack * e[(i, j)]);
        }
    }
    let a_e = inst.a() - &delta * &star.k;
    let b_e = inst.b() + &delta;

    let (c_safe, _) = certificate_constants(&star.p)?;
    let p_norm = crate::linalg::sym_op_norm(&star.p);
    let within_guard =
        eps_pack * eps_pack * (n * m) as f64 <= 1.0 / (2.0 * c_safe * p_norm);

    Ok(PackingInstance {
        e: e.clone(),
        eps_pack,
        w,
        v,
        delta,
        a_e,
        b_e,
        degenerate: deg_w || deg_v,
        within_guard,
    })
}

/// K⋆ plus the first-order displacement along the packing direction.
/// The remainder against K∞(A_e, B_e) is O(ε² nm).
pub fn first_order_controller(
    inst: &LqrInstance,
    star: &RiccatiSolution,
    packing: &PackingInstance,
) -> Result<DMatrix<f64>> {
    Ok(&star.k + special_perturbation_derivative(inst, star, &packing.delta)?)
}

/// Decode a sign pattern from a controller estimate.
///
/// The first-order displacement of K∞(A_e, B_e) projects onto (w_i, v_j)
/// as −e_{ij} · (positive), so the decoder reports +1 exactly when
/// w_iᵀ(K̂ − K⋆)v_j ≤ 0; the zero (measure-zero) case maps to +1, making
/// K̂ = K⋆ decode to the all-ones pattern.
pub fn hamming_decode(
    k_hat: &DMatrix<f64>,
    star: &RiccatiSolution,
    packing: &PackingInstance,
) -> Result<DMatrix<f64>> {
    if k_hat.shape() != star.k.shape() {
        return Err(Error::DimensionMismatch("K̂ must match K⋆'s shape".into()));
    }
    let n = packing.w.ncols();
    let m = packing.v.ncols();
    let diff = k_hat - &star.k;
    let mut decoded = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let raw = (packing.w.column(i).transpose() * &diff * packing.v.column(j))[(0, 0)];
            decoded[(i, j)] = if raw <= 0.0 { 1.0 } else { -1.0 };
        }
    }
    Ok(decoded)
}

/// Number of disagreeing signs.
pub fn hamming_distance(e1: &DMatrix<f64>, e2: &DMatrix<f64>) -> usize {
    e1.iter().zip(e2.iter()).filter(|(a, b)| a.signum() != b.signum()).count()
}

/// KL diagnostic between two packing perturbations under an input
/// deviation covariance Λ_τ (estimated from a rollout as
/// Σ_t (u_t − K⋆x_t)(u_t − K⋆x_t)ᵀ):
///
///   ½ tr((Δ⁰ − Δ¹) Λ_τ (Δ⁰ − Δ¹)ᵀ).
pub fn kl_between(
    delta0: &DMatrix<f64>,
    delta1: &DMatrix<f64>,
    lambda_tau: &DMatrix<f64>,
) -> Result<f64> {
    if delta0.shape() != delta1.shape() {
        return Err(Error::DimensionMismatch("Δ⁰ and Δ¹ must share a shape".into()));
    }
    let du = delta0.ncols();
    if lambda_tau.nrows() != du || lambda_tau.ncols() != du {
        return Err(Error::DimensionMismatch("Λ_τ must be d_u × d_u".into()));
    }
    let diff = delta0 - delta1;
    Ok(0.5 * (&diff * lambda_tau * diff.transpose()).trace())
}

/// Scaled-identity instance A = aI, B = Uᵀ (U = first d_u canonical
/// directions), R_x = R_u = I, together with the closed-form DARE value
/// p = (a² + √(a⁴ + 4))/2 on the controlled subspace.
pub fn scaled_identity_instance(a: f64, d_x: usize, d_u: usize) -> Result<(LqrInstance, f64)> {
    if d_x == 0 || d_u == 0 || d_u > d_x {
        return Err(Error::InvalidArgument("need 1 ≤ d_u ≤ d_x".into()));
    }
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::InvalidArgument("a must lie in (0, 1]".into()));
    }
    let a_mat = DMatrix::identity(d_x, d_x) * a;
    let mut b = DMatrix::zeros(d_x, d_u);
    for i in 0..d_u {
        b[(i, i)] = 1.0;
    }
    let inst = LqrInstance::normalized(a_mat, b, DMatrix::identity(d_x, d_x))?;
    let p = (a * a + (a.powi(4) + 4.0).sqrt()) / 2.0;
    Ok((inst, p))
}

#[derive(Serialize)]
struct PackingJson {
    e: Vec<Vec<f64>>,
    eps_pack: f64,
    w: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    a_e: Vec<Vec<f64>>,
    b_e: Vec<Vec<f64>>,
    degenerate: bool,
    within_guard: bool,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// JSON export: sign pattern, scale, bases, and the derived (A_e, B_e).
pub fn packing_to_json(p: &PackingInstance) -> serde_json::Value {
    serde_json::to_value(PackingJson {
        e: rows(&p.e),
        eps_pack: p.eps_pack,
        w: rows(&p.w),
        v: rows(&p.v),
        delta: rows(&p.delta),
        a_e: rows(&p.a_e),
        b_e: rows(&p.b_e),
        degenerate: p.degenerate,
        within_guard: p.within_guard,
    })
    .expect("packing serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::solve_dare_default;
    use crate::linalg::frob_norm;

    fn all_ones(n: usize, m: usize) -> DMatrix<f64> {
        DMatrix::from_element(n, m, 1.0)
    }

    #[test]
    fn zero_eps_returns_nominal() {
        let (inst, _) = scaled_identity_instance(0.5, 3, 2).unwrap();
        let star = solve_dare_default(&inst).unwrap();
        let p = build_packing(&inst, &star, 2, 0.0, &all_ones(2, 2)).unwrap();
        assert!((&p.a_e - inst.a()).amax() < 1e-15);
        assert!((&p.b_e - inst.b()).amax() < 1e-15);
        // and the first-order controller collapses to K⋆
        let fo = first_order_controller(&inst, &star, &p).unwrap();
        assert!((fo - &star.k).amax() < 1e-15);
    }

    #[test]
    fn kl_rejects_dimension_mismatch() {
        let d0 = DMatrix::zeros(2, 1);
        let d1 = DMatrix::zeros(2, 2);
        assert!(kl_between(&d0, &d1, &DMatrix::identity(1, 1)).is_err());
        let lam_bad = DMatrix::identity(2, 2);
        assert!(kl_between(&d0, &d0.clone(), &lam_bad).is_err());
    }

    #[test]
    fn indistinguishability_is_exact() {
        let (inst, _) = scaled_identity_instance(0.6, 4, 2).unwrap();
        let star = solve_dare_default(&inst).unwrap();
        let mut e = all_ones(2, 3);
        e[(0, 1)] = -1.0;
        e[(1, 2)] = -1.0;
        let p = build_packing(&inst, &star, 3, 0.05, &e).unwrap();
        let lhs = &p.a_e + &p.b_e * &star.k;
        let rhs = inst.a() + inst.b() * &star.k;
        assert!(frob_norm(&(lhs - rhs)) <= 1e-12);
    }

    #[test]
    fn delta_frobenius_norm_is_eps_sqrt_nm() {
        let (inst, _) = scaled_identity_instance(0.5, 3, 2).unwrap();
        let star = solve_dare_default(&inst).unwrap();
        let eps = 0.01;
        let p = build_packing(&inst, &star, 2, eps, &all_ones(2, 2)).unwrap();
        assert!((frob_norm(&p.delta) - eps * 4f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn scalar_packing_closed_form() {
        // 1-d bases are ±1 (sign-normalized to +1), so Δ = ±ε
        let inst = LqrInstance::scalar(1.0, 1.0);
        let star = solve_dare_default(&inst).unwrap();
        for sign in [1.0, -1.0] {
            let e = DMatrix::from_element(1, 1, sign);
            let p = build_packing(&inst, &star, 1, 0.01, &e).unwrap();
            assert!((p.delta[(0, 0)] - sign * 0.01).abs() < 1e-14);
            assert!((p.a_e[(0, 0)] - (1.0 - sign * 0.01 * star.k[(0, 0)])).abs() < 1e-14);
            assert!((p.b_e[(0, 0)] - (1.0 + sign * 0.01)).abs() < 1e-14);
        }
    }

    #[test]
    fn first_order_controller_scalar_displacement() {
        // displacement = −ε e/φ³
        let inst = LqrInstance::scalar(1.0, 1.0);
        let star = solve_dare_default(&inst).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let eps = 1e-3;
        for sign in [1.0, -1.0] {
            let e = DMatrix::from_element(1, 1, sign);
            let p = build_packing(&inst, &star, 1, eps, &e).unwrap();
            let fo = first_order_controller(&inst, &star, &p).unwrap();
            let displacement = fo[(0, 0)] - star.k[(0, 0)];
            assert!((displacement + sign * eps / phi.powi(3)).abs() < 1e-12);
        }
    }

    #[test]
    fn first_order_matches_exact_resolve_to_quadratic_order() {
        let (inst, _) = scaled_identity_instance(0.5, 3, 2).unwrap();
        let star = solve_dare_default(&inst).unwrap();
        let mut e = all_ones(2, 2);
        e[(1, 0)] = -1.0;
        let rem = |eps: f64| {
            let p = build_packing(&inst, &star, 2, eps, &e).unwrap();
            let fo = first_order_controller(&inst, &star, &p).unwrap();
            let exact = solve_dare_default(
                &inst.with_dynamics(p.a_e.clone(), p.b_e.clone()).unwrap(),
            )
            .unwrap();
            frob_norm(&(exact.k - fo))
        };
        let ratio = rem(2e-3) / rem(1e-3);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn decode_of_k_star_is_all_plus_ones() {
        let (inst, _) = scaled_identity_instance(0.5, 3, 2).unwrap();
        let star = solve_dare_default(&inst).unwrap();
        let p = build_packing(&inst, &star, 2, 1e-3, &all_ones(2, 2)).unwrap();
        let decoded = hamming_decode(&star.k, &star, &p).unwrap();
        assert!(decoded.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn decode_recovers_pattern_from_exact_ce_controller() {
        let (inst, _) = scaled_identity_instance(0.5, 3, 2).unwrap();
        let star = solve_dare_default(&inst).unwrap();
        let mut e = all_ones(2, 2);
        e[(0, 0)] = -1.0;
        e[(1, 1)] = -1.0;
        let p = build_packing(&inst, &star, 2, 1e-3, &e).unwrap();
        let alt = solve_dare_default(
            &inst.with_dynamics(p.a_e.clone(), p.b_e.clone()).unwrap(),
        )
        .unwrap();
        let decoded = hamming_decode(&alt.k, &star, &p).unwrap();
        assert_eq!(hamming_distance(&decoded, &e), 0);

        // and from the first-order controller itself
        let fo = first_order_controller(&inst, &star, &p).unwrap();
        let decoded_fo = hamming_decode(&fo, &star, &p).unwrap();
        assert_eq!(hamming_distance(&decoded_fo, &e), 0);
    }

    #[test]
    fn controller_displacement_respects_packing_bound() {
        // ‖K_e − K⋆‖_F ≤ √(2‖P⋆‖³ nm) ε
        let (inst, _) = scaled_identity_instance(0.7, 3, 2).unwrap();
        let star = solve_dare_default(&inst).unwrap();
        let p_norm = crate::linalg::sym_op_norm(&star.p);
        let eps = 1e-3;
        let mut e = all_ones(2, 2);
        e[(0, 1)] = -1.0;
        let p = build_packing(&inst, &star, 2, eps, &e).unwrap();
        let alt =
            solve_dare_default(&inst.with_dynamics(p.a_e.clone(), p.b_e.clone()).unwrap())
                .unwrap();
        let gap = frob_norm(&(&alt.k - &star.k));
        assert!(gap <= (2.0 * p_norm.powi(3) * 4.0).sqrt() * eps);
    }

    #[test]
    fn kl_examples() {
        let z = DMatrix::zeros(1, 1);
        assert_eq!(kl_between(&z, &z, &DMatrix::from_element(1, 1, 3.0)).unwrap(), 0.0);

        // Δ⁰ = 1, Δ¹ = −1, Λ_τ = 5: ½ · 2 · 5 · 2 = 10
        let d0 = DMatrix::from_element(1, 1, 1.0);
        let d1 = DMatrix::from_element(1, 1, -1.0);
        let lam = DMatrix::from_element(1, 1, 5.0);
        assert!((kl_between(&d0, &d1, &lam).unwrap() - 10.0).abs() < 1e-14);

        // linear in Λ_τ
        let doubled = kl_between(&d0, &d1, &(lam * 2.0)).unwrap();
        assert!((doubled - 20.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_identity_closed_form_values() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let (_, p1) = scaled_identity_instance(1.0, 1, 1).unwrap();
        assert!((p1 - phi).abs() < 1e-14);

        let (_, p_half) = scaled_identity_instance(0.5, 2, 2).unwrap();
        assert!((p_half - 1.1327822185373186).abs() < 1e-10);

        // a → 0⁺ limit: p → 1
        let (_, p0) = scaled_identity_instance(1e-9, 2, 1).unwrap();
        assert!((p0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn scaled_identity_matches_dare_and_closed_loop_floor() {
        for k in 1..=9 {
            let a = 0.1 * k as f64;
            let (inst, p_closed) = scaled_identity_instance(a, 3, 2).unwrap();
            let sol = solve_dare_default(&inst).unwrap();
            // eigenvalue on the controlled subspace equals the closed form
            let e1 = DVector::from_fn(3, |i, _| if i == 0 { 1.0 } else { 0.0 });
            let val = (e1.transpose() * &sol.p * &e1)[(0, 0)];
            assert!((val - p_closed).abs() < 1e-8, "a = {a}: {val} vs {p_closed}");
            // σ_min(A_cl) ≥ a/(1 + p)
            let a_cl = sol.closed_loop(&inst);
            let sigma_min = a_cl.svd(false, false).singular_values.min();
            assert!(sigma_min >= a / (1.0 + p_closed) - 1e-9);
        }
    }

    #[test]
    fn json_export_round_trips_shape() {
        let (inst, _) = scaled_identity_instance(0.5, 3, 2).unwrap();
        let star = solve_dare_default(&inst).unwrap();
        let p = build_packing(&inst, &star, 2, 1e-3, &all_ones(2, 2)).unwrap();
        let json = packing_to_json(&p);
        assert_eq!(json["e"].as_array().unwrap().len(), 2);
        assert_eq!(json["a_e"].as_array().unwrap().len(), 3);
        assert_eq!(json["eps_pack"].as_f64().unwrap(), 1e-3);
    }
}
