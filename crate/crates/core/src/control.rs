//! Dense-real-matrix control primitives.
//!
//! Conventions: dynamics x_{t+1} = A x_t + B u_t + w_t with per-step cost
//! xᵀR_x x + uᵀR_u u. The discrete algebraic Riccati equation (DARE)
//!
//!   P = AᵀPA − AᵀPB (R_u + BᵀPB)⁻¹ BᵀPA + R_x
//!
//! has a unique PSD fixed point P for stabilizable (A, B), with optimal
//! infinite-horizon gain K = −(R_u + BᵀPB)⁻¹BᵀPA and average cost tr(P).
//! The discrete Lyapunov (Stein) operator dlyap(A, Y) solves P = AᵀPA + Y.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linalg::{min_eig_sym, sym_op_norm, symmetrize};

/// Default termination tolerance for [`solve_dare`].
pub const DEFAULT_DARE_TOL: f64 = 1e-12;
/// Default iteration budget for [`solve_dare`].
pub const DEFAULT_DARE_MAX_ITER: usize = 100_000;
/// Stability margin: ρ(A) must stay below 1 − ε_stab for Stein solves.
/// Guards the conditioning of the vectorized solve.
pub const STABILITY_MARGIN: f64 = 1e-9;
/// Default unit-circle grid for [`hinf_norm`].
pub const DEFAULT_HINF_GRID: usize = 720;
/// Largest state dimension solved by the exact Kronecker route in
/// [`solve_dlyap`]; larger systems use the doubling iteration.
const DLYAP_KRON_MAX_DIM: usize = 64;

/// An LQR instance (A, B, R_x, R_u).
///
/// In normalized mode R_u = I and R_x ⪰ I; a separate constructor
/// admits general positive-definite R_u for library use.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrInstance {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    r_x: DMatrix<f64>,
    r_u: DMatrix<f64>,
}

impl LqrInstance {
    /// Normalized costs: R_u = I and R_x ⪰ I (unit input cost, state cost at least identity).
    pub fn normalized(a: DMatrix<f64>, b: DMatrix<f64>, r_x: DMatrix<f64>) -> Result<Self> {
        let r_u = DMatrix::identity(b.ncols(), b.ncols());
        Self::validate(a, b, r_x, r_u, true)
    }

    /// General instance with caller-supplied positive-definite R_u.
    pub fn with_input_cost(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        r_x: DMatrix<f64>,
        r_u: DMatrix<f64>,
    ) -> Result<Self> {
        Self::validate(a, b, r_x, r_u, false)
    }

    /// Scalar instance with unit costs (R_x = R_u = 1).
    pub fn scalar(a: f64, b: f64) -> Self {
        LqrInstance {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, b),
            r_x: DMatrix::identity(1, 1),
            r_u: DMatrix::identity(1, 1),
        }
    }

    fn validate(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        r_x: DMatrix<f64>,
        r_u: DMatrix<f64>,
        normalized: bool,
    ) -> Result<Self> {
        let dx = a.nrows();
        let du = b.ncols();
        if a.ncols() != dx {
            return Err(Error::DimensionMismatch(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != dx {
            return Err(Error::DimensionMismatch(format!(
                "rows(B) = {} must equal dim(A) = {dx}",
                b.nrows()
            )));
        }
        if r_x.nrows() != dx || r_x.ncols() != dx {
            return Err(Error::DimensionMismatch("R_x must be d_x × d_x".into()));
        }
        if r_u.nrows() != du || r_u.ncols() != du {
            return Err(Error::DimensionMismatch("R_u must be d_u × d_u".into()));
        }
        if (&r_x - r_x.transpose()).amax() > 1e-10 * (1.0 + r_x.amax()) {
            return Err(Error::InvalidArgument("R_x must be symmetric".into()));
        }
        if normalized {
            if min_eig_sym(&r_x) < 1.0 - 1e-9 {
                return Err(Error::InvalidNormalization(
                    "cost normalization requires R_x ⪰ I".into(),
                ));
            }
        } else {
            if min_eig_sym(&r_x) < -1e-12 {
                return Err(Error::InvalidArgument("R_x must be PSD".into()));
            }
            if min_eig_sym(&symmetrize(&r_u)) <= 0.0 {
                return Err(Error::InvalidArgument("R_u must be positive definite".into()));
            }
        }
        Ok(LqrInstance { a, b, r_x, r_u })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn r_x(&self) -> &DMatrix<f64> {
        &self.r_x
    }
    pub fn r_u(&self) -> &DMatrix<f64> {
        &self.r_u
    }
    pub fn dim_x(&self) -> usize {
        self.a.nrows()
    }
    pub fn dim_u(&self) -> usize {
        self.b.ncols()
    }

    /// Same costs, perturbed dynamics.
    pub fn with_dynamics(&self, a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        Self::validate(a, b, self.r_x.clone(), self.r_u.clone(), false)
    }
}

/// The DARE fixed point for one instance.
#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    /// Value-function quadratic form, symmetric PSD.
    pub p: DMatrix<f64>,
    /// State-feedback gain, u = K x.
    pub k: DMatrix<f64>,
    /// Operator norm of the DARE defect at the returned P.
    pub residual: f64,
    /// Fixed-point iterations consumed.
    pub iterations: usize,
}

impl RiccatiSolution {
    /// A + B K, the optimal closed loop.
    pub fn closed_loop(&self, inst: &LqrInstance) -> DMatrix<f64> {
        inst.a() + inst.b() * &self.k
    }

    /// Optimal infinite-horizon average cost tr(P).
    pub fn j_star(&self) -> f64 {
        self.p.trace()
    }
}

/// Spectral radius max |λ| over (possibly complex) eigenvalues.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch("spectral radius needs a square matrix".into()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    if m.is_empty() || m.amax() == 0.0 {
        return Ok(0.0);
    }
    // Exactly triangular matrices (the zero closed loop is the common
    // case) trip the Francis iteration; their eigenvalues are the diagonal.
    let d = m.nrows();
    let strictly_lower_zero = (1..d).all(|i| (0..i).all(|j| m[(i, j)] == 0.0));
    let strictly_upper_zero = (1..d).all(|i| (0..i).all(|j| m[(j, i)] == 0.0));
    if strictly_lower_zero || strictly_upper_zero {
        return Ok((0..d).map(|i| m[(i, i)].abs()).fold(0.0, f64::max));
    }
    let radius_of = |mat: DMatrix<f64>, shift: f64| -> Option<f64> {
        let schur = mat.try_schur(f64::EPSILON, 50_000)?;
        let eigs = schur.complex_eigenvalues();
        Some(
            eigs.iter()
                .map(|c| Complex::new(c.re - shift, c.im).norm())
                .fold(0.0, f64::max),
        )
    };
    if let Some(r) = radius_of(m.clone(), 0.0) {
        return Ok(r);
    }
    // Fallback: eig(M + ηI) = eig(M) + η exactly, so a diagonal shift
    // often unsticks the iteration without changing the answer.
    let eta = 1e-8 * (1.0 + m.amax());
    let shifted = m + DMatrix::identity(d, d) * eta;
    radius_of(shifted, eta)
        .ok_or_else(|| Error::NumericalFailure("Schur iteration did not converge".into()))
}

/// Unique solution of the Stein equation P = AᵀPA + Y for stable A.
///
/// Exact vectorized (Kronecker) solve up to dimension 64, doubling
/// iteration above. The output is symmetrized.
pub fn solve_dlyap(a: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    if a.ncols() != d || y.nrows() != d || y.ncols() != d {
        return Err(Error::DimensionMismatch("dlyap needs square A, Y of equal size".into()));
    }
    if (y - y.transpose()).amax() > 1e-10 * (1.0 + y.amax()) {
        return Err(Error::InvalidArgument("dlyap: Y must be symmetric".into()));
    }
    let rho = spectral_radius(a)?;
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::UnstableInput { rho });
    }
    if d <= DLYAP_KRON_MAX_DIM {
        solve_dlyap_kron(a, y)
    } else {
        Ok(solve_dlyap_doubling(a, y))
    }
}

/// Direct solve of (I − Aᵀ ⊗ Aᵀ) vec(P) = vec(Y).
fn solve_dlyap_kron(a: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let at = a.transpose();
    let system = DMatrix::identity(d * d, d * d) - at.kronecker(&at);
    let rhs = DMatrix::from_column_slice(d * d, 1, y.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalFailure("singular Stein system".into()))?;
    let p = DMatrix::from_column_slice(d, d, sol.as_slice());
    Ok(symmetrize(&p))
}

/// Doubling iteration: P ← AᵀPA + Y with A ← A², Y ← AᵀYA + Y.
fn solve_dlyap_doubling(a: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = a.clone();
    let mut p = y.clone();
    for _ in 0..128 {
        let update = m.transpose() * &p * &m;
        let scale = sym_op_norm(&p).max(1.0);
        p += &update;
        if sym_op_norm(&update) <= f64::EPSILON * scale {
            break;
        }
        m = &m * &m;
    }
    symmetrize(&p)
}

/// Evaluate the DARE defect AᵀPA − P − AᵀPB (R_u + BᵀPB)⁻¹ BᵀPA + R_x.
fn dare_defect(inst: &LqrInstance, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (a, b) = (inst.a(), inst.b());
    let btpb = symmetrize(&(inst.r_u() + b.transpose() * p * b));
    let g = b.transpose() * p * a;
    let chol = btpb
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("R_u + BᵀPB not positive definite".into()))?;
    let correction = g.transpose() * chol.solve(&g);
    Ok(symmetrize(&(a.transpose() * p * a - p - correction + inst.r_x())))
}

fn gain_from(inst: &LqrInstance, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let b = inst.b();
    let btpb = symmetrize(&(inst.r_u() + b.transpose() * p * b));
    let chol = btpb
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("R_u + BᵀPB not positive definite".into()))?;
    Ok(-chol.solve(&(b.transpose() * p * inst.a())))
}

/// Solve the DARE by value iteration from P₀ = R_x.
///
/// Stabilizability is detected, not assumed: divergence of the iterates or
/// a stalled step size reports [`Error::NotStabilizable`].
pub fn solve_dare(inst: &LqrInstance, tol: f64, max_iter: usize) -> Result<RiccatiSolution> {
    solve_dare_from(inst, inst.r_x().clone(), tol, max_iter)
}

/// [`solve_dare`] with the crate defaults.
pub fn solve_dare_default(inst: &LqrInstance) -> Result<RiccatiSolution> {
    solve_dare(inst, DEFAULT_DARE_TOL, DEFAULT_DARE_MAX_ITER)
}

/// Value iteration warm-started from an arbitrary PSD seed (used by the
/// curve tracer, where consecutive instances are close).
pub fn solve_dare_from(
    inst: &LqrInstance,
    p0: DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<RiccatiSolution> {
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("dare tolerance must be positive".into()));
    }
    let mut p = symmetrize(&p0);
    let mut last_step = f64::INFINITY;
    let mut step_window: Vec<f64> = Vec::with_capacity(32);
    for it in 1..=max_iter {
        // One Riccati recursion step; the step P_{t+1} − P_t equals the DARE
        // defect at P_t, so the termination test is a defect test.
        let defect = dare_defect(inst, &p)?;
        let step = sym_op_norm(&defect);
        p = symmetrize(&(&p + &defect));
        let scale = sym_op_norm(&p).max(1.0);
        if !step.is_finite() || sym_op_norm(&p) > 1e120 {
            return Err(Error::NotStabilizable { iterations: it, last_step: step });
        }
        if step <= tol * scale {
            // Polish toward the absolute tolerance while progress continues.
            let mut residual = sym_op_norm(&dare_defect(inst, &p)?);
            let mut polish = 0;
            while residual > tol && polish < 10_000 {
                let defect = dare_defect(inst, &p)?;
                p = symmetrize(&(&p + &defect));
                let next = sym_op_norm(&dare_defect(inst, &p)?);
                if next >= residual * 0.999 {
                    residual = next;
                    break; // float floor
                }
                residual = next;
                polish += 1;
            }
            let k = gain_from(inst, &p)?;
            let rho = spectral_radius(&(inst.a() + inst.b() * &k))?;
            if rho >= 1.0 {
                return Err(Error::NotStabilizable { iterations: it, last_step: step });
            }
            return Ok(RiccatiSolution { p, k, residual, iterations: it + polish });
        }
        step_window.push(step);
        if step_window.len() >= 32 {
            // No geometric progress over a full window means the fixed
            // point is receding: not stabilizable.
            let first = step_window[0];
            let last = *step_window.last().unwrap();
            if last >= first * 0.999_999 {
                return Err(Error::NotStabilizable { iterations: it, last_step: last });
            }
            step_window.clear();
        }
        last_step = step;
    }
    Err(Error::NumericalFailure(format!(
        "DARE iteration budget exhausted ({max_iter} iterations, last step {last_step:.3e})"
    )))
}

/// Value matrix and average cost of a fixed gain K on an instance:
/// P_K = dlyap(A + BK, R_x + KᵀR_uK), J = tr(P_K).
pub fn controller_value(inst: &LqrInstance, k: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if k.nrows() != inst.dim_u() || k.ncols() != inst.dim_x() {
        return Err(Error::DimensionMismatch("gain must be d_u × d_x".into()));
    }
    let a_cl = inst.a() + inst.b() * k;
    let cost = symmetrize(&(inst.r_x() + k.transpose() * inst.r_u() * k));
    let p_k = solve_dlyap(&a_cl, &cost)?;
    let j = p_k.trace();
    Ok((p_k, j))
}

/// H∞ norm sup_{|z|=1} ‖(zI − A)⁻¹‖ of a stable A, evaluated on a uniform
/// grid of the unit circle with one golden-section refinement pass around
/// the grid argmax. A lower bound on the true supremum.
pub fn hinf_norm(a: &DMatrix<f64>, grid_points: usize) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch("hinf_norm needs a square matrix".into()));
    }
    if grid_points < 4 {
        return Err(Error::InvalidArgument("hinf_norm needs at least 4 grid points".into()));
    }
    let rho = spectral_radius(a)?;
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::UnstableInput { rho });
    }
    let eval = |theta: f64| -> f64 {
        let d = a.nrows();
        let mut m = DMatrix::<Complex<f64>>::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = Complex::new(-a[(i, j)], 0.0);
            }
        }
        let z = Complex::new(theta.cos(), theta.sin());
        for i in 0..d {
            m[(i, i)] += z;
        }
        let sigma_min = m.svd(false, false).singular_values.min();
        1.0 / sigma_min
    };

    let step = 2.0 * std::f64::consts::PI / grid_points as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..grid_points {
        let v = eval(i as f64 * step);
        if v > best.1 {
            best = (i, v);
        }
    }
    // Golden-section maximization on the bracket around the grid argmax.
    let inv_phi = 0.618_033_988_749_894_9;
    let mut lo = (best.0 as f64 - 1.0) * step;
    let mut hi = (best.0 as f64 + 1.0) * step;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (eval(x1), eval(x2));
    for _ in 0..64 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = eval(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = eval(x1);
        }
    }
    Ok(best.1.max(f1).max(f2))
}

/// Whether A is stable with the crate's margin, ρ(A) < 1 − ε_stab.
pub fn is_stable(a: &DMatrix<f64>) -> Result<bool> {
    Ok(spectral_radius(a)? < 1.0 - STABILITY_MARGIN)
}
