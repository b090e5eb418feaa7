//! Seeded instance generators for tests and experiment sweeps.

use nalgebra::DMatrix;

use crate::control::{spectral_radius, LqrInstance};
use crate::error::{Error, Result};
use crate::linalg::op_norm;
use crate::rng::GaussianStream;

/// Stream index reserved for instance generation.
pub const INSTANCE_GEN_STREAM: u64 = 2;

/// Draw a random instance with A rescaled to the requested spectral radius
/// and B rescaled so ‖B‖_op ≤ 1, with R_x = R_u = I. Stable A means the
/// instance is always stabilizable.
pub fn random_stable_instance(
    d_x: usize,
    d_u: usize,
    spectral_target: f64,
    seed: u64,
) -> Result<LqrInstance> {
    if d_x == 0 || d_u == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    if !(0.0..1.0).contains(&spectral_target) {
        return Err(Error::InvalidArgument("spectral target must lie in [0, 1)".into()));
    }
    let mut g = GaussianStream::new(seed, INSTANCE_GEN_STREAM);
    let mut a = DMatrix::zeros(d_x, d_x);
    for _ in 0..64 {
        a = DMatrix::from_fn(d_x, d_x, |_, _| g.next_gaussian());
        let rho = spectral_radius(&a)?;
        if rho > 1e-9 {
            a *= spectral_target / rho;
            break;
        }
    }
    let mut b = DMatrix::from_fn(d_x, d_u, |_, _| g.next_gaussian());
    let bn = op_norm(&b);
    if bn > 1.0 {
        b /= bn;
    }
    LqrInstance::normalized(a, b, DMatrix::identity(d_x, d_x))
}

/// A (γ, κ)-strongly stable A: T D T⁻¹ with ‖D‖ ≤ 1 − γ and cond(T) ≤ κ.
/// Returns (A, γ, κ) with the realized parameters.
pub fn strongly_stable_matrix(d: usize, gamma: f64, kappa: f64, seed: u64) -> (DMatrix<f64>, f64, f64) {
    let mut g = GaussianStream::new(seed, INSTANCE_GEN_STREAM.wrapping_add(7));
    // orthogonal factor from QR of a Gaussian matrix
    let q = DMatrix::from_fn(d, d, |_, _| g.next_gaussian()).qr().q();
    // diagonal conditioning spread: singular values of T between 1 and κ
    let mut s = DMatrix::zeros(d, d);
    for i in 0..d {
        let u: f64 = 0.5 * (g.next_gaussian().tanh() + 1.0); // in (0,1)
        s[(i, i)] = 1.0 + (kappa - 1.0) * u;
    }
    let t = &q * s;
    let t_inv = t.clone().try_inverse().expect("T is invertible");
    let mut d_mat = DMatrix::from_fn(d, d, |_, _| g.next_gaussian());
    let dn = op_norm(&d_mat);
    d_mat *= (1.0 - gamma) / dn.max(1e-12);
    let a = &t_inv * d_mat * &t;
    (a, gamma, kappa)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_stable_has_requested_radius() {
        for seed in 0..5 {
            let inst = random_stable_instance(4, 2, 0.8, seed).unwrap();
            let rho = spectral_radius(inst.a()).unwrap();
            assert!((rho - 0.8).abs() < 1e-9);
            assert!(op_norm(inst.b()) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn strongly_stable_matrix_is_stable() {
        let (a, gamma, _kappa) = strongly_stable_matrix(4, 0.3, 3.0, 9);
        let rho = spectral_radius(&a).unwrap();
        assert!(rho <= 1.0 - gamma + 1e-9, "rho {rho}");
    }
}
