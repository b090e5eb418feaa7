//! Seeded Gaussian LQR rollouts, regret, and the expected-cost bound.
//!
//! Dynamics x_{t+1} = A x_t + B u_t + w_t from x_1 = 0, with w_t iid
//! standard Gaussian. Every rollout derives its process-noise and
//! exploration-noise streams from the master seed (see [`crate::rng`]), so
//! a trajectory is reproducible from (instance, policy config, T, seed)
//! and policies share common random numbers.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::control::{controller_value, spectral_radius, LqrInstance};
use crate::error::{Error, Result};
use crate::linalg::op_norm;
use crate::rng::{GaussianStream, EXPLORATION_STREAM, PROCESS_NOISE_STREAM};

/// States above this norm abort the rollout as a blow-up.
pub const BLOWUP_GUARD: f64 = 1e100;

/// One rollout: time-indexed states, inputs, and realized per-step costs.
/// Noise is not stored; it is reproducible from the seed.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub step_costs: Vec<f64>,
    pub seed: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    pub fn total_cost(&self) -> f64 {
        self.step_costs.iter().sum()
    }
}

/// A control law: maps (t, x_t) and the exploration stream to u_t.
/// Implementations must be deterministic given the state history and seed.
pub trait Policy {
    fn act(&mut self, t: usize, x: &DVector<f64>, exploration: &mut GaussianStream)
        -> DVector<f64>;
}

/// u_t = K x_t + σ_u g_t.
#[derive(Clone, Debug)]
pub struct LinearFeedback {
    pub k: DMatrix<f64>,
    pub sigma_u: f64,
}

impl LinearFeedback {
    pub fn new(k: DMatrix<f64>, sigma_u: f64) -> Self {
        LinearFeedback { k, sigma_u }
    }
}

impl Policy for LinearFeedback {
    fn act(
        &mut self,
        _t: usize,
        x: &DVector<f64>,
        exploration: &mut GaussianStream,
    ) -> DVector<f64> {
        let mut u = &self.k * x;
        if self.sigma_u != 0.0 {
            u += exploration.next_vector(self.k.nrows()) * self.sigma_u;
        } else {
            // Keep the exploration stream position policy-independent so
            // σ_u = 0 and σ_u > 0 runs share process noise draws.
            let _ = exploration.next_vector(self.k.nrows());
        }
        u
    }
}

/// Roll out `policy` for `t_horizon` steps from x_1 = 0.
pub fn rollout(
    inst: &LqrInstance,
    policy: &mut dyn Policy,
    t_horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    rollout_from(inst, policy, t_horizon, seed, None, 1.0)
}

/// General rollout entry: optional initial state and a process-noise scale
/// (0 disables process noise; a test hook for noiseless identification).
pub fn rollout_from(
    inst: &LqrInstance,
    policy: &mut dyn Policy,
    t_horizon: usize,
    seed: u64,
    x1: Option<DVector<f64>>,
    process_noise_scale: f64,
) -> Result<Trajectory> {
    if t_horizon == 0 {
        return Err(Error::InvalidArgument("rollout horizon must be ≥ 1".into()));
    }
    let dx = inst.dim_x();
    let mut w_stream = GaussianStream::new(seed, PROCESS_NOISE_STREAM);
    let mut g_stream = GaussianStream::new(seed, EXPLORATION_STREAM);

    let mut x = match x1 {
        Some(v) => {
            if v.len() != dx {
                return Err(Error::DimensionMismatch("x1 must have dimension d_x".into()));
            }
            v
        }
        None => DVector::zeros(dx),
    };

    let mut traj = Trajectory {
        states: Vec::with_capacity(t_horizon),
        inputs: Vec::with_capacity(t_horizon),
        step_costs: Vec::with_capacity(t_horizon),
        seed,
    };

    for t in 1..=t_horizon {
        if x.norm() > BLOWUP_GUARD {
            return Err(Error::BlowUp { time: t, epoch: None });
        }
        let u = policy.act(t, &x, &mut g_stream);
        if u.len() != inst.dim_u() {
            return Err(Error::DimensionMismatch("policy returned wrong input dimension".into()));
        }
        let cost = (x.transpose() * inst.r_x() * &x)[(0, 0)]
            + (u.transpose() * inst.r_u() * &u)[(0, 0)];
        let mut x_next = inst.a() * &x + inst.b() * &u;
        if process_noise_scale != 0.0 {
            x_next += w_stream.next_vector(dx) * process_noise_scale;
        } else {
            let _ = w_stream.next_vector(dx);
        }
        traj.states.push(x);
        traj.inputs.push(u);
        traj.step_costs.push(cost);
        x = x_next;
    }
    Ok(traj)
}

/// Regret against the infinite-horizon optimum: Σ_t c_t − T · J⋆.
/// May be negative on lucky noise draws; T = 0 gives 0.
pub fn regret(traj: &Trajectory, j_star: f64) -> f64 {
    traj.total_cost() - traj.horizon() as f64 * j_star
}

/// Expectation-side cost ceiling for the law u_t = K x_t + σ_u g_t over
/// `t` steps from x₁:
///
///   t·J_K + 2σ_u²·t·d_u·(‖R_u‖ + ‖B‖²‖P_K‖) + x₁ᵀP_K x₁.
///
/// The Monte Carlo mean of the realized cost never exceeds this.
pub fn expected_cost_bound(
    inst: &LqrInstance,
    k: &DMatrix<f64>,
    sigma_u: f64,
    x1: &DVector<f64>,
    t: usize,
) -> Result<f64> {
    let rho = spectral_radius(&(inst.a() + inst.b() * k))?;
    if rho >= 1.0 {
        return Err(Error::UnstableInput { rho });
    }
    let (p_k, j_k) = controller_value(inst, k)?;
    let d_u = inst.dim_u() as f64;
    let noise_term = 2.0
        * sigma_u
        * sigma_u
        * t as f64
        * d_u
        * (op_norm(inst.r_u()) + op_norm(inst.b()).powi(2) * crate::linalg::sym_op_norm(&p_k));
    let transient = (x1.transpose() * &p_k * x1)[(0, 0)];
    Ok(t as f64 * j_k + noise_term + transient)
}

/// Trajectory export: columns t, x_0..x_{dx−1}, u_0..u_{du−1}, cost.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: &mut W) -> io::Result<()> {
    let dx = traj.states.first().map_or(0, |x| x.len());
    let du = traj.inputs.first().map_or(0, |u| u.len());
    let mut header = String::from("t");
    for i in 0..dx {
        header.push_str(&format!(",x_{i}"));
    }
    for i in 0..du {
        header.push_str(&format!(",u_{i}"));
    }
    header.push_str(",cost");
    writeln!(out, "{header}")?;
    for t in 0..traj.horizon() {
        let mut row = format!("{}", t + 1);
        for v in traj.states[t].iter() {
            row.push_str(&format!(",{v}"));
        }
        for v in traj.inputs[t].iter() {
            row.push_str(&format!(",{v}"));
        }
        row.push_str(&format!(",{}", traj.step_costs[t]));
        writeln!(out, "{row}")?;
    }
    Ok(())
}
