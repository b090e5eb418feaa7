//! Experiment configuration: TOML primary, JSON accepted.
//!
//! A minimal sweep config (top-level keys before the tables):
//!
//! ```toml
//! algorithm = "ce"
//! horizons = [4096, 8192, 16384]
//!
//! [instance]
//! kind = "scaled_identity"
//! a = 0.5
//! d_x = 3
//! d_u = 3
//!
//! [seeds]
//! base_seed = 0
//! n_seeds = 50
//! ```
//!
//! Horizons must be powers of two ≥ 8; with normalized costs an explicit
//! δ must satisfy δ ≤ 1/max(T) (the default is exactly 1/T per run).

use std::fs;
use std::path::Path;

use lqrlab_core::adaptive::SafeRule;
use lqrlab_core::control::LqrInstance;
use lqrlab_core::instances::random_stable_instance;
use lqrlab_core::packing::scaled_identity_instance;
use lqrlab_core::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    #[serde(default)]
    pub algorithm: Algorithm,
    /// Stabilizing gain for warmup; omitted means K₀ = 0.
    #[serde(default)]
    pub k0: Option<Vec<Vec<f64>>>,
    /// Confidence parameter; omitted means δ = 1/T per run.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Horizon list; every entry a power of two ≥ 8.
    pub horizons: Vec<u64>,
    pub seeds: SeedSpec,
    /// Exploration noise for `fixed_k` rollouts.
    #[serde(default)]
    pub sigma_u: f64,
    /// Gain for `fixed_k`; omitted means the optimal K⋆ of the instance.
    #[serde(default)]
    pub fixed_gain: Option<Vec<Vec<f64>>>,
    /// Override the desk-scale safe threshold (1/Conf ≥ value).
    #[serde(default)]
    pub safe_threshold: Option<f64>,
    /// Use the certified safe rule 1/Conf ≥ 9 C_safe(Â,B̂)² instead.
    #[serde(default)]
    pub certified_safe_rule: bool,
    /// One rollout description for the `simulate` subcommand.
    #[serde(default)]
    pub simulate: Option<SimulateSpec>,
    /// Packing description for the `packing` subcommand.
    #[serde(default)]
    pub packing: Option<PackingSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// Explicit matrices; R_x defaults to the identity.
    Inline {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        #[serde(default)]
        r_x: Option<Vec<Vec<f64>>>,
    },
    /// A = a·I, B = first d_u canonical columns, R_x = R_u = I.
    ScaledIdentity { a: f64, d_x: usize, d_u: usize },
    /// Random A rescaled to the spectral target, ‖B‖_op ≤ 1.
    RandomStable { d_x: usize, d_u: usize, spectral_target: f64, gen_seed: u64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Ce,
    FixedK,
    WarmupOnly,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ce => "ce",
            Algorithm::FixedK => "fixed_k",
            Algorithm::WarmupOnly => "warmup_only",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { base_seed: u64, n_seeds: u32 },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { base_seed, n_seeds } => {
                (0..*n_seeds as u64).map(|i| base_seed.wrapping_add(i)).collect()
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub t: u64,
    #[serde(default)]
    pub sigma_u: f64,
    /// Gain to play; omitted means K⋆.
    #[serde(default)]
    pub gain: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackingSpec {
    pub m: usize,
    pub eps_pack: f64,
    /// Seed for the random sign pattern.
    #[serde(default)]
    pub sign_seed: u64,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::InvalidArgument(format!("{what}: empty matrix")));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidArgument(format!("{what}: ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

impl ExperimentConfig {
    /// Parse TOML (primary) or JSON (accepted) and validate.
    pub fn parse_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = match toml::from_str(text) {
            Ok(c) => c,
            Err(toml_err) => serde_json::from_str(text).map_err(|json_err| {
                Error::InvalidArgument(format!(
                    "config parse failed (toml: {toml_err}; json: {json_err})"
                ))
            })?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::InvalidArgument("horizons must be non-empty".into()));
        }
        for &t in &self.horizons {
            if t < 8 || !t.is_power_of_two() {
                return Err(Error::InvalidArgument(format!(
                    "horizon {t} is not a power of two ≥ 8"
                )));
            }
        }
        if let Some(d) = self.delta {
            let t_max = *self.horizons.iter().max().unwrap() as f64;
            if d.is_nan() || d <= 0.0 || d > 1.0 / t_max {
                return Err(Error::InvalidArgument(format!(
                    "δ = {d} must lie in (0, 1/max(T)] = (0, {}]",
                    1.0 / t_max
                )));
            }
        }
        if self.seeds.seeds().is_empty() {
            return Err(Error::InvalidArgument("seed list is empty".into()));
        }
        if let Some(t) = self.safe_threshold {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::InvalidArgument("safe_threshold must be positive".into()));
            }
        }
        Ok(())
    }

    /// Materialize the instance.
    pub fn build_instance(&self) -> Result<LqrInstance> {
        match &self.instance {
            InstanceSpec::Inline { a, b, r_x } => {
                let a = matrix_from_rows(a, "A")?;
                let b = matrix_from_rows(b, "B")?;
                let r_x = match r_x {
                    Some(rows) => matrix_from_rows(rows, "R_x")?,
                    None => DMatrix::identity(a.nrows(), a.nrows()),
                };
                LqrInstance::normalized(a, b, r_x)
            }
            InstanceSpec::ScaledIdentity { a, d_x, d_u } => {
                Ok(scaled_identity_instance(*a, *d_x, *d_u)?.0)
            }
            InstanceSpec::RandomStable { d_x, d_u, spectral_target, gen_seed } => {
                random_stable_instance(*d_x, *d_u, *spectral_target, *gen_seed)
            }
        }
    }

    /// Warmup gain K₀ (zero when unspecified).
    pub fn build_k0(&self, inst: &LqrInstance) -> Result<DMatrix<f64>> {
        match &self.k0 {
            Some(rows) => matrix_from_rows(rows, "K0"),
            None => Ok(DMatrix::zeros(inst.dim_u(), inst.dim_x())),
        }
    }

    pub fn safe_rule(&self) -> SafeRule {
        if self.certified_safe_rule {
            SafeRule::Certified
        } else {
            match self.safe_threshold {
                Some(t) => SafeRule::ConfThreshold(t),
                None => SafeRule::default(),
            }
        }
    }

    /// δ for one run: the configured value or 1/T.
    pub fn delta_for(&self, t_horizon: u64) -> f64 {
        self.delta.unwrap_or(1.0 / t_horizon as f64)
    }

    /// FNV-1a content hash of the canonical serialized config; names the
    /// output files so reruns with edited configs never collide.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in canonical.as_bytes() {
            h ^= *byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}
