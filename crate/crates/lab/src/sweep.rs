//! Seeded parallel sweeps and scaling-law fits.
//!
//! One sweep runs every (T, seed) pair of a config, in parallel across a
//! worker pool (each run owns its RNG streams; there is no cross-run
//! shared mutable state), and writes
//!
//! - `sweep_<hash>.csv` with columns `T,seed,regret,k_safe,status`, and
//! - `ledger_<hash>_T<T>_s<seed>.csv` per adaptive run
//!
//! into the output directory, where `<hash>` is the config content hash.
//! Results are deterministic given (config, seeds): rows are emitted in
//! job order regardless of scheduling.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lqrlab_core::adaptive::{run_ce, write_epoch_csv, CeOptions, EpochRecord};
use lqrlab_core::control::{solve_dare_default, LqrInstance};
use lqrlab_core::sim::{regret, rollout, LinearFeedback};
use lqrlab_core::{Error, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::{Algorithm, ExperimentConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Blowup,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Blowup => "blowup",
        }
    }
}

/// One (T, seed) result row.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub t: u64,
    pub seed: u64,
    pub regret: f64,
    pub k_safe: Option<u32>,
    pub status: RunStatus,
    pub ledger_path: Option<PathBuf>,
    /// Per-epoch records of adaptive runs (also on disk at `ledger_path`).
    pub epochs: Vec<EpochRecord>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary_path: PathBuf,
}

/// Run every (T, seed) job of the config and write the summary CSV.
pub fn run_sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<SweepResult> {
    config.validate()?;
    fs::create_dir_all(out_dir)
        .map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", out_dir.display())))?;
    let inst = config.build_instance()?;
    let k0 = config.build_k0(&inst)?;
    let star = solve_dare_default(&inst)?;
    let j_star = star.j_star();
    let fixed_gain = match &config.fixed_gain {
        Some(rows) => {
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            DMatrix::from_row_slice(rows.len(), rows[0].len(), &flat)
        }
        None => star.k.clone(),
    };
    let hash = config.content_hash();

    let jobs: Vec<(u64, u64)> = config
        .horizons
        .iter()
        .flat_map(|&t| config.seeds.seeds().into_iter().map(move |s| (t, s)))
        .collect();

    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(t, seed)| run_one(config, &inst, &k0, &fixed_gain, j_star, t, seed, out_dir, &hash))
        .collect::<Result<Vec<_>>>()?;

    let summary_path = out_dir.join(format!("sweep_{hash}.csv"));
    let mut file = fs::File::create(&summary_path)
        .map_err(|e| Error::InvalidArgument(format!("cannot write summary: {e}")))?;
    writeln!(file, "T,seed,regret,k_safe,status").map_err(io_err)?;
    for row in &rows {
        let k_safe = row.k_safe.map(|k| k.to_string()).unwrap_or_default();
        writeln!(file, "{},{},{},{},{}", row.t, row.seed, row.regret, k_safe, row.status.as_str())
            .map_err(io_err)?;
    }
    Ok(SweepResult { rows, summary_path })
}

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidArgument(format!("io error: {e}"))
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    config: &ExperimentConfig,
    inst: &LqrInstance,
    k0: &DMatrix<f64>,
    fixed_gain: &DMatrix<f64>,
    j_star: f64,
    t: u64,
    seed: u64,
    out_dir: &Path,
    hash: &str,
) -> Result<SweepRow> {
    let blowup_row = |_: usize| SweepRow {
        t,
        seed,
        regret: f64::NAN,
        k_safe: None,
        status: RunStatus::Blowup,
        ledger_path: None,
        epochs: Vec::new(),
    };
    match config.algorithm {
        Algorithm::Ce => {
            let opts = CeOptions { safe_rule: config.safe_rule(), ..CeOptions::default() };
            match run_ce(inst, k0, config.delta_for(t), t as usize, seed, &opts) {
                Ok(run) => {
                    let ledger_path = out_dir.join(format!("ledger_{hash}_T{t}_s{seed}.csv"));
                    let mut file = fs::File::create(&ledger_path).map_err(io_err)?;
                    write_epoch_csv(&run.epochs, &mut file).map_err(io_err)?;
                    Ok(SweepRow {
                        t,
                        seed,
                        regret: regret(&run.trajectory, j_star),
                        k_safe: run.k_safe,
                        status: RunStatus::Ok,
                        ledger_path: Some(ledger_path),
                        epochs: run.epochs,
                    })
                }
                Err(Error::BlowUp { time, .. }) => Ok(blowup_row(time)),
                Err(other) => Err(other),
            }
        }
        Algorithm::FixedK | Algorithm::WarmupOnly => {
            let (gain, sigma_u) = match config.algorithm {
                Algorithm::FixedK => (fixed_gain.clone(), config.sigma_u),
                _ => (k0.clone(), 1.0),
            };
            let mut policy = LinearFeedback::new(gain, sigma_u);
            match rollout(inst, &mut policy, t as usize, seed) {
                Ok(traj) => Ok(SweepRow {
                    t,
                    seed,
                    regret: regret(&traj, j_star),
                    k_safe: None,
                    status: RunStatus::Ok,
                    ledger_path: None,
                    epochs: Vec::new(),
                }),
                Err(Error::BlowUp { time, .. }) => Ok(blowup_row(time)),
                Err(other) => Err(other),
            }
        }
    }
}

/// Log–log scaling fit.
#[derive(Clone, Copy, Debug)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of log(median y) on log x over raw (x, y) pairs.
/// Needs ≥ 3 distinct x values and positive medians.
pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    let mut grouped: Vec<(f64, Vec<f64>)> = Vec::new();
    for &(x, y) in points {
        if x.is_nan() || x <= 0.0 || !y.is_finite() {
            return Err(Error::InvalidArgument("x must be positive and y finite".into()));
        }
        match grouped.iter_mut().find(|(gx, _)| *gx == x) {
            Some((_, ys)) => ys.push(y),
            None => grouped.push((x, vec![y])),
        }
    }
    if grouped.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need ≥ 3 distinct x values, got {}",
            grouped.len()
        )));
    }
    let mut pts = Vec::with_capacity(grouped.len());
    for (x, ys) in &mut grouped {
        let m = median(ys);
        if m.is_nan() || m <= 0.0 {
            return Err(Error::InvalidArgument(format!("non-positive median at x = {x}")));
        }
        pts.push((x.ln(), m.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("degenerate x spread".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(ScalingFit { slope, intercept, r2 })
}

/// Median of a slice (sorts in place).
pub fn median(xs: &mut [f64]) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exact_power_laws() {
        let lin: Vec<(f64, f64)> = (1..=5).map(|i| (i as f64, 3.0 * i as f64)).collect();
        let f = fit_scaling(&lin).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);

        let sqrt: Vec<(f64, f64)> =
            (1..=5).map(|i| (i as f64, 2.0 * (i as f64).sqrt())).collect();
        let f = fit_scaling(&sqrt).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fit_handles_noisy_sqrt_law() {
        // y = √x · (1 ± 5%) with a seeded pattern
        let mut pts = Vec::new();
        let noise = [1.05, 0.95, 1.02, 0.98, 1.04, 0.96];
        for (i, &x) in [16.0f64, 64.0, 256.0, 1024.0, 4096.0, 16384.0].iter().enumerate() {
            for j in 0..5 {
                pts.push((x, x.sqrt() * noise[(i + j) % noise.len()]));
            }
        }
        let f = fit_scaling(&pts).unwrap();
        assert!((0.45..=0.55).contains(&f.slope), "slope {}", f.slope);
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(fit_scaling(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_scaling(&[(1.0, 0.0), (2.0, 1.0), (4.0, 2.0)]).is_err());
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
