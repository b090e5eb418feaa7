//! Command-line front end.
//!
//! Subcommands: `dare` (solve and print a Riccati solution), `simulate`
//! (one rollout to CSV), `run-ce` (one adaptive run with its epoch
//! ledger), `packing` (emit a packing JSON), `sweep` (full experiment),
//! `acceptance` (run the acceptance suite). Exit codes: 0 success, 2
//! validation error, 3 numerical failure.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lqrlab::config::ExperimentConfig;
use lqrlab::sweep::run_sweep;
use lqrlab_core::adaptive::{run_ce, write_epoch_csv, CeOptions};
use lqrlab_core::control::{solve_dare, solve_dare_default, DEFAULT_DARE_MAX_ITER};
use lqrlab_core::packing::{build_packing, packing_to_json};
use lqrlab_core::rng::GaussianStream;
use lqrlab_core::sim::{regret, rollout, write_trajectory_csv, LinearFeedback};
use lqrlab_core::Error;
use nalgebra::DMatrix;


/// Print to stdout, tolerating a closed pipe (`lqrlab ... | head`).
macro_rules! say {
    ($($arg:tt)*) => {
        let _ = writeln!(std::io::stdout(), $($arg)*);
    };
}

#[derive(Parser)]
#[command(name = "lqrlab", about = "Online LQR laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for single-run subcommands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Riccati solver tolerance.
    #[arg(long, global = true, default_value_t = 1e-12)]
    tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the DARE of the configured instance and print P, K.
    Dare,
    /// One seeded rollout of the configured policy, written as CSV.
    Simulate,
    /// One adaptive certainty-equivalence run with its epoch ledger.
    RunCe,
    /// Build a packing alternative and emit it as JSON.
    Packing,
    /// Full (T, seed) sweep with summary and ledgers.
    Sweep,
    /// Run the acceptance suite; one line per criterion.
    Acceptance,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InvalidArgument(_)
                | Error::DimensionMismatch(_)
                | Error::InvalidNormalization(_)
                | Error::PreconditionFailed(_) => 2,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("--config PATH is required".into()))?;
    ExperimentConfig::from_path(path)
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    match cli.command {
        Command::Dare => {
            let cfg = load_config(cli)?;
            let inst = cfg.build_instance()?;
            let sol = solve_dare(&inst, cli.tol, DEFAULT_DARE_MAX_ITER)?;
            say!("P = {:.12}", sol.p);
            say!("K = {:.12}", sol.k);
            say!(
                "residual = {:.3e}, iterations = {}, J* = {:.12}",
                sol.residual,
                sol.iterations,
                sol.j_star()
            );
            Ok(())
        }
        Command::Simulate => {
            let cfg = load_config(cli)?;
            let inst = cfg.build_instance()?;
            let spec = cfg
                .simulate
                .clone()
                .ok_or_else(|| Error::InvalidArgument("config needs a [simulate] table".into()))?;
            let gain = match &spec.gain {
                Some(rows) => {
                    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                    DMatrix::from_row_slice(rows.len(), rows[0].len(), &flat)
                }
                None => solve_dare_default(&inst)?.k,
            };
            let mut policy = LinearFeedback::new(gain, spec.sigma_u);
            let traj = rollout(&inst, &mut policy, spec.t as usize, cli.seed)?;
            fs::create_dir_all(&cli.out).map_err(io_err)?;
            let path = cli
                .out
                .join(format!("simulate_{}_s{}.csv", cfg.content_hash(), cli.seed));
            let mut file = fs::File::create(&path).map_err(io_err)?;
            write_trajectory_csv(&traj, &mut file).map_err(io_err)?;
            say!("total cost = {:.6}", traj.total_cost());
            say!("wrote {}", path.display());
            Ok(())
        }
        Command::RunCe => {
            let cfg = load_config(cli)?;
            let inst = cfg.build_instance()?;
            let k0 = cfg.build_k0(&inst)?;
            let t = *cfg.horizons.iter().max().unwrap();
            let delta = cfg.delta_for(t);
            let opts = CeOptions { safe_rule: cfg.safe_rule(), ..CeOptions::default() };
            let run = run_ce(&inst, &k0, delta, t as usize, cli.seed, &opts)?;
            let star = solve_dare_default(&inst)?;
            fs::create_dir_all(&cli.out).map_err(io_err)?;
            let path = cli
                .out
                .join(format!("ledger_{}_T{t}_s{}.csv", cfg.content_hash(), cli.seed));
            let mut file = fs::File::create(&path).map_err(io_err)?;
            write_epoch_csv(&run.epochs, &mut file).map_err(io_err)?;
            say!(
                "T = {t}, regret = {:.6}, k_safe = {}",
                regret(&run.trajectory, star.j_star()),
                run.k_safe.map(|k| k.to_string()).unwrap_or_else(|| "never".into()),
            );
            say!("wrote {}", path.display());
            Ok(())
        }
        Command::Packing => {
            let cfg = load_config(cli)?;
            let inst = cfg.build_instance()?;
            let spec = cfg
                .packing
                .clone()
                .ok_or_else(|| Error::InvalidArgument("config needs a [packing] table".into()))?;
            let star = solve_dare_default(&inst)?;
            let mut g = GaussianStream::new(spec.sign_seed, 3);
            let e = DMatrix::from_fn(inst.dim_u(), spec.m, |_, _| {
                if g.next_gaussian() > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            });
            let packing = build_packing(&inst, &star, spec.m, spec.eps_pack, &e)?;
            fs::create_dir_all(&cli.out).map_err(io_err)?;
            let path = cli.out.join(format!("packing_{}.json", cfg.content_hash()));
            let json = packing_to_json(&packing);
            fs::write(&path, serde_json::to_string_pretty(&json).expect("json"))
                .map_err(io_err)?;
            say!("wrote {}", path.display());
            Ok(())
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            let result = run_sweep(&cfg, &cli.out)?;
            say!("{} runs, wrote {}", result.rows.len(), result.summary_path.display());
            Ok(())
        }
        Command::Acceptance => {
            fs::create_dir_all(&cli.out).map_err(io_err)?;
            let results = lqrlab::acceptance::run_all(&cli.out);
            let mut failed = 0;
            for r in &results {
                say!("{}", r.line());
                if !r.passed {
                    failed += 1;
                }
            }
            if failed == 0 {
                say!("all {} criteria passed", results.len());
                Ok(())
            } else {
                Err(Error::NumericalFailure(format!("{failed} acceptance criteria failed")))
            }
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidArgument(format!("io error: {e}"))
}
