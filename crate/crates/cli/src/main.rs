//! Command-line front end for the localization library.
//!
//! `tswls estimate` draws one noisy measurement set and prints the full
//! solution as JSON; `tswls sweep` runs a Monte Carlo campaign from a JSON
//! config and writes one CSV row per (axis value, anchor subset, algorithm).
//!
//! Exit codes: 1 for unreadable or invalid input files, 2 for solver
//! failures, 3 for output write failures.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use tswls::estimator::{solve, EstimatorConfig};
use tswls::experiments::{run_sweep, SweepConfig, SweepRow};
use tswls::geometry::{true_parameters, Scenario};
use tswls::measurement::{synthesize, NoiseSpec};

#[derive(Parser)]
#[command(name = "tswls", version, about = "Two-stage weighted-least-squares 3D localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one noisy measurement set and print the solution as JSON.
    Estimate {
        /// Scenario JSON file: {"bs": [x,y,z], "ris": [[..], ..], "mu": [x,y,z]}.
        #[arg(long)]
        scenario: PathBuf,
        /// Noise JSON file: {"sigma_a": rad, "sigma_t": m}, scalars or
        /// per-anchor arrays.
        #[arg(long)]
        noise: PathBuf,
        /// Seed for the measurement draw.
        #[arg(long)]
        seed: u64,
    },
    /// Run a Monte Carlo sweep campaign and write a CSV.
    Sweep {
        /// Sweep configuration JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for trial execution. Falls back to the
        /// TSWLS_THREADS environment variable, then to all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
}

const EXIT_PARSE: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_WRITE: u8 = 3;

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Estimate {
            scenario,
            noise,
            seed,
        } => cmd_estimate(&scenario, &noise, seed),
        Command::Sweep {
            config,
            out,
            threads,
        } => cmd_sweep(&config, &out, threads),
    }
}

/// Reads and deserializes a JSON file, mapping every failure to exit 1 with
/// the path and serde's line/column diagnostic on standard error.
fn load_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {what} file {}: {e}", path.display());
        ExitCode::from(EXIT_PARSE)
    })?;
    serde_json::from_str(&text).map_err(|e| {
        eprintln!("error: invalid {what} file {}: {e}", path.display());
        ExitCode::from(EXIT_PARSE)
    })
}

#[derive(Serialize)]
struct EstimateOutput {
    /// Recovered position, meters.
    q_hat: [f64; 3],
    /// Stage-1 estimate of position and direct range.
    u_breve: [f64; 4],
    /// Squared coordinate offsets from the base station, pre-clamp.
    xi_breve: [f64; 3],
    /// Diagonal of the sign matrix applied to the square roots.
    pi: [f64; 3],
    /// Per-component clamp flags: true where a negative squared offset was
    /// clamped to zero.
    clamped: [bool; 3],
    /// Weighted solves performed in Stage 1.
    iterations: usize,
}

fn cmd_estimate(scenario_path: &Path, noise_path: &Path, seed: u64) -> ExitCode {
    let scenario: Scenario = match load_json(scenario_path, "scenario") {
        Ok(s) => s,
        Err(code) => return code,
    };
    let spec: NoiseSpec = match load_json(noise_path, "noise") {
        Ok(s) => s,
        Err(code) => return code,
    };

    let solution = (|| {
        scenario.validate()?;
        let model = spec.into_model(scenario.n_ris())?;
        let truth = true_parameters(&scenario)?;
        let measurements = synthesize(&truth, &model, seed);
        solve(&measurements, &scenario, &model, &EstimatorConfig::default())
    })();
    let solution = match solution {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: solver failed: {e}");
            return ExitCode::from(EXIT_SOLVER);
        }
    };

    let est = &solution.estimate;
    let mut clamped = [false; 3];
    for &k in &est.clamped_components {
        clamped[k] = true;
    }
    let output = EstimateOutput {
        q_hat: est.q_hat.into(),
        u_breve: solution.stage1.u_breve.into(),
        xi_breve: est.xi_breve.into(),
        pi: [est.pi[(0, 0)], est.pi[(1, 1)], est.pi[(2, 2)]],
        clamped,
        iterations: solution.stage1.iterations_used,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&output).expect("output struct serializes")
    );
    ExitCode::SUCCESS
}

fn cmd_sweep(config_path: &Path, out_path: &Path, threads: Option<usize>) -> ExitCode {
    let config: SweepConfig = match load_json(config_path, "sweep config") {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Err(e) = config.validate() {
        eprintln!("error: invalid sweep config {}: {e}", config_path.display());
        return ExitCode::from(EXIT_PARSE);
    }
    let base_dir = config_path.parent().unwrap_or_else(|| Path::new("."));
    let scenario = match config.resolved_scenario(base_dir) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: invalid sweep config {}: {e}", config_path.display());
            return ExitCode::from(EXIT_PARSE);
        }
    };

    let threads = match threads {
        Some(n) => Some(n),
        None => match threads_from_env() {
            Ok(t) => t,
            Err(code) => return code,
        },
    };
    if let Some(n) = threads {
        // A global pool can only be installed once per process; a second
        // sweep in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let rows = match run_sweep(&config, &scenario, &EstimatorConfig::default()) {
        Ok(rows) => rows,
        Err(e) => {
            eprintln!("error: sweep failed: {e}");
            return ExitCode::from(EXIT_SOLVER);
        }
    };

    if let Err(e) = std::fs::write(out_path, render_csv(&rows)) {
        eprintln!("error: cannot write {}: {e}", out_path.display());
        return ExitCode::from(EXIT_WRITE);
    }
    print!("{}", render_summary(&rows));
    println!("wrote {} rows to {}", rows.len(), out_path.display());
    ExitCode::SUCCESS
}

/// `--threads` fallback: the TSWLS_THREADS environment variable. `None`
/// (unset) keeps the library default of all cores.
fn threads_from_env() -> Result<Option<usize>, ExitCode> {
    match std::env::var("TSWLS_THREADS") {
        Ok(value) => value.trim().parse().map(Some).map_err(|_| {
            eprintln!("error: TSWLS_THREADS must be a positive integer, got {value:?}");
            ExitCode::from(EXIT_PARSE)
        }),
        Err(_) => Ok(None),
    }
}

/// Renders sweep rows in the pinned CSV schema. Fields are separated by
/// comma-space; floats use the shortest decimal form that parses back to the
/// identical bits, so reading the file reproduces the results exactly. The
/// predicted-bias columns are empty for rows without a prediction.
fn render_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "axis_name, axis_value, n_ris, algorithm, trials, mse, \
         bias_x, bias_y, bias_z, theo_bias_x, theo_bias_y, theo_bias_z, \
         clamp_rate, failures\n",
    );
    for row in rows {
        let s = &row.summary;
        let theo = match &row.theo_bias {
            Some(b) => format!("{}, {}, {}", b.x, b.y, b.z),
            None => ", , ".into(),
        };
        writeln!(
            out,
            "{}, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}",
            row.axis_name,
            row.axis_value,
            row.n_ris,
            s.algorithm,
            s.trials,
            s.mse,
            s.bias.x,
            s.bias.y,
            s.bias.z,
            theo,
            s.clamp_rate,
            s.failures
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Human-readable per-point table, wider than the CSV: adds the MSE over all
/// finished trials (failed solves excluded from the primary MSE), the MSE
/// standard error, and the mean Stage-1 solve count.
fn render_summary(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:>10} {:>12} {:>5} {:>9} {:>12} {:>10} {:>12} {:>10} {:>8} {:>8}",
        "axis", "value", "n_ris", "algorithm", "mse", "mse_se", "mse_all", "clamp", "failed", "iters"
    )
    .expect("writing to a String cannot fail");
    for row in rows {
        let s = &row.summary;
        writeln!(
            out,
            "{:>10} {:>12.6e} {:>5} {:>9} {:>12.6e} {:>10.3e} {:>12.6e} {:>10.6} {:>8} {:>8.2}",
            row.axis_name,
            row.axis_value,
            row.n_ris,
            s.algorithm.to_string(),
            s.mse,
            s.mse_se,
            s.mse_all,
            s.clamp_rate,
            s.failures,
            s.mean_iterations
        )
        .expect("writing to a String cannot fail");
    }
    out
}
