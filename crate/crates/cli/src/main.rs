//! `reservoir`: runs one experiment for one or more seeds and writes its
//! artifacts under `<out-dir>/<experiment>/g<g>_seed<seed>/`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reservoir_stability::experiment::artifacts::{self, Summary};
use reservoir_stability::experiment::config_file::Overrides;
use reservoir_stability::experiment::{
    run_closed_loop_validation, run_fixed_point, run_pca, run_seeds, run_time_varying,
    run_unroll_sweep, ExperimentConfig, ExperimentKind,
};
use reservoir_stability::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "reservoir", version, about = "Reservoir training with spectral stability tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact-fit training towards a constant output.
    FixedPoint(Common),
    /// FORCE training towards a sinusoid.
    TimeVarying(Common),
    /// Time-varying training for every interval in the sweep set.
    UnrollSweep(Common),
    /// Fixed-point training, then comparison with the closed-loop spectrum.
    ValidateClosedLoop(Common),
    /// Fixed-point training, then PCA of the post-training rates.
    Pca(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Number of neurons.
    #[arg(long)]
    n: Option<usize>,
    /// Recurrent gain.
    #[arg(long)]
    g: Option<f64>,
    /// Euler step.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seeds, run in parallel.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Training step budget.
    #[arg(long)]
    steps: Option<usize>,
    /// Integrated-unrolling interval (1 unrolls every step).
    #[arg(long)]
    unroll_interval: Option<usize>,
    #[arg(long)]
    target_amplitude: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    time_scale: Option<f64>,
    /// Steps between spectra; defaults to every step for n <= 200.
    #[arg(long)]
    snapshot_cadence: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// `key = value` file; its settings override the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            n: self.n,
            g: self.g,
            dt: self.dt,
            seed: self.seed,
            seeds: self.seeds.clone(),
            steps: self.steps,
            unroll_interval: self.unroll_interval,
            target_amplitude: self.target_amplitude,
            omega: self.omega,
            time_scale: self.time_scale,
            snapshot_cadence: self.snapshot_cadence,
            out_dir: self.out_dir.clone(),
            ..Overrides::default()
        }
    }
}

const SMALL_NETWORK: usize = 200;

fn build_config(kind: ExperimentKind, common: &Common) -> Result<ExperimentConfig> {
    let mut layered = common.overrides();
    if let Some(path) = &common.config {
        let file = Overrides::load(path)?;
        // A seed list from the file replaces a single seed from the flags.
        if file.seeds.is_some() || file.seed.is_some() {
            layered.seed = None;
            layered.seeds = None;
        }
        layered = layered.layered_under(file);
    }
    let mut config = ExperimentConfig::new(kind);
    layered.apply(&mut config)?;
    if layered.snapshot_cadence.is_none() && config.reservoir.n <= SMALL_NETWORK {
        config.snapshot_cadence = 1;
    }
    config.validate()?;
    Ok(config)
}

fn describe(summary: &Summary, dir: &Path) -> String {
    let r = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    let mut line = format!(
        "seed {}: radius {} -> {}, converged_at {}, train_rmse {:.3e}, test_rmse {:.3e}",
        summary.seed,
        r(summary.radius_initial),
        r(summary.radius_final),
        summary
            .converged_at
            .map_or("-".to_string(), |s| s.to_string()),
        summary.train_rmse,
        summary.test_rmse,
    );
    if let Some(d) = summary.closed_loop_distance {
        line.push_str(&format!(", closed_loop_distance {d:.3e}"));
    }
    for s in &summary.fluctuation_scores {
        line.push_str(&format!(", pc{} {:.3}", s.component, s.score));
    }
    line.push_str(&format!(" [{}]", dir.display()));
    line
}

/// Runs one seed and writes its artifacts. Aborted runs still flush what
/// they recorded before the error is returned. The inner error reports sweep
/// entries that failed while the sweep itself completed.
fn execute(kind: ExperimentKind, config: &ExperimentConfig) -> Result<Result<String, String>> {
    let dir = config.run_dir();
    let flushed = |e: Error| -> Error {
        if let Err(io) = artifacts::write_partial(&dir, config, &e) {
            eprintln!("could not write partial artifacts: {io}");
        }
        e
    };
    let summary = match kind {
        ExperimentKind::FixedPoint => {
            let run = run_fixed_point(config).map_err(flushed)?;
            artifacts::write_run(&dir, config, &run.result)?
        }
        ExperimentKind::TimeVarying => {
            let run = run_time_varying(config).map_err(flushed)?;
            artifacts::write_run(&dir, config, &run.result)?
        }
        ExperimentKind::ClosedLoopValidation => {
            let report = run_closed_loop_validation(config).map_err(flushed)?;
            artifacts::write_validation(&dir, config, &report)?
        }
        ExperimentKind::Pca => {
            let report = run_pca(config).map_err(flushed)?;
            artifacts::write_pca(&dir, config, &report)?
        }
        ExperimentKind::UnrollSweep => {
            let entries = run_unroll_sweep(config)?;
            artifacts::write_sweep(&dir, config, &entries)?;
            let mut lines = Vec::new();
            let mut failed = None;
            for e in &entries {
                match &e.outcome {
                    Ok(run) => lines.push(format!(
                        "seed {} k={}: train_rmse {:.3e}, test_rmse {:.3e}",
                        config.reservoir.seed, e.interval, run.result.train_rmse, run.result.test_rmse
                    )),
                    Err(err) => {
                        lines.push(format!("seed {} k={}: failed: {err}", config.reservoir.seed, e.interval));
                        failed.get_or_insert(e.interval);
                    }
                }
            }
            lines.push(format!("[{}]", dir.display()));
            let report = lines.join("\n");
            return Ok(match failed {
                Some(k) => Err(format!("sweep entry k={k} failed\n{report}")),
                None => Ok(report),
            });
        }
    };
    Ok(Ok(describe(&summary, &dir)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match &cli.command {
        Command::FixedPoint(c) => (ExperimentKind::FixedPoint, c),
        Command::TimeVarying(c) => (ExperimentKind::TimeVarying, c),
        Command::UnrollSweep(c) => (ExperimentKind::UnrollSweep, c),
        Command::ValidateClosedLoop(c) => (ExperimentKind::ClosedLoopValidation, c),
        Command::Pca(c) => (ExperimentKind::Pca, c),
    };
    let config = match build_config(kind, common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let mut status = ExitCode::SUCCESS;
    for (seed, outcome) in run_seeds(&config, |c| execute(kind, c)) {
        match outcome {
            Ok(Ok(line)) => println!("{line}"),
            Ok(Err(report)) => {
                eprintln!("error (seed {seed}): {report}");
                status = ExitCode::FAILURE;
            }
            Err(e) => {
                eprintln!("error (seed {seed}): {e}");
                status = ExitCode::FAILURE;
            }
        }
    }
    status
}
