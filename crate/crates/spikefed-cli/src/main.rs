//! Command-line entry point: `spikefed run`, `spikefed sweep`,
//! `spikefed report`.

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use spikefed_cli::config::{AttackKindConfig, ModelKindConfig, Overrides, RawConfig};
use spikefed_cli::report::{report_csv, report_runs};
use spikefed_cli::runner::{run_experiment, RayonRunner};
use spikefed_cli::sweep::{grid_deltas, run_sweep, sweep_csv, SweepFile};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "spikefed",
    about = "Deterministic federated-learning simulator for spiking and dense MLPs \
             with Byzantine attack injection and top-k sparsification",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a single experiment.
    Run(RunArgs),
    /// Run a list of experiments from a sweep file or a preset grid.
    Sweep(SweepArgs),
    /// Summarize finished run directories.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Snn,
    Ann,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AttackArg {
    None,
    Noise,
    Alie,
    Minmax,
    Ipm,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (TOML); defaults apply for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; every stream of the run derives from it.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    model: Option<ModelArg>,
    #[arg(long)]
    attack: Option<AttackArg>,
    /// Top-k retention proportion in (0, 1]; omit for dense updates.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long = "malicious-frac")]
    malicious_frac: Option<f32>,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    clients: Option<usize>,
    /// Noise attack standard deviation.
    #[arg(long)]
    sigma: Option<f32>,
    /// IPM negation scale.
    #[arg(long)]
    epsilon: Option<f32>,
    /// Output directory for metrics, summary, checkpoint and heatmap.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run client steps on one thread instead of the rayon pool.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep file with a [base] config and [[runs]] deltas.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset intensity grid crossed with both models: noise, ipm, alie,
    /// minmax, or kappa. Replaces the file's [[runs]].
    #[arg(long)]
    grid: Option<String>,
    /// Repetitions per grid point (seeds base_seed..base_seed+N-1).
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run the sweep's configs one after another instead of in parallel.
    #[arg(long)]
    sequential_runs: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories to summarize.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
    /// Baseline run directory for the accuracy-loss column.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Write the table here as CSV (always printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let mut raw = match &args.config {
        Some(path) => RawConfig::from_path(path)?,
        None => RawConfig::default(),
    };
    raw.apply(&Overrides {
        seed: args.seed,
        model: args.model.map(|m| match m {
            ModelArg::Snn => ModelKindConfig::Snn,
            ModelArg::Ann => ModelKindConfig::Ann,
        }),
        attack: args.attack.map(|a| match a {
            AttackArg::None => AttackKindConfig::None,
            AttackArg::Noise => AttackKindConfig::Noise,
            AttackArg::Alie => AttackKindConfig::Alie,
            AttackArg::Minmax => AttackKindConfig::MinMax,
            AttackArg::Ipm => AttackKindConfig::Ipm,
        }),
        kappa: args.kappa,
        malicious_fraction: args.malicious_frac,
        rounds: args.rounds,
        clients: args.clients,
        sigma: args.sigma,
        epsilon: args.epsilon,
    });
    let cfg = raw.resolve()?;

    let out = if args.sequential {
        run_experiment(&cfg, &spikefed::fl::SequentialRunner, args.out.as_deref(), true)?
    } else {
        run_experiment(&cfg, &RayonRunner, args.out.as_deref(), true)?
    };
    print!("{}", toml::to_string_pretty(&out.summary)?);
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let file = match &args.config {
        Some(path) => SweepFile::from_path(path)?,
        None => SweepFile::default(),
    };
    let deltas = match &args.grid {
        Some(grid) => {
            let base_seed = file.base.seed.unwrap_or(42);
            grid_deltas(grid, args.seeds, base_seed)?
        }
        None => file.runs.clone(),
    };
    let rows = run_sweep(&file.base, &deltas, args.out.as_deref(), !args.sequential_runs)?;
    print!("{}", sweep_csv(&rows));
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed (see the error column)", rows.len());
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    let dirs: Vec<&std::path::Path> = args.runs.iter().map(PathBuf::as_path).collect();
    let rows = report_runs(&dirs, args.baseline.as_deref())?;
    let csv = report_csv(&rows);
    print!("{csv}");
    if let Some(path) = &args.out {
        std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Report(args) => cmd_report(args),
    }
}
