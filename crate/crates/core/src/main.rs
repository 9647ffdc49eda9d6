use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rbm_lab::experiments::{self as ex, ExperimentConfig, ExperimentKind, Report};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Contraction,
    StrongError,
    InvariantBias,
    Unbiasedness,
    Moments,
    Bench,
    BuildDistance,
    Validate,
}

impl From<Command> for ExperimentKind {
    fn from(c: Command) -> Self {
        match c {
            Command::Contraction => ExperimentKind::Contraction,
            Command::StrongError => ExperimentKind::StrongError,
            Command::InvariantBias => ExperimentKind::InvariantBias,
            Command::Unbiasedness => ExperimentKind::Unbiasedness,
            Command::Moments => ExperimentKind::Moments,
            Command::Bench => ExperimentKind::Bench,
            Command::BuildDistance => ExperimentKind::BuildDistance,
            Command::Validate => ExperimentKind::Validate,
        }
    }
}

/// Interacting particle systems and the Random Batch Method: experiment runner.
///
/// Exit status is 0 on success, 2 when the run finished with warnings
/// (for example a violated smallness condition) and 1 on errors.
#[derive(Debug, Parser)]
#[command(name = "rbm-lab", version)]
struct Cli {
    #[arg(value_enum, required_unless_present = "print_defaults")]
    command: Option<Command>,
    /// JSON config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `runs/<command>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replica ensembles.
    #[arg(long)]
    workers: Option<usize>,
    /// Print the fully resolved config and exit.
    #[arg(long)]
    print_defaults: bool,
}

fn finish<R: Report>(kind: ExperimentKind, cfg: &ExperimentConfig, report: rbm_lab::Result<R>, out: &Path) -> rbm_lab::Result<usize> {
    let report = report?;
    ex::write_run(kind, cfg, &report, out)?;
    let warnings = report.warnings();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    Ok(warnings.len())
}

fn run(cli: &Cli) -> rbm_lab::Result<usize> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if cli.print_defaults {
        let _ = writeln!(std::io::stdout(), "{}", cfg.to_json());
        return Ok(0);
    }
    let Some(command) = cli.command else {
        return Ok(0);
    };
    let kind = ExperimentKind::from(command);
    let out = cli.out.clone().unwrap_or_else(|| {
        let name = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        PathBuf::from("runs").join(name)
    });
    let warnings = match command {
        Command::Contraction => finish(kind, &cfg, ex::run_contraction(&cfg), &out)?,
        Command::StrongError => finish(kind, &cfg, ex::run_strong_error(&cfg), &out)?,
        Command::InvariantBias => finish(kind, &cfg, ex::run_invariant_bias(&cfg), &out)?,
        Command::Unbiasedness => finish(kind, &cfg, ex::run_unbiasedness(&cfg), &out)?,
        Command::Moments => finish(kind, &cfg, ex::run_moment_bound(&cfg), &out)?,
        Command::Bench => finish(kind, &cfg, ex::run_cost_bench(&cfg), &out)?,
        Command::BuildDistance => finish(kind, &cfg, ex::run_build_distance(&cfg), &out)?,
        Command::Validate => finish(kind, &cfg, ex::run_validate(&cfg), &out)?,
    };
    let _ = writeln!(std::io::stdout(), "wrote {}", out.display());
    Ok(warnings)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
