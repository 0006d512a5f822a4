use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use vmnull_cli::{Experiment, Report, RunConfig};

#[derive(Parser)]
#[command(name = "vmnull", version, about = "Vector-field diagnostics for the relativistic Vlasov-Maxwell system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML); defaults of the experiment otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for the report, tables and snapshots.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fail on warnings and skipped checks too.
    #[arg(long, global = true)]
    strict: bool,
    /// Also write a gnuplot script for the tables.
    #[arg(long, global = true)]
    gnuplot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Pointwise identities, commutators and quadrature lemmas.
    Identities,
    /// Free transport of Gaussian data.
    FreeDecay,
    /// The pure-charge field and Phi along its characteristics.
    PureCharge,
    /// Coupled particle-in-cell run.
    VmRun,
    /// Print a report written by an earlier run (from --out).
    Report,
}

fn experiment(c: &Command) -> Option<Experiment> {
    match c {
        Command::Identities => Some(Experiment::Identities),
        Command::FreeDecay => Some(Experiment::FreeDecay),
        Command::PureCharge => Some(Experiment::PureCharge),
        Command::VmRun => Some(Experiment::VmRun),
        Command::Report => None,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let Some(exp) = experiment(&cli.command) else {
        let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
        let report = Report::read(&dir)?;
        print!("{}", report.render());
        return Ok(report.passed(cli.strict));
    };
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::defaults(exp),
    };
    if cfg.experiment != exp {
        bail!("config is for '{}' but the command is '{exp}'", cfg.experiment);
    }
    if let Some(s) = cli.seed {
        cfg.ensemble.seed = s;
        cfg.validate()?;
    }
    let dir = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out").join(exp.name()));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let outcome = vmnull_cli::run(&cfg, Some(&dir))?;
    outcome.write(&dir, cli.gnuplot)?;
    print!("{}", outcome.report.render());
    eprintln!("wrote {} ({:.1} s)", dir.display(), outcome.timings.total().as_secs_f64());
    Ok(outcome.report.passed(cli.strict))
}
