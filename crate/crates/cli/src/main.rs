use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptive_hierarchy::experiment::{self, RunOutcome};
use adaptive_hierarchy::{Error, ModelKind, RunConfig};
use clap::{Parser, Subcommand};

const EXIT_CONFIG: u8 = 2;
const EXIT_BOUND: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_OTHER: u8 = 1;

/// Adaptive FOM / reduced basis / kernel surrogate hierarchy for a
/// parametric advection-diffusion-reaction output.
#[derive(Debug, Parser)]
#[command(name = "adaptive-hierarchy", version)]
struct Cli {
    /// Output directory (overrides `[output] dir`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Sweep seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the query sweep and write queries.csv, summary.txt, timings.svg
    /// and model.bin.
    Run { config: PathBuf },
    /// Run the sweep, then compare RB and ML answers against the full-order
    /// model at `n` fresh random parameters.
    Validate {
        config: PathBuf,
        #[arg(long = "n", default_value_t = 20)]
        n: usize,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. }
        | Error::InvalidBox(_)
        | Error::InvalidMesh(_)
        | Error::InvalidTimeGrid(_)
        | Error::UnknownStrategy { .. }
        | Error::InvalidArgument(_)
        | Error::NonCoercive { .. } => EXIT_CONFIG,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_OTHER,
    }
}

fn print_summary(outcome: &RunOutcome, out_dir: &Path) {
    let s = &outcome.summary;
    println!(
        "{} queries: ML {}, RB {}, FOM {}; rb_dim {}, |X_train| {}",
        s.n_queries,
        s.count(ModelKind::Ml),
        s.count(ModelKind::Rb),
        s.count(ModelKind::Fom),
        s.final_rb_dim,
        s.final_train_size
    );
    println!("outputs in {}", out_dir.display());
}

fn execute(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::load_with_seed(&config, cli.seed)?;
            let out_dir = cli.out_dir.unwrap_or_else(|| cfg.output.dir.clone());
            let outcome = experiment::run(&cfg, &out_dir)?;
            print_summary(&outcome, &out_dir);
            Ok(0)
        }
        Command::Validate { config, n } => {
            let cfg = RunConfig::load_with_seed(&config, cli.seed)?;
            let out_dir = cli.out_dir.unwrap_or_else(|| cfg.output.dir.clone());
            let outcome = experiment::run(&cfg, &out_dir)?;
            print_summary(&outcome, &out_dir);
            let report = experiment::validate_run(&outcome.state, n, cfg.seed.unwrap_or(0))?;
            std::fs::write(out_dir.join("validation.csv"), report.render())?;
            let violations = report.violations();
            println!("validation: {n} points, {violations} bound violations");
            Ok(if violations > 0 { EXIT_BOUND } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
