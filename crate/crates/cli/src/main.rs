use std::path::PathBuf;
use std::process::ExitCode;

use chemolab_cli::commands::{self, LemmaCounts};
use chemolab_cli::config::RunConfig;
use chemolab_cli::error::{io_at, CliError, CliResult};
use clap::{Parser, Subcommand};

const EXIT_CODES: &str = "Exit codes: 0 success, 1 configuration error, 2 input/output error, \
3 numeric failure (solver abort or failed sweep).";

#[derive(Parser)]
#[command(name = "chemolab", version, about = "Fast-diffusion chemotaxis solver and regularity diagnostics", after_help = EXIT_CODES)]
struct Cli {
    /// Worker threads for data-parallel loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver and write checkpoints, steps.csv and summary.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `out` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a diagnostic request file against a run directory (NDJSON).
    Diagnose {
        run_dir: PathBuf,
        /// Request file, one diagnostic per line.
        #[arg(long)]
        config: PathBuf,
        /// NDJSON destination (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for sampled diagnostics.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Randomised sweeps over the synthetic lemmas.
    Lemmas {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = LemmaCounts::default().geometric)]
        geometric: usize,
        #[arg(long, default_value_t = LemmaCounts::default().isoperimetric)]
        isoperimetric: usize,
        #[arg(long, default_value_t = LemmaCounts::default().embedding)]
        embedding: usize,
        /// Also write the summary here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Barenblatt refinement study (requires chi = 0 and u0 = barenblatt).
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        refinements: usize,
        /// Half-width of the error window around the origin (default: extent / 3).
        #[arg(long)]
        window: Option<f64>,
        /// CSV destination (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(io_at(p)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot set thread count: {e}")))?;
    }
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let (dir, summary) = commands::simulate(&config, out.as_deref(), seed)?;
            eprintln!(
                "wrote {} snapshots, {} steps to {} (max mass drift {:e})",
                summary.snapshots,
                summary.steps,
                dir.display(),
                summary.max_mass_drift
            );
            Ok(())
        }
        Command::Diagnose {
            run_dir,
            config,
            out,
            seed,
        } => commands::diagnose(&run_dir, &config, out.as_deref(), seed),
        Command::Lemmas {
            seed,
            geometric,
            isoperimetric,
            embedding,
            out,
        } => {
            let summaries = commands::lemma_sweeps(
                seed,
                LemmaCounts {
                    geometric,
                    isoperimetric,
                    embedding,
                },
            )?;
            let text = commands::lemma_report(&summaries);
            print!("{text}");
            if let Some(p) = &out {
                std::fs::write(p, &text).map_err(io_at(p))?;
            }
            if summaries.iter().all(|s| s.all_passed()) {
                Ok(())
            } else {
                Err(CliError::Numeric("lemma sweep failed".into()))
            }
        }
        Command::Convergence {
            config,
            refinements,
            window,
            out,
        } => {
            let base = RunConfig::load(&config)?;
            let window = window.unwrap_or(base.extent / 3.0);
            let rows = commands::convergence_study(&base, refinements, window)?;
            emit(&commands::convergence_csv(&rows), out.as_ref())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chemolab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
