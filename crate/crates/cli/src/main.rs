use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use preduce::commands::{self, CommandError, FlowArgs};
use preduce::{Problem, RunReport};
use preduce_core::sampling::DEFAULT_SEED;

/// Verify Poisson structures, classify constraint surfaces, compute Dirac
/// brackets, reduce by symmetries and integrate Hamiltonian flows.
#[derive(Debug, Parser)]
#[command(name = "preduce", version)]
struct Cli {
    /// Seed for every random sample drawn by the command.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Print the report as JSON.
    #[arg(long, global = true)]
    json: bool,
    /// Include wall-clock timing in the report (makes output non-reproducible).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check antisymmetry, the Jacobi identity and declared Casimirs.
    Check { definition: PathBuf },
    /// Classify a constraint set as coisotropic, cosymplectic, Poisson or mixed.
    Classify {
        definition: PathBuf,
        #[arg(long)]
        constraints: Option<String>,
    },
    /// Dirac brackets on a cosymplectic constraint set.
    Dirac {
        definition: PathBuf,
        #[arg(long)]
        constraints: Option<String>,
        /// Pairs `f,g` to bracket; repeat the flag for several pairs.
        #[arg(long = "pairs", value_name = "F,G")]
        pairs: Vec<String>,
        /// Write bracket values and projected tensors as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduce by a symmetry and write the reduced definition.
    Reduce {
        definition: PathBuf,
        /// Defaults to `<stem>_reduced.json` next to the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a Hamiltonian flow, optionally constrained by Dirac brackets.
    Flow {
        definition: PathBuf,
        #[arg(long)]
        hamiltonian: Option<String>,
        /// Comma-separated initial point.
        #[arg(long, allow_hyphen_values = true)]
        z0: Option<String>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "T", value_name = "T")]
        t_final: Option<f64>,
        /// rk4 or projected-rk4.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        constraints: Option<String>,
        /// CSV output file; defaults to stdout, with the report on stderr.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn definition_path(c: &Command) -> &Path {
    match c {
        Command::Check { definition }
        | Command::Classify { definition, .. }
        | Command::Dirac { definition, .. }
        | Command::Reduce { definition, .. }
        | Command::Flow { definition, .. } => definition,
    }
}

fn run(cli: &Cli) -> Result<(RunReport, bool), CommandError> {
    let path = definition_path(&cli.command);
    let problem = Problem::load(path)?;
    let seed = cli.seed;
    let mut report_on_stderr = false;
    let report = match &cli.command {
        Command::Check { .. } => commands::check(path, &problem, seed)?,
        Command::Classify { constraints, .. } => commands::classify(path, &problem, constraints.as_deref(), seed)?,
        Command::Dirac {
            constraints,
            pairs,
            out,
            ..
        } => commands::dirac(path, &problem, constraints.as_deref(), pairs, out.as_deref(), seed)?,
        Command::Reduce { out, .. } => commands::reduce(path, &problem, out.as_deref(), seed)?,
        Command::Flow {
            hamiltonian,
            z0,
            dt,
            t_final,
            method,
            constraints,
            out,
            ..
        } => {
            let args = FlowArgs {
                hamiltonian: hamiltonian.clone(),
                z0: z0.clone(),
                dt: *dt,
                t_final: *t_final,
                method: method.clone(),
                constraints: constraints.clone(),
            };
            let (mut report, csv) = commands::flow(path, &problem, &args, seed)?;
            match out {
                Some(p) => {
                    std::fs::write(p, csv).map_err(|source| CommandError::Output {
                        path: p.display().to_string(),
                        source,
                    })?;
                    report.artifacts.push(p.display().to_string());
                }
                None => {
                    let _ = std::io::stdout().write_all(csv.as_bytes());
                    report_on_stderr = true;
                }
            }
            report
        }
    };
    Ok((report, report_on_stderr))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    match run(&cli) {
        Ok((mut report, on_stderr)) => {
            if cli.timing {
                report.timing_ms = Some(start.elapsed().as_millis() as u64);
            }
            let text = if cli.json {
                report.render_json()
            } else {
                report.render_text()
            };
            if on_stderr {
                eprint!("{text}");
            } else {
                print!("{text}");
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
