use clap::{Parser, Subcommand};
use realloc_cli::commands;
use realloc_cli::config::ValidateMode;
use realloc_cli::RunError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Contiguous memory reallocation lab: exact simulation, adversarial and
/// stochastic workloads, cost accounting, and Monte-Carlo lemma checks.
#[derive(Parser)]
#[command(name = "reallocsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_validate(s: &str) -> Result<ValidateMode, String> {
    match s {
        "every" => Ok(ValidateMode::Every),
        "final" => Ok(ValidateMode::Final),
        other => Err(format!("expected 'every' or 'final', got '{other}'")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_parser = parse_validate)]
        validate: Option<ValidateMode>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Quick fuzz cell without a config file.
    Fuzz {
        #[arg(long)]
        allocator: String,
        #[arg(long)]
        epsilon_log4: u32,
        #[arg(long, default_value_t = 10_000)]
        steps: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        resolution_log2: u32,
        #[arg(long, value_parser = parse_validate, default_value = "every")]
        validate: ValidateMode,
        /// Optional trace output path.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// ε sweep with log-log slope fits, CSV and SVG outputs.
    Bench {
        /// Comma-separated allocator names.
        #[arg(long, value_delimiter = ',')]
        allocators: Vec<String>,
        /// Comma-separated k values (ε = 4^-k).
        #[arg(long, value_delimiter = ',')]
        eps: Vec<u32>,
        #[arg(long, default_value_t = 20_000)]
        steps: u64,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// The adversarial two-size sequence plus potential-function checks.
    Lowerbound {
        #[arg(long, value_delimiter = ',', default_values_t = [4u32, 5, 6])]
        eps: Vec<u32>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Monte-Carlo checks of the probabilistic lemmas.
    VerifyLemmas {
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Replay a JSONL trace through the core mutation path.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Run { config, out_dir, validate, seed } => {
            commands::cmd_run(&config, out_dir.as_deref(), validate, seed)
        }
        Command::Fuzz { allocator, epsilon_log4, steps, seed, resolution_log2, validate, trace } => {
            if allocator == "flex" {
                let cfg = realloc_core::tick::TickConfig::pow4(resolution_log2, epsilon_log4)
                    .map_err(|e| RunError::Config(e.to_string()))?;
                let report = realloc_core::flex::run_flex_harness(cfg, steps, seed, None)
                    .map_err(RunError::Alloc)?;
                println!(
                    "flex externals={} mean_ext_cost={:.3} max_B/M={:.2}",
                    report.external_updates, report.mean_external_cost, report.max_b_over_m
                );
                return Ok(());
            }
            let req = commands::CellRequest {
                allocator,
                epsilon_log4,
                resolution_log2,
                steps,
                seed,
                params: realloc_cli::AllocParams::default(),
                spec: None,
                validate,
            };
            let summary = commands::run_one(&req, trace.as_deref())?;
            commands::print_summary(&summary);
            Ok(())
        }
        Command::Bench { allocators, eps, steps, seeds, out_dir } => {
            commands::cmd_bench(&allocators, &eps, steps, &seeds, &out_dir)
        }
        Command::Lowerbound { eps, seed } => commands::cmd_lowerbound(&eps, seed),
        Command::VerifyLemmas { trials, seed, out_dir } => {
            let pass = commands::cmd_verify_lemmas(trials, seed, out_dir.as_deref())?;
            if !pass {
                return Err(RunError::Validity { step: 0, message: "lemma bound exceeded".into() });
            }
            Ok(())
        }
        Command::Replay { trace } => commands::cmd_replay(&trace),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(2),
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(e @ (RunError::Validity { .. } | RunError::Alloc(_))) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
