use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lmdp_npg::TrainingScheme;
use lmdp_npg_cli::{analyze_kappa, cmd_plot, cmd_run, oracle_report, KappaArgs, KappaMode, RunArgs, SamplerChoice};

#[derive(Parser)]
#[command(
    name = "lmdp-npg",
    version,
    about = "Curriculum NPG experiments on online combinatorial problems"
)]
struct Cli {
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true, env = "LMDP_NPG_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured schemes and write logs, checkpoints and a plot.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restricts the run to these schemes (repeatable).
        #[arg(long = "scheme")]
        schemes: Vec<TrainingScheme>,
    },
    /// Render log CSVs as a three-panel SVG.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Diagnostics on saved checkpoints.
    Analyze {
        #[command(subcommand)]
        what: Analyze,
    },
    /// Exact optimum and closed-form condition numbers of an SP instance.
    Oracle {
        /// Environment config, experiment config, or `{"p_series": [...]}`.
        #[arg(long)]
        env: PathBuf,
        /// Curriculum sampler threshold for the closed-form table.
        #[arg(long)]
        q: Option<f64>,
    },
}

#[derive(Subcommand)]
enum Analyze {
    /// Relative condition number of a checkpoint.
    Kappa {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Environment config; defaults to the one stored in the checkpoint.
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "curl")]
        sampler: SamplerArg,
        #[arg(long, default_value_t = 0.2)]
        q: f64,
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        #[arg(long, default_value_t = 2000)]
        batches: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Closed,
    Empirical,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    OnPolicy,
    Naive,
    Curl,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(w) = cli.workers {
        lmdp_npg::configure_workers(w)?;
    }
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            schemes,
        } => cmd_run(&RunArgs {
            config,
            seed,
            out,
            schemes,
        }),
        Command::Plot { csv, out } => cmd_plot(&csv, &out),
        Command::Analyze {
            what:
                Analyze::Kappa {
                    checkpoint,
                    env,
                    mode,
                    sampler,
                    q,
                    ridge,
                    batches,
                    seed,
                },
        } => {
            let report = analyze_kappa(&KappaArgs {
                checkpoint,
                env,
                mode: match mode {
                    ModeArg::Closed => KappaMode::Closed,
                    ModeArg::Empirical => KappaMode::Empirical,
                },
                sampler: match sampler {
                    SamplerArg::OnPolicy => SamplerChoice::OnPolicy,
                    SamplerArg::Naive => SamplerChoice::Naive,
                    SamplerArg::Curl => SamplerChoice::Curl,
                },
                q,
                ridge,
                batches,
                seed,
            })?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Oracle { env, q } => {
            println!("{}", serde_json::to_string_pretty(&oracle_report(&env, q)?)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
