use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cosmargin::losses::LossVariant;
use cosmargin_cli::{
    cmd_eval, cmd_export_features, cmd_gradcheck, cmd_margins_trace, cmd_train, CliError, RunConfig, Split,
};

#[derive(Parser)]
#[command(name = "cosmargin", version, about = "Cosine-margin metric learning: train, evaluate, check gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file of `section.key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set loss.lambda=0.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        RunConfig::load(self.config.as_deref(), &self.overrides, self.seed)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write checkpoint.bin, train_log.csv and effective.cfg.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Compare analytic loss gradients with central differences.
    Gradcheck {
        /// Variant to check; all of them when omitted.
        #[arg(long)]
        variant: Option<LossVariant>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Perturb the analytic gradient by 1% (harness self-test).
        #[arg(long)]
        corrupt: bool,
    },
    /// Evaluate a checkpoint on the test split; writes report.txt and ROC/CMC CSVs.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "eval")]
        out: PathBuf,
    },
    /// Write the embeddings of a split as CSV (or binary for a .bin path).
    ExportFeatures {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, default_value = "features.csv")]
        out: PathBuf,
    },
    /// Convert the margin columns of a training log to iteration,class,margin rows.
    MarginsTrace {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "margins.csv")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { cfg, out } => {
            let cfg = cfg.load()?;
            let run = cmd_train(&cfg, &out)?;
            if let Some(last) = run.outcome.log.last() {
                println!(
                    "{}: {} iterations, final loss {:.6}, violations {}, hard {}",
                    cfg.loss.variant,
                    run.outcome.log.len(),
                    last.loss,
                    last.violation_count,
                    last.hard_count
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Gradcheck {
            variant,
            seed,
            trials,
            corrupt,
        } => {
            let variants = variant.map_or(LossVariant::ALL.to_vec(), |v| vec![v]);
            let outcome = cmd_gradcheck(&variants, seed, trials, corrupt)?;
            for line in outcome.lines() {
                println!("{line}");
            }
            if !outcome.passed() {
                return Err(CliError::Numerical("gradient check failed".into()));
            }
        }
        Command::Eval {
            cfg,
            checkpoint,
            out,
        } => {
            let cfg = cfg.load()?;
            let report = cmd_eval(&cfg, &checkpoint, &out)?;
            print!("{}", report.to_text());
        }
        Command::ExportFeatures {
            cfg,
            checkpoint,
            split,
            out,
        } => {
            let cfg = cfg.load()?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let table = cmd_export_features(&cfg, &checkpoint, split, &out)?;
            println!("wrote {} rows to {}", table.features.rows(), out.display());
        }
        Command::MarginsTrace { log, out } => {
            cmd_margins_trace(&log, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
