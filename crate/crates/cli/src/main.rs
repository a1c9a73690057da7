use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use xprojct_cli::benchmark::{cmd_benchmark, DEFAULT_REPEATS};
use xprojct_cli::data::{read_json, write_json};
use xprojct_cli::evaluate::{cmd_compare, cmd_evaluate};
use xprojct_cli::phantom::cmd_phantom;
use xprojct_cli::predict::{predict_case, Predictor, Scenario};
use xprojct_cli::preprocess::cmd_preprocess;
use xprojct_cli::study::{run_study, StudyConfig};
use xprojct_cli::train::cmd_train;
use xprojct_cli::{exit, CliError, Result};
use xprojct_core::phantom::Split;
use xprojct_core::pipeline::PreprocessConfig;

#[derive(Parser)]
#[command(name = "xprojct", version, about = "Body-region classification from X-ray-like CT projections")]
struct Cli {
    /// Worker threads (defaults to all logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Turn a NIfTI volume into a normalized coronal projection preview.
    Preprocess {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// JSON preprocessing configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for the resampled volume, histogram, bounds and raw
        /// projection.
        #[arg(long, value_name = "DIR")]
        dump_intermediates: Option<PathBuf>,
    },
    /// Train a model from a run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue the run recorded in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Predict body regions for every series of a case directory.
    Predict {
        case: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "single")]
        scenario: Scenario,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Per-class metrics of a model on a manifest split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Per-class McNemar tests between two models.
    Compare {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        against: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Time end-to-end prediction over case directories.
    Benchmark {
        cases: Vec<PathBuf>,
        /// One or two checkpoints.
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "single")]
        scenario: Scenario,
        #[arg(long, default_value_t = DEFAULT_REPEATS)]
        repeats: usize,
        /// Directory for prediction documents and the report.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Generate a phantom dataset.
    Phantom {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 600)]
        full: usize,
        #[arg(long, default_value_t = 600)]
        patches: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON phantom specification.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write only the manifest; samples are regenerated on demand.
        #[arg(long)]
        manifest_only: bool,
    },
    /// Run the full phantom study and print the comparison tables.
    Study {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn emit(text: String, json: &impl serde::Serialize, output: Option<&Path>) -> Result<()> {
    print!("{text}");
    if let Some(p) = output {
        write_json(json, p)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Preprocess {
            input,
            output,
            config,
            dump_intermediates,
        } => {
            let cfg: PreprocessConfig = match config {
                Some(p) => read_json(&p)?,
                None => PreprocessConfig::default(),
            };
            cmd_preprocess(&input, &output, &cfg, dump_intermediates.as_deref())?;
        }
        Command::Train { config, seed, resume } => {
            let log = cmd_train(&config, seed, resume)?;
            println!(
                "best epoch {} val loss {:.5}; stopped after {} epochs ({:?})",
                log.log.best_epoch, log.log.best_val_loss, log.log.stop_epoch, log.log.stop_reason
            );
        }
        Command::Predict {
            case,
            checkpoint,
            scenario,
            output,
        } => {
            let predictor = Predictor::load(&checkpoint)?;
            let outcome = predict_case(&predictor, &case, scenario, cli.jobs, &output)?;
            if outcome.failed > 0 {
                let total = outcome.failed + outcome.document.series.len();
                eprintln!("{}", CliError::Partial { failed: outcome.failed, total });
                return Ok(exit::PARTIAL);
            }
        }
        Command::Evaluate {
            checkpoint,
            manifest,
            split,
            output,
        } => {
            let report = cmd_evaluate(&checkpoint, &manifest, split.into())?;
            emit(report.to_text(), &report, output.as_deref())?;
        }
        Command::Compare {
            checkpoint,
            against,
            manifest,
            split,
            output,
        } => {
            let table = cmd_compare(&checkpoint, &against, &manifest, split.into())?;
            emit(table.to_text(), &table, output.as_deref())?;
        }
        Command::Benchmark {
            cases,
            checkpoint,
            scenario,
            repeats,
            output,
        } => {
            let report = cmd_benchmark(&checkpoint, &cases, scenario, repeats, cli.jobs, &output)?;
            emit(report.to_text(), &report, Some(&output.join("benchmark.json")))?;
        }
        Command::Phantom {
            output,
            full,
            patches,
            seed,
            config,
            manifest_only,
        } => {
            let m = cmd_phantom(config.as_deref(), full, patches, seed, &output, manifest_only)?;
            println!("{} samples, seed {}", m.entries.len(), m.seed);
        }
        Command::Study { config, seed, output } => {
            let mut cfg: StudyConfig = match config {
                Some(p) => read_json(&p)?,
                None => StudyConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
                cfg.train.seed = s;
            }
            let report = run_study(&cfg)?;
            emit(report.to_text(), &report, output.as_deref())?;
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("XPROJCT_LOG", "info")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
