use std::path::PathBuf;
use std::process::ExitCode;

use chartattrib_cli::config::{BackendSpec, Overrides, PipelineConfig};
use chartattrib_cli::evaluate::cmd_evaluate;
use chartattrib_cli::run::{cmd_replay, cmd_run, Command as RunCommand, RunSummary};
use chartattrib_cli::synth::synthesize;
use chartattrib_cli::{CliError, EXIT_CONFIG, EXIT_OK};
use chartattrib_core::eval::{render_table, CoverageMode, EvalConfig};
use chartattrib_core::localization::MappingMode;
use chartattrib_core::model::ChartType;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "chartattrib", version, about = "Cite the chart regions that support an answer")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full attribution pipeline over samples.
    Attribute {
        #[arg(required = true)]
        samples: Vec<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Ask the backend for boxes directly, without table or retrieval stages.
    Baseline {
        #[arg(required = true)]
        samples: Vec<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Re-run a cached run without any live calls.
    Replay {
        #[arg(required = true)]
        samples: Vec<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// Replay even if the configuration differs from the recorded one.
        #[arg(long)]
        allow_config_change: bool,
    },
    /// Render tables as charts with ground truth and QA pairs.
    Synthesize {
        tables: PathBuf,
        #[arg(long, value_delimiter = ',', default_values = ["bar", "pie", "line"])]
        types: Vec<ChartType>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score run directories against ground truth.
    Evaluate {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        groundtruth: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = chartattrib_core::eval::DEFAULT_IOU_THRESHOLD)]
        iou_threshold: f64,
        #[arg(long, value_enum, default_value_t = Coverage::Recall)]
        line_coverage: Coverage,
        /// Row label per run, in order.
        #[arg(long)]
        label: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Coverage {
    Recall,
    PrecisionLike,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mapping {
    Auto,
    Oracle,
    Model,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `mock:<script.json>` or `live`.
    #[arg(long)]
    backend: Option<BackendSpec>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    max_repairs: Option<usize>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long, value_enum)]
    mapping: Option<Mapping>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(self) -> Result<PipelineConfig, CliError> {
        let overrides = Overrides {
            backend: self.backend,
            threshold: self.threshold,
            top_k: self.top_k,
            max_iterations: self.max_iterations,
            max_repairs: self.max_repairs,
            parallelism: self.parallelism,
            mapping: self.mapping.map(|m| match m {
                Mapping::Auto => MappingMode::Auto,
                Mapping::Oracle => MappingMode::Oracle,
                Mapping::Model => MappingMode::Model,
            }),
            cache: self.cache,
            out: self.out,
        };
        PipelineConfig::load(self.config.as_deref(), overrides)
    }
}

fn report(summary: RunSummary) -> i32 {
    println!("run directory: {}", summary.run_dir.display());
    println!("{} succeeded, {} failed", summary.succeeded.len(), summary.failures.len());
    for f in &summary.failures {
        eprintln!("failed: {}: {}", f.sample_id, f.error);
    }
    summary.exit_code()
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Cmd::Attribute { samples, run } => Ok(report(cmd_run(RunCommand::Attribute, &samples, &run.load()?)?)),
        Cmd::Baseline { samples, run } => Ok(report(cmd_run(RunCommand::Baseline, &samples, &run.load()?)?)),
        Cmd::Replay { samples, run, allow_config_change } => {
            Ok(report(cmd_replay(&samples, &run.load()?, allow_config_change)?))
        }
        Cmd::Synthesize { tables, types, seed, out } => {
            let s = synthesize(&tables, &types, seed, &out)?;
            println!("{} samples written to {}", s.written.len(), out.display());
            for k in &s.skipped {
                println!("skipped {} as {}: {}", k.table, k.chart_type, k.reason);
            }
            Ok(EXIT_OK)
        }
        Cmd::Evaluate { runs, groundtruth, out, iou_threshold, line_coverage, label } => {
            let config = EvalConfig {
                iou_match_threshold: iou_threshold,
                line_coverage_mode: match line_coverage {
                    Coverage::Recall => CoverageMode::Recall,
                    Coverage::PrecisionLike => CoverageMode::PrecisionLike,
                },
            };
            let reports = cmd_evaluate(&runs, &groundtruth, &out, &config, &label)?;
            print!("{}", render_table(&reports));
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    };
    ExitCode::from(code as u8)
}
