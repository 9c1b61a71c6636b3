mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mediaprofile::zeroshot::ZeroShotMode;
use mediaprofile::{
    AbstainPolicy, AblationMode, CollapsePolicy, Error, MultiClass, Suite, TaskKind,
};
use serde::Serialize;

use config::{BackendKind, Overrides};

#[derive(Parser)]
#[command(name = "mediaprofile", version, about = "Profile news outlets for factuality and political bias")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice (split, folds, synthetic replies).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    /// Directory of canned replies for `--backend mock`.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Response cache (JSONL).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<String>,
    /// Only accept replies that are a bare JSON object.
    #[arg(long, global = true)]
    strict: bool,
    /// Where to write the run manifest.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a labels CSV, join metadata and optionally write a split.
    Ingest(IngestArgs),
    /// Run the prompt suite for every outlet and write a corpus.
    Elicit(ElicitArgs),
    /// Fit TF-IDF and the SVM on the train split; score the test split.
    Train(TrainArgs),
    /// Score a predictions file or render saved reports.
    Evaluate(EvaluateArgs),
    /// Ask the model for the label directly.
    Zeroshot(ZeroshotArgs),
    /// Train once per feature ablation on a shared split.
    Ablate(AblateArgs),
    /// Accuracy by popularity and by region.
    Analyze(AnalyzeArgs),
    /// Write feature documents with split tags as JSONL.
    ExportFeatures(ExportArgs),
}

#[derive(Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub ranks: Option<PathBuf>,
    #[arg(long)]
    pub regions: Option<PathBuf>,
    #[arg(long)]
    pub collapse: Option<CollapsePolicy>,
    #[arg(long)]
    pub out: PathBuf,
    /// Task to stratify the split on; needs `--split-out`.
    #[arg(long, requires = "split_out")]
    pub task: Option<TaskKind>,
    #[arg(long, requires = "task")]
    pub split_out: Option<PathBuf>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Args, Serialize)]
pub struct ElicitArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value = "both")]
    pub suite: Suite,
    #[arg(long)]
    pub out: PathBuf,
    /// Only the first N outlets.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Args, Serialize, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub task: Option<TaskKind>,
    /// Prompt families whose answers become features.
    #[arg(long)]
    pub suite: Option<Suite>,
    /// Existing split manifest; otherwise a seeded stratified split.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub c_values: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub gamma_values: Option<Vec<f64>>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub strategy: Option<MultiClass>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub ablation: Option<AblationMode>,
}

#[derive(Args, Serialize)]
pub struct AblateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long, requires_all = ["labels", "task"])]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<TaskKind>,
    /// Restrict scoring to this manifest's test domains.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub abstain: Option<AbstainPolicy>,
    /// Row name in the table.
    #[arg(long)]
    pub system: Option<String>,
    /// Saved report(s) to render alongside.
    #[arg(long = "report")]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct ZeroshotArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub task: Option<TaskKind>,
    #[arg(long)]
    pub mode: ZeroShotMode,
    /// `<dir>/<domain>/<n>.txt` article files.
    #[arg(long)]
    pub articles: Option<PathBuf>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Popularity,
    Region,
    All,
}

#[derive(Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub task: Option<TaskKind>,
    #[arg(long)]
    pub ranks: Option<PathBuf>,
    #[arg(long)]
    pub regions: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    pub dimension: Dimension,
    /// Width of a popularity bin in log10(rank) units.
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub task: Option<TaskKind>,
    #[arg(long)]
    pub ablation: Option<AblationMode>,
    #[arg(long)]
    pub suite: Option<Suite>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failures that are not library errors but still need a specific status.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Config(_) => 2,
                CliError::Io(_) => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_)
                | Error::InvalidParameter(_)
                | Error::UnrecognizedLabel { .. }
                | Error::InvalidDomain(_)
                | Error::UnknownTemplate(_)
                | Error::UnknownTopic(_)
                | Error::UnknownPlaceholder { .. }
                | Error::TemplateResource(_) => 2,
                Error::Io { .. }
                | Error::MissingColumn { .. }
                | Error::EmptyFile(_)
                | Error::Csv(_)
                | Error::Json(_) => 3,
                Error::Network { .. } => 4,
                Error::ClassTooSmall { .. } | Error::EmptyCorpus | Error::SingleClass => 5,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level)),
        )
        .with_writer(std::io::stderr)
        .init();

    let flags = Overrides {
        seed: cli.global.seed,
        backend: cli.global.backend,
        fixtures: cli.global.fixtures.clone(),
        cache: cli.global.cache.clone(),
        model: cli.global.model.clone(),
        strict: cli.global.strict,
    };
    let result = config::load(cli.global.config.as_deref(), &flags)
        .map_err(anyhow::Error::from)
        .and_then(|settings| {
            let ctx = commands::Context {
                settings,
                manifest: cli.global.manifest.clone(),
                config_path: cli.global.config.clone(),
            };
            match &cli.command {
                Command::Ingest(a) => commands::ingest(&ctx, a),
                Command::Elicit(a) => commands::elicit(&ctx, a),
                Command::Train(a) => commands::train(&ctx, a),
                Command::Evaluate(a) => commands::evaluate(&ctx, a),
                Command::Zeroshot(a) => commands::zeroshot(&ctx, a),
                Command::Ablate(a) => commands::ablate(&ctx, a),
                Command::Analyze(a) => commands::analyze(&ctx, a),
                Command::ExportFeatures(a) => commands::export_features(&ctx, a),
            }
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        let code = |e: Error| exit_code(&anyhow::Error::from(e));
        assert_eq!(code(Error::Config("x".into())), 2);
        assert_eq!(code(Error::EmptyFile("f".into())), 3);
        assert_eq!(code(Error::Network { attempts: 3, message: "503".into() }), 4);
        assert_eq!(code(Error::EmptyCorpus), 5);
        assert_eq!(code(Error::ClassTooSmall { label: "low".into(), count: 1, needed: 5 }), 5);
        let wrapped = anyhow::Error::from(Error::EmptyCorpus).context("training");
        assert_eq!(exit_code(&wrapped), 5);
        assert_eq!(exit_code(&anyhow::Error::from(CliError::Io("gone".into()))), 3);
    }
}
