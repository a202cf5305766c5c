//! Command-line entry point. A run is configured by an optional TOML or
//! JSON file; flags given on the command line override it.

mod commands;
mod config;

pub use config::{AblationConfig, ConfigError, DataConfig, Family, RunConfig};

use crate::dataset::NUM_CLASSES;
use crate::pipeline::{FinetuneConfig, SweepConfig};
use crate::pretrain::PretrainConfig;
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::de::DeserializeOwned;
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(
    crate::pipeline::PipelineError,
    crate::pretrain::PretrainError,
    crate::dataset::DatasetError,
    crate::diff::DiffError,
    crate::encoder::EncoderError,
    crate::partition::PartitionError,
    std::io::Error,
    csv::Error
);

fn enum_arg<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "polyjepa",
    version,
    about = "Embedding-prediction pretraining and finetuning on stochastic polymer graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic labeled dataset as JSONL.
    GenData {
        /// Output file, relative to --out.
        #[arg(long, default_value = "data.jsonl")]
        output: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Pretrain on the pretraining split and save checkpoints.
    Pretrain {
        #[command(flatten)]
        opts: Options,
    },
    /// Finetune on a labeled subset of the finetuning split and score the test split.
    Finetune {
        /// Pretrained encoder checkpoint; fresh weights when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Number of labeled records (overrides data.label_fraction).
        #[arg(long)]
        labels: Option<usize>,
        #[command(flatten)]
        opts: Options,
    },
    /// Label-fraction sweep, pretrained against fresh weights.
    Sweep {
        /// Pretrained encoder checkpoint; pretrains first when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        opts: Options,
    },
    /// Ablation table over one pretraining setting.
    Ablate {
        #[command(flatten)]
        opts: Options,
    },
    /// Patch pool and context/target selection for one record, as JSON.
    SubgraphDump {
        /// Record id; the first record when absent.
        #[arg(long)]
        id: Option<String>,
        #[command(flatten)]
        opts: Options,
    },
    /// Graph embeddings for every record, optionally with node positional encodings.
    Encode {
        /// Encoder checkpoint; fresh weights when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write node positional encodings as CSV to this path (relative to --out).
        #[arg(long)]
        dump_pe: Option<PathBuf>,
        #[command(flatten)]
        opts: Options,
    },
    /// Score a finetuned model on the test split.
    Eval {
        /// Finetuned model checkpoint (encoder and head).
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
}

/// Flags shared by every command. Only flags given explicitly override the config file.
#[derive(Args, Debug)]
pub struct Options {
    /// TOML or JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output root; run artifacts go under <out>/runs/<config-hash>/<seed>/.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parallel sweep runs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Increase log verbosity.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Dataset JSONL (relative to --out); synthetic data when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = DataConfig::default().synthetic_count)]
    pub synthetic_count: usize,
    /// Monomer library of synthetic data: a or b.
    #[arg(long, default_value = "a", value_parser = enum_arg::<Family>)]
    pub family: Family,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Label column for finetuning.
    #[arg(long, default_value = crate::dataset::REGRESSION_LABEL)]
    pub label: String,
    /// Label budget of `finetune` as a share of the dataset.
    #[arg(long, default_value_t = DataConfig::default().label_fraction)]
    pub label_fraction: f64,

    /// Pretraining objective: jepa or masking.
    #[arg(long, default_value = "jepa", value_parser = enum_arg::<crate::pretrain::Objective>)]
    pub objective: crate::pretrain::Objective,
    /// Target-encoder coupling: ema or joint.
    #[arg(long, default_value = "ema", value_parser = enum_arg::<crate::pretrain::Coupling>)]
    pub mode: crate::pretrain::Coupling,
    /// Subgraphing: random_walk, metis or motif.
    #[arg(long, default_value = "random_walk", value_parser = enum_arg::<crate::partition::SubgraphAlgorithm>)]
    pub algorithm: crate::partition::SubgraphAlgorithm,
    #[arg(long, default_value_t = PretrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = PretrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = PretrainConfig::default().lr)]
    pub lr: f64,
    #[arg(long, default_value_t = PretrainConfig::default().encoder.hidden)]
    pub hidden: usize,
    #[arg(long, default_value_t = PretrainConfig::default().encoder.depth)]
    pub depth: usize,
    #[arg(long, default_value_t = PretrainConfig::default().context_frac)]
    pub context_frac: f64,
    #[arg(long, default_value_t = PretrainConfig::default().target_frac)]
    pub target_frac: f64,
    /// Number of target patches per graph.
    #[arg(long, default_value_t = PretrainConfig::default().targets)]
    pub targets: usize,
    #[arg(long, default_value_t = PretrainConfig::default().pseudolabel_weight)]
    pub pseudolabel_weight: f64,
    #[arg(long, default_value_t = PretrainConfig::default().mask_rate)]
    pub mask_rate: f64,

    /// Finetuning task: regression or classification.
    #[arg(long, default_value = "regression", value_parser = enum_arg::<crate::pipeline::Task>)]
    pub task: crate::pipeline::Task,
    #[arg(long, default_value_t = NUM_CLASSES)]
    pub classes: usize,
    #[arg(long, default_value_t = FinetuneConfig::default().epochs)]
    pub ft_epochs: usize,
    #[arg(long, default_value_t = FinetuneConfig::default().lr)]
    pub ft_lr: f64,
    #[arg(long, default_value_t = FinetuneConfig::default().batch_size)]
    pub ft_batch_size: usize,
    #[arg(long, default_value_t = FinetuneConfig::default().patience)]
    pub patience: usize,
    #[arg(long, default_value_t = FinetuneConfig::default().val_frac)]
    pub val_frac: f64,
    /// Start the regression head from the pretrained pseudolabel head.
    #[arg(long)]
    pub transfer_head: bool,

    /// Sweep label budgets as shares of the dataset.
    #[arg(long, value_delimiter = ',', default_values_t = SweepConfig::default().fractions)]
    pub fractions: Vec<f64>,
    #[arg(long, default_value_t = SweepConfig::default().repeats)]
    pub repeats: usize,
    #[arg(long, default_value_t = SweepConfig::default().folds)]
    pub folds: usize,

    /// Ablated setting: context_frac, target_frac, m or algorithm.
    #[arg(long, default_value = "context_frac", value_parser = enum_arg::<crate::pipeline::AblationKnob>)]
    pub knob: crate::pipeline::AblationKnob,
    /// Ablation values; the standard grid when absent.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = AblationConfig::default().seeds)]
    pub ablation_seeds: Vec<u64>,
    #[arg(long, default_value_t = AblationConfig::default().label_fraction)]
    pub ablation_label_fraction: f64,
}

fn given(m: &ArgMatches, id: &str) -> bool {
    matches!(m.value_source(id), Some(ValueSource::CommandLine))
}

impl Options {
    /// Config file (or defaults) with explicit flags applied, validated.
    pub fn resolve(&self, m: &ArgMatches) -> Result<RunConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($id:literal => $target:expr, $value:expr;)*) => {$(
                if given(m, $id) {
                    $target = $value;
                }
            )*};
        }
        set! {
            "seed" => cfg.seed, self.seed;
            "data" => cfg.data.path, self.data.clone();
            "synthetic_count" => cfg.data.synthetic_count, self.synthetic_count;
            "family" => cfg.data.family, self.family;
            "data_seed" => cfg.data.seed, self.data_seed;
            "label" => cfg.data.label, self.label.clone();
            "label_fraction" => cfg.data.label_fraction, self.label_fraction;
            "objective" => cfg.pretrain.objective, self.objective;
            "mode" => cfg.pretrain.mode, self.mode;
            "algorithm" => cfg.pretrain.algorithm, self.algorithm;
            "epochs" => cfg.pretrain.epochs, self.epochs;
            "batch_size" => cfg.pretrain.batch_size, self.batch_size;
            "lr" => cfg.pretrain.lr, self.lr;
            "hidden" => cfg.pretrain.encoder.hidden, self.hidden;
            "depth" => cfg.pretrain.encoder.depth, self.depth;
            "context_frac" => cfg.pretrain.context_frac, self.context_frac;
            "target_frac" => cfg.pretrain.target_frac, self.target_frac;
            "targets" => cfg.pretrain.targets, self.targets;
            "pseudolabel_weight" => cfg.pretrain.pseudolabel_weight, self.pseudolabel_weight;
            "mask_rate" => cfg.pretrain.mask_rate, self.mask_rate;
            "task" => cfg.finetune.task, self.task;
            "classes" => cfg.finetune.classes, self.classes;
            "ft_epochs" => cfg.finetune.epochs, self.ft_epochs;
            "ft_lr" => cfg.finetune.lr, self.ft_lr;
            "ft_batch_size" => cfg.finetune.batch_size, self.ft_batch_size;
            "patience" => cfg.finetune.patience, self.patience;
            "val_frac" => cfg.finetune.val_frac, self.val_frac;
            "transfer_head" => cfg.finetune.transfer_head, self.transfer_head;
            "fractions" => cfg.sweep.fractions, self.fractions.clone();
            "repeats" => cfg.sweep.repeats, self.repeats;
            "folds" => cfg.sweep.folds, self.folds;
            "knob" => cfg.ablation.knob, self.knob;
            "values" => cfg.ablation.values, self.values.clone();
            "ablation_seeds" => cfg.ablation.seeds, self.ablation_seeds.clone();
            "ablation_label_fraction" => cfg.ablation.label_fraction, self.ablation_label_fraction;
        }
        cfg.pretrain.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub(crate) fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parse `args` (including the program name), run the command, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_CONFIG;
        }
    };
    let sub = matches.subcommand().expect("a subcommand is required").1;
    match commands::dispatch(&cli.command, sub) {
        Ok(()) => EXIT_OK,
        Err(CliError::Config(e)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}
