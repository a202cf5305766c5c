//! Splits, supervised finetuning, metrics, label-fraction sweeps and
//! ablation tables.

mod ablation;
mod finetune;
mod metrics;
mod report;
mod splits;
mod sweep;

pub use ablation::{ablation_run, AblationKnob, AblationRow, AblationSpec, AblationTable, AblationValue};
pub use finetune::{finetune, finetune_with_validation, predict, score, FinetuneConfig, FinetuneOutcome, MetricReport};
pub use metrics::{auprc_macro, average_precision, mean_std, r2, rmse};
pub use report::{read_csv_rows, run_dir, write_csv_rows, write_json};
pub use splits::{dataset_hash, make_splits, SplitManifest, MIN_DATASET, PRETRAIN_SHARE, TEST_SHARE};
pub use sweep::{
    label_fraction_sweep, sample_subset, summarize, Arm, SummaryRow, SweepConfig, SweepRow, DEFAULT_FRACTIONS,
    MIN_SUBSET,
};

use crate::dataset::{DatasetError, Record};
use crate::diff::DiffError;
use crate::encoder::{EncoderError, PreparedGraph};
use crate::pretrain::PretrainError;
use crate::seed::hash_str;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("dataset has {0} records; at least {MIN_DATASET} are needed")]
    DatasetTooSmall(usize),
    #[error("length mismatch: {0} truths vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("at least 2 points are needed, got {0}")]
    TooFewPoints(usize),
    #[error("truth values have zero variance")]
    DegenerateVariance,
    #[error("record {0} has no label")]
    LabelMissing(String),
    #[error("subset has no example of class {0}")]
    ClassAbsent(usize),
    #[error("fraction {fraction} gives {count} records; at least {MIN_SUBSET} are needed")]
    FractionTooSmall { fraction: f64, count: usize },
    #[error("unknown record id {0}")]
    UnknownId(String),
    #[error("test record {0} reached a training arm")]
    TestLeak(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o failure on {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Pretrain(#[from] PretrainError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Regression,
    Classification,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Value(f64),
    Class(usize),
}

impl Target {
    pub fn value(self) -> f64 {
        match self {
            Target::Value(v) => v,
            Target::Class(c) => c as f64,
        }
    }

    pub fn class(self) -> usize {
        match self {
            Target::Class(c) => c,
            Target::Value(v) => v as usize,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub id: &'a str,
    pub graph: &'a PreparedGraph,
    pub target: Target,
}

/// Every record of a dataset with its prepared graph and one label column.
#[derive(Debug, Clone)]
pub struct LabeledData {
    pub ids: Vec<String>,
    pub graphs: Vec<PreparedGraph>,
    pub labels: Vec<Option<f64>>,
    index: HashMap<String, usize>,
}

impl LabeledData {
    pub fn from_records(records: &[Record], label: &str, pe_steps: usize) -> Result<Self, PipelineError> {
        let mut ids = Vec::with_capacity(records.len());
        let mut graphs = Vec::with_capacity(records.len());
        let mut labels = Vec::with_capacity(records.len());
        for r in records {
            let g = r.build_graph()?;
            graphs.push(PreparedGraph::new(hash_str(&r.id), g, pe_steps));
            ids.push(r.id.clone());
            labels.push(r.label(label));
        }
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Ok(Self {
            ids,
            graphs,
            labels,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: &str) -> Result<usize, PipelineError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| PipelineError::UnknownId(id.to_string()))
    }

    pub fn positions(&self, ids: &[String]) -> Result<Vec<usize>, PipelineError> {
        ids.iter().map(|id| self.position(id)).collect()
    }

    /// Graphs for `ids`, labels ignored.
    pub fn graphs_for(&self, ids: &[String]) -> Result<Vec<PreparedGraph>, PipelineError> {
        Ok(self
            .positions(ids)?
            .into_iter()
            .map(|i| self.graphs[i].clone())
            .collect())
    }

    pub fn example(&self, pos: usize, task: Task) -> Result<Example<'_>, PipelineError> {
        let v = self.labels[pos].ok_or_else(|| PipelineError::LabelMissing(self.ids[pos].clone()))?;
        let target = match task {
            Task::Regression => Target::Value(v),
            Task::Classification => {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(PipelineError::InvalidConfig(format!(
                        "record {}: class label {v} is not a non-negative integer",
                        self.ids[pos]
                    )));
                }
                Target::Class(v as usize)
            }
        };
        Ok(Example {
            id: &self.ids[pos],
            graph: &self.graphs[pos],
            target,
        })
    }

    pub fn examples(&self, positions: &[usize], task: Task) -> Result<Vec<Example<'_>>, PipelineError> {
        positions.iter().map(|&p| self.example(p, task)).collect()
    }
}
