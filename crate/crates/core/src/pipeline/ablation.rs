use super::finetune::{finetune, FinetuneConfig};
use super::metrics::mean_std;
use super::splits::SplitManifest;
use super::sweep::{sample_subset, MIN_SUBSET};
use super::{LabeledData, PipelineError, Task};
use crate::partition::SubgraphAlgorithm;
use crate::pretrain::{pretrain, PretrainConfig};
use crate::seed::derive_seed;
use serde::{Deserialize, Serialize};
use std::fmt::Write;
use std::str::FromStr;

/// Pretraining setting varied by an ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationKnob {
    #[serde(rename = "context_frac")]
    ContextFrac,
    #[serde(rename = "target_frac")]
    TargetFrac,
    #[serde(rename = "m")]
    Targets,
    #[serde(rename = "algorithm")]
    Algorithm,
}

impl AblationKnob {
    pub const ALL: [AblationKnob; 4] = [Self::ContextFrac, Self::TargetFrac, Self::Targets, Self::Algorithm];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ContextFrac => "context_frac",
            Self::TargetFrac => "target_frac",
            Self::Targets => "m",
            Self::Algorithm => "algorithm",
        }
    }

    /// First column heading of the table.
    pub fn header(self) -> &'static str {
        match self {
            Self::ContextFrac => "Context size",
            Self::TargetFrac => "Target size",
            Self::Targets => "number of targets",
            Self::Algorithm => "Subgraphing",
        }
    }

    pub fn default_values(self) -> Vec<AblationValue> {
        match self {
            Self::ContextFrac => [0.2, 0.4, 0.6, 0.8, 0.95]
                .into_iter()
                .map(AblationValue::Frac)
                .collect(),
            Self::TargetFrac => [0.05, 0.10, 0.15, 0.20].into_iter().map(AblationValue::Frac).collect(),
            Self::Targets => (1..=5).map(AblationValue::Count).collect(),
            Self::Algorithm => [
                SubgraphAlgorithm::Motif,
                SubgraphAlgorithm::Metis,
                SubgraphAlgorithm::RandomWalk,
            ]
            .into_iter()
            .map(AblationValue::Algorithm)
            .collect(),
        }
    }

    pub fn parse_value(self, s: &str) -> Result<AblationValue, String> {
        let s = s.trim();
        match self {
            Self::ContextFrac | Self::TargetFrac => s
                .parse::<f64>()
                .map(AblationValue::Frac)
                .map_err(|e| format!("{s:?}: {e}")),
            Self::Targets => s
                .parse::<usize>()
                .map(AblationValue::Count)
                .map_err(|e| format!("{s:?}: {e}")),
            Self::Algorithm => s.parse::<SubgraphAlgorithm>().map(AblationValue::Algorithm),
        }
    }

    /// Write `value` into the matching pretraining field.
    pub fn apply(self, cfg: &mut PretrainConfig, value: AblationValue) -> Result<(), String> {
        match (self, value) {
            (Self::ContextFrac, AblationValue::Frac(v)) => cfg.context_frac = v,
            (Self::TargetFrac, AblationValue::Frac(v)) => cfg.target_frac = v,
            (Self::Targets, AblationValue::Count(m)) => cfg.targets = m,
            (Self::Algorithm, AblationValue::Algorithm(a)) => cfg.algorithm = a,
            (knob, v) => return Err(format!("{v:?} is not a value for {}", knob.as_str())),
        }
        Ok(())
    }
}

impl FromStr for AblationKnob {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "context_frac" => Ok(Self::ContextFrac),
            "target_frac" => Ok(Self::TargetFrac),
            "m" | "targets" => Ok(Self::Targets),
            "algorithm" => Ok(Self::Algorithm),
            other => Err(format!("unknown ablation knob {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AblationValue {
    Frac(f64),
    Count(usize),
    Algorithm(SubgraphAlgorithm),
}

impl AblationValue {
    pub fn label(self) -> String {
        match self {
            Self::Frac(v) => format!("{}%", (v * 100.0).round() as i64),
            Self::Count(m) => m.to_string(),
            Self::Algorithm(SubgraphAlgorithm::Motif) => "Motif-based".into(),
            Self::Algorithm(SubgraphAlgorithm::Metis) => "Metis".into(),
            Self::Algorithm(SubgraphAlgorithm::RandomWalk) => "Random Walk (RW)".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSpec {
    pub knob: AblationKnob,
    pub values: Vec<AblationValue>,
    /// Shared by every row, including the baseline.
    pub seeds: Vec<u64>,
    /// Label budget as a share of the dataset; raised to the minimum subset size.
    pub label_fraction: f64,
}

impl AblationSpec {
    pub fn new(knob: AblationKnob) -> Self {
        Self {
            knob,
            values: knob.default_values(),
            seeds: vec![0, 1, 2],
            label_fraction: 0.004,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub baseline: bool,
    pub runs: usize,
    pub r2_mean: f64,
    pub r2_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub knob: AblationKnob,
    pub labels_used: usize,
    pub rows: Vec<AblationRow>,
}

fn cell(mean: f64, std: f64) -> String {
    format!("{mean:.2} ± {std:.2}")
}

impl AblationTable {
    /// Index of the pretrained row with the highest mean R² (lower spread breaks ties).
    pub fn best_row(&self) -> Option<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.baseline)
            .max_by(|(_, a), (_, b)| a.r2_mean.total_cmp(&b.r2_mean).then(b.r2_std.total_cmp(&a.r2_std)))
            .map(|(i, _)| i)
    }

    /// Markdown table: knob value, R² and RMSE as mean ± std; the
    /// baseline row in italics and the best row in bold.
    pub fn to_markdown(&self) -> String {
        let best = self.best_row();
        let mut out = String::new();
        writeln!(out, "| **{}** | **R² ↑** | **RMSE ↓** |", self.knob.header()).unwrap();
        out.push_str("| --- | --- | --- |\n");
        for (i, r) in self.rows.iter().enumerate() {
            let cells = [
                r.label.clone(),
                cell(r.r2_mean, r.r2_std),
                cell(r.rmse_mean, r.rmse_std),
            ];
            let mark = if r.baseline {
                "*"
            } else if Some(i) == best {
                "**"
            } else {
                ""
            };
            let line: Vec<String> = cells.iter().map(|c| format!("{mark}{c}{mark}")).collect();
            writeln!(out, "| {} |", line.join(" | ")).unwrap();
        }
        out
    }
}

fn row(label: String, baseline: bool, r2s: &[f64], rmses: &[f64]) -> AblationRow {
    let (r2_mean, r2_std) = mean_std(r2s);
    let (rmse_mean, rmse_std) = mean_std(rmses);
    AblationRow {
        label,
        baseline,
        runs: r2s.len(),
        r2_mean,
        r2_std,
        rmse_mean,
        rmse_std,
    }
}

/// Pretrain once per (value, seed) on the pretraining split, finetune on a
/// scarce labeled subset of the finetuning split, and tabulate test R² and
/// RMSE against a no-pretraining baseline on the same subsets and seeds.
pub fn ablation_run(
    data: &LabeledData,
    manifest: &SplitManifest,
    base: &PretrainConfig,
    ft: &FinetuneConfig,
    spec: &AblationSpec,
) -> Result<AblationTable, PipelineError> {
    if ft.task != Task::Regression {
        return Err(PipelineError::InvalidConfig(
            "task: ablation tables report regression metrics".into(),
        ));
    }
    if spec.seeds.is_empty() {
        return Err(PipelineError::InvalidConfig(
            "seeds: at least one seed is required".into(),
        ));
    }
    let total = manifest.pretrain.len() + manifest.finetune.len() + manifest.test.len();
    let count = ((spec.label_fraction * total as f64).round() as usize).max(MIN_SUBSET);
    let pool = data.positions(&manifest.finetune)?;
    let test_pos = data.positions(&manifest.test)?;
    let test = data.examples(&test_pos, ft.task)?;
    let graphs = data.graphs_for(&manifest.pretrain)?;
    let mut configs = Vec::with_capacity(spec.values.len());
    for &v in &spec.values {
        let mut cfg = base.clone();
        spec.knob.apply(&mut cfg, v).map_err(PipelineError::InvalidConfig)?;
        cfg.validate()
            .map_err(|(k, m)| PipelineError::InvalidConfig(format!("{k}: {m}")))?;
        configs.push(cfg);
    }

    let mut subsets = Vec::with_capacity(spec.seeds.len());
    for &seed in &spec.seeds {
        let idx = sample_subset(data, &pool, count, ft.task, ft.classes, derive_seed(&[seed, 0x4142]))?;
        subsets.push(data.examples(&idx, ft.task)?);
    }

    let mut rows = Vec::with_capacity(spec.values.len() + 1);
    let (mut r2s, mut rmses) = (Vec::new(), Vec::new());
    for (&seed, subset) in spec.seeds.iter().zip(&subsets) {
        let r = finetune(None, &base.encoder, subset, &test, ft, seed)?.report;
        r2s.push(r.r2.unwrap_or(f64::NAN));
        rmses.push(r.rmse.unwrap_or(f64::NAN));
    }
    rows.push(row("No pretraining".into(), true, &r2s, &rmses));

    for (v, cfg) in spec.values.iter().zip(&configs) {
        let (mut r2s, mut rmses) = (Vec::new(), Vec::new());
        for (&seed, subset) in spec.seeds.iter().zip(&subsets) {
            let mut cfg = cfg.clone();
            cfg.seed = seed;
            let pre = pretrain(&graphs, &cfg)?;
            let r = finetune(Some(&pre.export), &cfg.encoder, subset, &test, ft, seed)?.report;
            r2s.push(r.r2.unwrap_or(f64::NAN));
            rmses.push(r.rmse.unwrap_or(f64::NAN));
        }
        log::info!("{} = {}: r2 {:?}", spec.knob.as_str(), v.label(), r2s);
        rows.push(row(v.label(), false, &r2s, &rmses));
    }
    Ok(AblationTable {
        knob: spec.knob,
        labels_used: count,
        rows,
    })
}
