//! Self-supervised pretraining: the embedding-prediction objective with an
//! optional molecular-weight pseudolabel, and a node-masking objective kept
//! for comparison.

mod collapse;
mod jepa;
mod masking;
mod train;

pub use collapse::{embedding_std, CollapseGate, COLLAPSE_PATIENCE, COLLAPSE_THRESHOLD};
pub use jepa::{
    compute_gradients, jepa_forward, jepa_step, mlp_predict, prepare_item, pseudolabel_loss, select_items, JepaForward,
    JepaItem, JepaModel, JepaOptimizer, MwScaler, PredictFn, StepStats, CONTEXT_PREFIX, HEAD_PREFIX, TARGET_PREFIX,
};
pub use masking::{masked_nodes, masking_forward, masking_step, MaskingModel, MASK_CLASSES};
pub use train::{pretrain, write_log, EpochLog, PretrainOutcome};

use crate::diff::DiffError;
use crate::encoder::{EncoderConfig, EncoderError};
use crate::partition::SubgraphAlgorithm;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum PretrainError {
    #[error("no graph in the batch admits a valid selection")]
    EmptyBatch,
    #[error("pseudolabel head is not present")]
    MissingHead,
    #[error("pretraining set is empty")]
    EmptyDataset,
    #[error("invalid pretraining configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// How the target encoder follows the context encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// Target is an exponential moving average of the context encoder and
    /// receives no gradient from the embedding-prediction loss.
    #[default]
    Ema,
    /// Both encoders are trained by gradient.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Jepa,
    Masking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub objective: Objective,
    pub encoder: EncoderConfig,
    pub context_frac: f64,
    pub target_frac: f64,
    pub targets: usize,
    pub algorithm: SubgraphAlgorithm,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub pseudolabel_weight: f64,
    pub mask_rate: f64,
    pub mode: Coupling,
    pub ema_start: f64,
    pub ema_end: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Jepa,
            encoder: EncoderConfig::default(),
            context_frac: 0.6,
            target_frac: 0.1,
            targets: 1,
            algorithm: SubgraphAlgorithm::RandomWalk,
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            pseudolabel_weight: 1.0,
            mask_rate: 0.15,
            mode: Coupling::Ema,
            ema_start: 0.996,
            ema_end: 1.0,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    /// Checks value ranges; the error names the offending field.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err((name.to_string(), format!("{v} is outside (0, 1]")))
            }
        };
        frac("context_frac", self.context_frac)?;
        frac("target_frac", self.target_frac)?;
        if self.target_frac > self.context_frac {
            return Err(("target_frac".into(), "must not exceed context_frac".into()));
        }
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return Err(("mask_rate".into(), format!("{} is outside (0, 1)", self.mask_rate)));
        }
        if self.targets == 0 {
            return Err(("targets".into(), "must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(("batch_size".into(), "must be ≥ 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(("lr".into(), format!("{} must be positive", self.lr)));
        }
        if !(self.pseudolabel_weight >= 0.0 && self.pseudolabel_weight.is_finite()) {
            return Err(("pseudolabel_weight".into(), "must be ≥ 0".into()));
        }
        if !(0.0..=1.0).contains(&self.ema_start) || !(0.0..=1.0).contains(&self.ema_end) {
            return Err(("ema_start".into(), "EMA coefficients must lie in [0, 1]".into()));
        }
        if self.encoder.depth == 0 {
            return Err(("encoder.depth".into(), "must be ≥ 1".into()));
        }
        if self.encoder.hidden == 0 {
            return Err(("encoder.hidden".into(), "must be ≥ 1".into()));
        }
        Ok(())
    }
}
