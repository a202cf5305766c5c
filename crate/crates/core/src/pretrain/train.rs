use super::collapse::CollapseGate;
use super::jepa::{jepa_step, select_items, JepaModel, JepaOptimizer, MwScaler};
use super::masking::{masking_step, MaskingModel};
use super::{Objective, PretrainConfig, PretrainError};
use crate::diff::{ema_schedule, Adam, ParamSet};
use crate::encoder::PreparedGraph;
use crate::seed::{derive_seed, rng_from};
use crate::stamp::RunStamp;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub jepa_loss: f64,
    pub pl_loss: f64,
    pub mask_loss: f64,
    pub emb_std: f64,
    pub skipped: usize,
    pub tau: f64,
    /// Number of graphs whose context fell short of the requested size.
    pub shortfalls: usize,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub log: Vec<EpochLog>,
    pub degenerate: bool,
    /// Parameters handed to finetuning (target encoder, plus head if any).
    pub export: ParamSet,
    /// Every trained parameter.
    pub all_params: ParamSet,
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(&[seed, epoch as u64, 0x4f52_4452]));
    order
}

/// Run the configured objective over `graphs`.
pub fn pretrain(graphs: &[PreparedGraph], cfg: &PretrainConfig) -> Result<PretrainOutcome, PretrainError> {
    cfg.validate()
        .map_err(|(key, msg)| PretrainError::InvalidConfig(format!("{key}: {msg}")))?;
    if graphs.is_empty() {
        return Err(PretrainError::EmptyDataset);
    }
    match cfg.objective {
        Objective::Jepa => pretrain_jepa(graphs, cfg),
        Objective::Masking => pretrain_masking(graphs, cfg),
    }
}

fn pretrain_jepa(graphs: &[PreparedGraph], cfg: &PretrainConfig) -> Result<PretrainOutcome, PretrainError> {
    let mut model = JepaModel::new(cfg.encoder, cfg.mode, cfg.pseudolabel_weight > 0.0, cfg.seed);
    let mws: Vec<f64> = graphs.iter().map(|g| g.graph.pseudolabel_mw).collect();
    model.mw = MwScaler::fit(&mws);
    let mut opt = JepaOptimizer::new(cfg.lr);
    let batches = graphs.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches;
    let mut gate = CollapseGate::default();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(graphs.len(), cfg.seed, epoch);
        let (mut loss, mut jepa, mut pl, mut std_sum) = (0.0, 0.0, 0.0, 0.0);
        let (mut used, mut skipped, mut std_batches, mut shortfalls) = (0, 0, 0, 0);
        let mut tau = cfg.ema_end;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&PreparedGraph> = chunk.iter().map(|&i| &graphs[i]).collect();
            let (items, skip) = select_items(&refs, cfg, cfg.seed, epoch);
            skipped += skip;
            tau = ema_schedule(cfg.ema_start, cfg.ema_end, step, total_steps);
            step += 1;
            if items.is_empty() {
                continue;
            }
            shortfalls += items.iter().filter(|it| it.selection.context_shortfall).count();
            let s = jepa_step(&mut model, &mut opt, &refs, &items, cfg.pseudolabel_weight, tau)?;
            let w = s.used as f64;
            loss += s.loss * w;
            jepa += s.jepa_loss * w;
            pl += s.pl_loss * w;
            used += s.used;
            if s.used >= 2 {
                std_sum += s.emb_std;
                std_batches += 1;
            }
        }
        if used == 0 {
            return Err(PretrainError::EmptyBatch);
        }
        let u = used as f64;
        let emb_std = if std_batches > 0 {
            std_sum / std_batches as f64
        } else {
            0.0
        };
        gate.observe(emb_std);
        let entry = EpochLog {
            epoch,
            loss: loss / u,
            jepa_loss: jepa / u,
            pl_loss: pl / u,
            mask_loss: 0.0,
            emb_std,
            skipped,
            tau,
            shortfalls,
        };
        log::info!(
            "epoch {epoch}: loss {:.6} jepa {:.6} pl {:.6} std {:.4} skipped {skipped}",
            entry.loss,
            entry.jepa_loss,
            entry.pl_loss,
            entry.emb_std
        );
        log.push(entry);
    }
    if gate.is_degenerate() {
        log::warn!(
            "embedding spread stayed below {} for {} epochs",
            gate.threshold,
            gate.patience
        );
    }
    Ok(PretrainOutcome {
        log,
        degenerate: gate.is_degenerate(),
        export: model.export(),
        all_params: model.all_params(),
    })
}

fn pretrain_masking(graphs: &[PreparedGraph], cfg: &PretrainConfig) -> Result<PretrainOutcome, PretrainError> {
    let mut model = MaskingModel::new(cfg.encoder, cfg.seed);
    let mut opt = Adam::new(cfg.lr);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(graphs.len(), cfg.seed, epoch);
        let (mut total, mut count) = (0.0, 0);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&PreparedGraph> = chunk.iter().map(|&i| &graphs[i]).collect();
            let seed = derive_seed(&[cfg.seed, epoch as u64, b as u64]);
            let loss = masking_step(&mut model, &mut opt, &refs, cfg.mask_rate, seed)?;
            total += loss * refs.len() as f64;
            count += refs.len();
        }
        let mean = total / count.max(1) as f64;
        log.push(EpochLog {
            epoch,
            loss: mean,
            jepa_loss: 0.0,
            pl_loss: 0.0,
            mask_loss: mean,
            emb_std: 0.0,
            skipped: 0,
            tau: 0.0,
            shortfalls: 0,
        });
    }
    Ok(PretrainOutcome {
        log,
        degenerate: false,
        export: model.export(),
        all_params: model.params.clone(),
    })
}

#[derive(Serialize)]
struct StampedLine<'a> {
    #[serde(flatten)]
    stamp: &'a RunStamp,
    #[serde(flatten)]
    entry: &'a EpochLog,
}

/// One JSON object per epoch, each carrying the run stamp.
pub fn write_log(path: &Path, stamp: &RunStamp, log: &[EpochLog]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for entry in log {
        let line = serde_json::to_string(&StampedLine { stamp, entry }).map_err(std::io::Error::other)?;
        writeln!(f, "{line}")?;
    }
    f.flush()
}
