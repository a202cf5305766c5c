use super::metrics::{auprc_macro, r2, rmse};
use super::{Example, PipelineError, Task};
use crate::dataset::NUM_CLASSES;
use crate::diff::{Adam, Bound, ParamSet, Tape, Var, GRAD_CLIP_NORM};
use crate::encoder::{encode_nodes, pool_graph, EncoderConfig, GraphInput};
use crate::pretrain::{HEAD_PREFIX, TARGET_PREFIX};
use crate::seed::rng_from;
use crate::stamp::CODE_VERSION;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub task: Task,
    /// Logit count for classification.
    pub classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Share of the training subset held out for early stopping.
    pub val_frac: f64,
    /// Start the regression head from the pretrained pseudolabel head.
    pub transfer_head: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            task: Task::Regression,
            classes: NUM_CLASSES,
            epochs: 200,
            batch_size: 16,
            lr: 1e-3,
            patience: 20,
            val_frac: 0.1,
            transfer_head: false,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.batch_size == 0 {
            return Err(("batch_size".into(), "must be ≥ 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(("lr".into(), format!("{} must be positive", self.lr)));
        }
        if !(0.0..0.5).contains(&self.val_frac) {
            return Err(("val_frac".into(), format!("{} is outside [0, 0.5)", self.val_frac)));
        }
        if self.task == Task::Classification && self.classes < 2 {
            return Err(("classes".into(), "classification needs at least 2 classes".into()));
        }
        Ok(())
    }

    fn outputs(&self) -> usize {
        match self.task {
            Task::Regression => 1,
            Task::Classification => self.classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: Task,
    pub r2: Option<f64>,
    pub rmse: Option<f64>,
    pub auprc_macro: Option<f64>,
    pub auprc_per_class: Vec<Option<f64>>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
    pub config_hash: String,
    pub code_version: String,
    pub pretrained: bool,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    /// Encoder and head; the regression head emits label units.
    pub params: ParamSet,
    pub report: MetricReport,
    /// Test-set outputs in label units (regression) or class probabilities.
    pub predictions: Vec<Vec<f64>>,
}

struct Head {
    task: Task,
    mean: f64,
    std: f64,
}

impl Head {
    fn fit(task: Task, fit: &[Example]) -> Self {
        if task == Task::Classification {
            return Self {
                task,
                mean: 0.0,
                std: 1.0,
            };
        }
        let v: Vec<f64> = fit.iter().map(|e| e.target.value()).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        Self { task, mean, std }
    }

    fn loss(&self, tape: &mut Tape, out: Var, e: &Example) -> Result<Var, PipelineError> {
        Ok(match self.task {
            Task::Regression => {
                let z = (e.target.value() - self.mean) / self.std;
                let t = tape.constant(crate::diff::Matrix::scalar(z));
                tape.mse(out, t)?
            }
            Task::Classification => tape.cross_entropy(out, &[e.target.class()])?,
        })
    }
}

fn forward(tape: &mut Tape, bound: &Bound, input: &GraphInput, enc: &EncoderConfig) -> Result<Var, PipelineError> {
    let h = encode_nodes(tape, bound, TARGET_PREFIX, input, enc)?;
    let pooled = pool_graph(tape, h)?;
    let v = |n: &str| bound.var(&format!("{HEAD_PREFIX}.{n}"));
    let a = tape.linear(pooled, v("l0.W"), v("l0.b"))?;
    let a = tape.relu(a);
    Ok(tape.linear(a, v("l1.W"), v("l1.b"))?)
}

/// Rewrite the output layer so it emits label units instead of standardized ones.
fn fold_scale_into_head(params: &mut ParamSet, mean: f64, std: f64) {
    let w = format!("{HEAD_PREFIX}.l1.W");
    let b = format!("{HEAD_PREFIX}.l1.b");
    let wp = params.get_mut(&w).expect("head present");
    wp.value = wp.value.scaled(std);
    let bp = params.get_mut(&b).expect("head present");
    bp.value.data.iter_mut().for_each(|v| *v = *v * std + mean);
}

/// Model output for one graph: the prediction in label units, or class
/// probabilities.
pub fn predict(
    params: &ParamSet,
    enc: &EncoderConfig,
    input: &GraphInput,
    task: Task,
) -> Result<Vec<f64>, PipelineError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let out = forward(&mut tape, &bound, input, enc)?;
    let raw = &tape.value(out).data;
    Ok(match task {
        Task::Regression => raw.clone(),
        Task::Classification => {
            let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = raw.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exp.iter().sum();
            exp.into_iter().map(|v| v / sum).collect()
        }
    })
}

/// Test metrics for predictions made by [`predict`].
pub fn score(cfg: &FinetuneConfig, test: &[Example], predictions: &[Vec<f64>]) -> Result<MetricReport, PipelineError> {
    let mut report = MetricReport {
        task: cfg.task,
        r2: None,
        rmse: None,
        auprc_macro: None,
        auprc_per_class: Vec::new(),
        n_train: 0,
        n_val: 0,
        n_test: test.len(),
        seed: 0,
        config_hash: String::new(),
        code_version: CODE_VERSION.to_string(),
        pretrained: false,
        epochs_run: 0,
    };
    match cfg.task {
        Task::Regression => {
            let y: Vec<f64> = test.iter().map(|e| e.target.value()).collect();
            let p: Vec<f64> = predictions.iter().map(|p| p[0]).collect();
            report.r2 = Some(r2(&y, &p)?);
            report.rmse = Some(rmse(&y, &p)?);
        }
        Task::Classification => {
            let y: Vec<usize> = test.iter().map(|e| e.target.class()).collect();
            let (macro_avg, per_class) = auprc_macro(&y, predictions, cfg.classes);
            report.auprc_macro = macro_avg;
            report.auprc_per_class = per_class;
        }
    }
    Ok(report)
}

fn mean_loss(params: &ParamSet, head: &Head, set: &[Example], enc: &EncoderConfig) -> Result<f64, PipelineError> {
    let mut total = 0.0;
    for e in set {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let out = forward(&mut tape, &bound, &e.graph.input, enc)?;
        let l = head.loss(&mut tape, out, e)?;
        total += tape.value(l).item();
    }
    Ok(total / set.len() as f64)
}

fn initial_params(
    init: Option<&ParamSet>,
    enc: &EncoderConfig,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<ParamSet, PipelineError> {
    let mut rng = rng_from(&[seed, 0x4649_4e45]);
    let d = enc.hidden;
    let mid = (d / 2).max(1);
    let mut p = enc.init_params(TARGET_PREFIX, &mut rng);
    p.add_linear(&format!("{HEAD_PREFIX}.l0"), d, mid, &mut rng);
    p.add_linear(&format!("{HEAD_PREFIX}.l1"), mid, cfg.outputs(), &mut rng);
    if let Some(src) = init {
        let encoder_part = src.subset(&format!("{TARGET_PREFIX}."));
        let expected = p.subset(&format!("{TARGET_PREFIX}.")).len();
        let copied = p.copy_values_from(&encoder_part)?;
        if copied != expected {
            return Err(PipelineError::InvalidConfig(format!(
                "pretrained weights cover {copied} of {expected} encoder parameters"
            )));
        }
        if cfg.transfer_head && cfg.task == Task::Regression {
            p.copy_values_from(&src.subset(&format!("{HEAD_PREFIX}.")))?;
        }
    }
    Ok(p)
}

/// Train encoder and head end-to-end on `train`, holding out `val_frac` of
/// it for early stopping, then score `test`.
pub fn finetune(
    init: Option<&ParamSet>,
    enc: &EncoderConfig,
    train: &[Example],
    test: &[Example],
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<FinetuneOutcome, PipelineError> {
    let n = train.len();
    let mut n_val = (cfg.val_frac * n as f64).round() as usize;
    if n < 2 + n_val {
        n_val = 0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(&[seed, 0x5641_4c49]));
    let val: Vec<Example> = order[..n_val].iter().map(|&i| train[i]).collect();
    let fit: Vec<Example> = order[n_val..].iter().map(|&i| train[i]).collect();
    finetune_with_validation(init, enc, &fit, &val, test, cfg, seed)
}

/// As [`finetune`] with an explicit validation set; an empty one disables
/// early stopping.
pub fn finetune_with_validation(
    init: Option<&ParamSet>,
    enc: &EncoderConfig,
    fit: &[Example],
    val: &[Example],
    test: &[Example],
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<FinetuneOutcome, PipelineError> {
    cfg.validate()
        .map_err(|(k, m)| PipelineError::InvalidConfig(format!("{k}: {m}")))?;
    if fit.is_empty() {
        return Err(PipelineError::InvalidConfig("training subset is empty".into()));
    }
    if cfg.task == Task::Classification {
        if let Some(e) = fit
            .iter()
            .chain(val)
            .chain(test)
            .find(|e| e.target.class() >= cfg.classes)
        {
            return Err(PipelineError::InvalidConfig(format!(
                "record {}: class {} exceeds the configured {} classes",
                e.id,
                e.target.class(),
                cfg.classes
            )));
        }
    }
    let mut params = initial_params(init, enc, cfg, seed)?;
    let head = Head::fit(cfg.task, fit);
    let mut opt = Adam::new(cfg.lr);
    let mut best: Option<(f64, ParamSet)> = None;
    let mut stale = 0;
    let mut epochs_run = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..fit.len()).collect();
        order.shuffle(&mut rng_from(&[seed, epoch as u64, 0x4654]));
        for chunk in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, true);
            let mut terms = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let out = forward(&mut tape, &bound, &fit[i].graph.input, enc)?;
                terms.push((head.loss(&mut tape, out, &fit[i])?, 1.0 / chunk.len() as f64));
            }
            let loss = tape.weighted_sum(&terms)?;
            let grads = tape.backward(loss)?;
            params.zero_grad();
            params.accumulate(&bound, &grads);
            params.clip_grad_norm(GRAD_CLIP_NORM);
            opt.step(&mut params);
        }
        epochs_run = epoch + 1;
        if val.is_empty() {
            continue;
        }
        let v = mean_loss(&params, &head, val, enc)?;
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log::debug!("early stop after epoch {epoch}");
                break;
            }
        }
    }
    if let Some((_, snapshot)) = best {
        params = snapshot;
    }
    if cfg.task == Task::Regression {
        fold_scale_into_head(&mut params, head.mean, head.std);
    }

    let predictions = test
        .iter()
        .map(|e| predict(&params, enc, &e.graph.input, cfg.task))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = score(cfg, test, &predictions)?;
    report.n_train = fit.len();
    report.n_val = val.len();
    report.seed = seed;
    report.pretrained = init.is_some();
    report.epochs_run = epochs_run;
    Ok(FinetuneOutcome {
        params,
        report,
        predictions,
    })
}
