use super::finetune::{finetune, finetune_with_validation, FinetuneConfig, FinetuneOutcome};
use super::metrics::mean_std;
use super::splits::SplitManifest;
use super::{Example, LabeledData, PipelineError, Task};
use crate::diff::ParamSet;
use crate::encoder::EncoderConfig;
use crate::seed::{derive_seed, rng_from};
use crate::stamp::RunStamp;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub const DEFAULT_FRACTIONS: [f64; 6] = [0.004, 0.008, 0.016, 0.04, 0.08, 0.24];
pub const MIN_SUBSET: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Label budgets as shares of the whole dataset.
    pub fractions: Vec<f64>,
    pub repeats: usize,
    pub folds: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            fractions: DEFAULT_FRACTIONS.to_vec(),
            repeats: 3,
            folds: 5,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.fractions.is_empty() {
            return Err(("fractions".into(), "at least one fraction is required".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 0.8)) {
            return Err(("fractions".into(), format!("{f} is outside (0, 0.8]")));
        }
        if self.repeats == 0 {
            return Err(("repeats".into(), "must be ≥ 1".into()));
        }
        if self.folds == 0 {
            return Err(("folds".into(), "must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Pretrained,
    Fresh,
}

/// One finetuning run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub repeat: usize,
    pub fold: usize,
    pub arm: Arm,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub r2: Option<f64>,
    pub rmse: Option<f64>,
    pub auprc: Option<f64>,
    pub epochs_run: usize,
    /// Size of the intersection between training ids and test ids.
    pub test_overlap: usize,
    pub run_seed: u64,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub fraction: f64,
    pub arm: Arm,
    pub runs: usize,
    pub r2_mean: Option<f64>,
    pub r2_std: Option<f64>,
    pub rmse_mean: Option<f64>,
    pub rmse_std: Option<f64>,
    pub auprc_mean: Option<f64>,
    pub auprc_std: Option<f64>,
}

fn class_of(data: &LabeledData, pos: usize) -> Result<usize, PipelineError> {
    data.labels[pos]
        .map(|v| v as usize)
        .ok_or_else(|| PipelineError::LabelMissing(data.ids[pos].clone()))
}

fn missing_class(data: &LabeledData, subset: &[usize], classes: usize) -> Result<Option<usize>, PipelineError> {
    let mut seen = vec![false; classes];
    for &p in subset {
        let c = class_of(data, p)?;
        if c < classes {
            seen[c] = true;
        }
    }
    Ok(seen.iter().position(|s| !s))
}

/// Proportional allocation per class with largest remainders, at least one
/// draw for every class present when the budget allows.
fn stratified(
    data: &LabeledData,
    pool: &[usize],
    count: usize,
    classes: usize,
    seed: u64,
) -> Result<Vec<usize>, PipelineError> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &p in pool {
        by_class.entry(class_of(data, p)?).or_default().push(p);
    }
    let mut rng = rng_from(&[seed, 0x5354_5241]);
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
    }
    let total = pool.len() as f64;
    let mut quota: BTreeMap<usize, usize> = BTreeMap::new();
    let mut remainders = Vec::new();
    for (&c, members) in &by_class {
        let exact = count as f64 * members.len() as f64 / total;
        quota.insert(c, exact.floor() as usize);
        remainders.push((exact - exact.floor(), c));
    }
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = count - quota.values().sum::<usize>();
    for &(_, c) in &remainders {
        if left == 0 {
            break;
        }
        quota.insert(c, quota[&c] + 1);
        left -= 1;
    }
    if count >= by_class.len().min(classes) {
        let empty: Vec<usize> = quota.iter().filter(|(_, &q)| q == 0).map(|(&c, _)| c).collect();
        for c in empty {
            let donor = *quota.iter().max_by_key(|(&k, &q)| (q, std::cmp::Reverse(k))).unwrap().0;
            if quota[&donor] > 1 {
                quota.insert(donor, quota[&donor] - 1);
                quota.insert(c, 1);
            }
        }
    }
    let mut out: Vec<usize> = by_class
        .iter()
        .flat_map(|(c, members)| members.iter().take(quota[c]).copied())
        .collect();
    out.shuffle(&mut rng);
    Ok(out)
}

/// Draw `count` records without replacement. For classification a draw
/// missing a class is replaced once by a stratified draw; if a class is
/// still absent the subset is rejected.
pub fn sample_subset(
    data: &LabeledData,
    pool: &[usize],
    count: usize,
    task: Task,
    classes: usize,
    seed: u64,
) -> Result<Vec<usize>, PipelineError> {
    let count = count.min(pool.len());
    let mut order = pool.to_vec();
    order.shuffle(&mut rng_from(&[seed, 0x5355_4253]));
    order.truncate(count);
    if task == Task::Regression {
        return Ok(order);
    }
    if missing_class(data, &order, classes)?.is_none() {
        return Ok(order);
    }
    let retry = stratified(data, pool, count, classes, seed)?;
    match missing_class(data, &retry, classes)? {
        None => Ok(retry),
        Some(c) => Err(PipelineError::ClassAbsent(c)),
    }
}

struct Job {
    fraction_idx: usize,
    repeat: usize,
    fold: usize,
    arm: Arm,
    fit: Vec<usize>,
    val: Vec<usize>,
    /// Validate on `val` instead of a slice carved inside finetuning.
    explicit_val: bool,
    run_seed: u64,
}

fn run_job(
    job: &Job,
    data: &LabeledData,
    test: &[Example],
    pretrained: &ParamSet,
    enc: &EncoderConfig,
    ft: &FinetuneConfig,
) -> Result<FinetuneOutcome, PipelineError> {
    let init = (job.arm == Arm::Pretrained).then_some(pretrained);
    let fit = data.examples(&job.fit, ft.task)?;
    if job.explicit_val {
        let val = data.examples(&job.val, ft.task)?;
        finetune_with_validation(init, enc, &fit, &val, test, ft, job.run_seed)
    } else {
        finetune(init, enc, &fit, test, ft, job.run_seed)
    }
}

/// Run jobs on up to `jobs` threads; results keep job order.
fn run_all<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if jobs <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.min(n) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// For every fraction, repeat and fold: draw a labeled subset and finetune
/// from the pretrained weights and from scratch on identical data and seeds.
///
/// Budgets up to the finetuning pool are drawn from it; larger budgets draw
/// from the pretraining and finetuning splits together. The test split is
/// never drawn from. With `folds > 1` each fold serves once as the
/// early-stopping set while the others train.
#[allow(clippy::too_many_arguments)]
pub fn label_fraction_sweep(
    data: &LabeledData,
    manifest: &SplitManifest,
    pretrained: &ParamSet,
    enc: &EncoderConfig,
    ft: &FinetuneConfig,
    sweep: &SweepConfig,
    stamp: &RunStamp,
    jobs: usize,
) -> Result<Vec<SweepRow>, PipelineError> {
    sweep
        .validate()
        .map_err(|(k, m)| PipelineError::InvalidConfig(format!("{k}: {m}")))?;
    let total = manifest.pretrain.len() + manifest.finetune.len() + manifest.test.len();
    let finetune_pool = data.positions(&manifest.finetune)?;
    let mut wide_pool = data.positions(&manifest.pretrain)?;
    wide_pool.extend(&finetune_pool);
    let test_pos = data.positions(&manifest.test)?;
    let test = data.examples(&test_pos, ft.task)?;
    let test_ids: HashSet<&str> = manifest.test.iter().map(String::as_str).collect();

    let mut plan = Vec::new();
    for (fi, &fraction) in sweep.fractions.iter().enumerate() {
        let count = (fraction * total as f64).round() as usize;
        if count < MIN_SUBSET {
            return Err(PipelineError::FractionTooSmall { fraction, count });
        }
        let pool = if count <= finetune_pool.len() {
            &finetune_pool
        } else {
            &wide_pool
        };
        if sweep.folds > count {
            return Err(PipelineError::InvalidConfig(format!(
                "folds: {} folds over {count} records",
                sweep.folds
            )));
        }
        for repeat in 0..sweep.repeats {
            let subset_seed = derive_seed(&[stamp.seed, fi as u64, repeat as u64]);
            let subset = sample_subset(data, pool, count, ft.task, ft.classes, subset_seed)?;
            for fold in 0..sweep.folds {
                let (fit, val): (Vec<usize>, Vec<usize>) = if sweep.folds == 1 {
                    (subset.clone(), Vec::new())
                } else {
                    let (v, f): (Vec<(usize, usize)>, Vec<(usize, usize)>) = subset
                        .iter()
                        .copied()
                        .enumerate()
                        .partition(|(i, _)| i % sweep.folds == fold);
                    (
                        f.into_iter().map(|x| x.1).collect(),
                        v.into_iter().map(|x| x.1).collect(),
                    )
                };
                let run_seed = derive_seed(&[stamp.seed, fi as u64, repeat as u64, fold as u64]);
                for arm in [Arm::Pretrained, Arm::Fresh] {
                    plan.push(Job {
                        fraction_idx: fi,
                        repeat,
                        fold,
                        arm,
                        fit: fit.clone(),
                        val: val.clone(),
                        explicit_val: sweep.folds > 1,
                        run_seed,
                    });
                }
            }
        }
    }

    let results = run_all(plan.len(), jobs, |i| {
        run_job(&plan[i], data, &test, pretrained, enc, ft)
    });
    let mut rows = Vec::with_capacity(plan.len());
    for (job, result) in plan.iter().zip(results) {
        let outcome = result?;
        let overlap = job
            .fit
            .iter()
            .chain(&job.val)
            .filter(|&&p| test_ids.contains(data.ids[p].as_str()))
            .count();
        if overlap > 0 {
            return Err(PipelineError::TestLeak(format!(
                "{overlap} ids in run {}",
                job.run_seed
            )));
        }
        let r = outcome.report;
        log::info!(
            "fraction {} repeat {} fold {} {:?}: r2 {:?} auprc {:?}",
            sweep.fractions[job.fraction_idx],
            job.repeat,
            job.fold,
            job.arm,
            r.r2,
            r.auprc_macro
        );
        rows.push(SweepRow {
            fraction: sweep.fractions[job.fraction_idx],
            repeat: job.repeat,
            fold: job.fold,
            arm: job.arm,
            n_train: r.n_train,
            n_val: r.n_val,
            n_test: r.n_test,
            r2: r.r2,
            rmse: r.rmse,
            auprc: r.auprc_macro,
            epochs_run: r.epochs_run,
            test_overlap: overlap,
            run_seed: job.run_seed,
            config_hash: stamp.config_hash.clone(),
            seed: stamp.seed,
            code_version: stamp.code_version.clone(),
        });
    }
    Ok(rows)
}

/// Mean ± sample std per (fraction, arm), in first-appearance order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(f64, Arm)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|k| k.0 == r.fraction && k.1 == r.arm) {
            keys.push((r.fraction, r.arm));
        }
    }
    keys.into_iter()
        .map(|(fraction, arm)| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.fraction == fraction && r.arm == arm).collect();
            let stat = |get: fn(&SweepRow) -> Option<f64>| {
                let v: Vec<f64> = group.iter().filter_map(|r| get(r)).collect();
                if v.is_empty() {
                    (None, None)
                } else {
                    let (m, s) = mean_std(&v);
                    (Some(m), Some(s))
                }
            };
            let (r2_mean, r2_std) = stat(|r| r.r2);
            let (rmse_mean, rmse_std) = stat(|r| r.rmse);
            let (auprc_mean, auprc_std) = stat(|r| r.auprc);
            SummaryRow {
                fraction,
                arm,
                runs: group.len(),
                r2_mean,
                r2_std,
                rmse_mean,
                rmse_std,
                auprc_mean,
                auprc_std,
            }
        })
        .collect()
}
