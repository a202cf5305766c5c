use super::collapse::embedding_std;
use super::{Coupling, PretrainConfig, PretrainError};
use crate::diff::{ema_update, glorot, Adam, Bound, DiffError, Matrix, ParamSet, Tape, Var, GRAD_CLIP_NORM};
use crate::encoder::{encode_nodes, pool_graph, pool_patches, EncoderConfig, GraphInput, PreparedGraph};
use crate::encoding::{patch_rwse, PATCH_PE_STEPS};
use crate::partition::{patch_pool, select_context_and_targets, PartitionError, PatchSelection};
use crate::seed::{derive_seed, rng_from};

pub const CONTEXT_PREFIX: &str = "ctx";
pub const TARGET_PREFIX: &str = "enc";
pub const HEAD_PREFIX: &str = "head";
const TOKEN: &str = "pred.token";

/// Standardizes molecular weights with statistics of the pretraining set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwScaler {
    pub mean: f64,
    pub std: f64,
}

impl Default for MwScaler {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl MwScaler {
    pub fn fit(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    pub fn z(&self, mw: f64) -> f64 {
        (mw - self.mean) / self.std
    }
}

/// Context encoder, target encoder, predictor with positional token map,
/// and an optional molecular-weight head.
#[derive(Debug, Clone)]
pub struct JepaModel {
    pub encoder: EncoderConfig,
    pub mode: Coupling,
    /// `ctx.*`, `pred.*`, and `head.*` when the head is present.
    pub online: ParamSet,
    /// `enc.*`
    pub target: ParamSet,
    pub mw: MwScaler,
}

/// Adam state for both parameter groups.
#[derive(Debug, Clone)]
pub struct JepaOptimizer {
    pub online: Adam,
    pub target: Adam,
}

impl JepaOptimizer {
    pub fn new(lr: f64) -> Self {
        Self {
            online: Adam::new(lr),
            target: Adam::new(lr),
        }
    }
}

impl JepaModel {
    pub fn new(encoder: EncoderConfig, mode: Coupling, with_head: bool, seed: u64) -> Self {
        let mut rng = rng_from(&[seed, 0x4a45_5041]);
        let d = encoder.hidden;
        let mut online = ParamSet::new();
        encoder.add_params(&mut online, CONTEXT_PREFIX, &mut rng);
        for l in 0..3 {
            online.add_linear(&format!("pred.l{l}"), d, d, &mut rng);
        }
        online.insert(TOKEN, glorot(PATCH_PE_STEPS, d, &mut rng));
        if with_head {
            let mid = (d / 2).max(1);
            online.add_linear(&format!("{HEAD_PREFIX}.l0"), d, mid, &mut rng);
            online.add_linear(&format!("{HEAD_PREFIX}.l1"), mid, 1, &mut rng);
        }
        let target = match mode {
            Coupling::Ema => online
                .subset(&format!("{CONTEXT_PREFIX}."))
                .renamed(&format!("{CONTEXT_PREFIX}."), &format!("{TARGET_PREFIX}.")),
            Coupling::Joint => encoder.init_params(TARGET_PREFIX, &mut rng),
        };
        Self {
            encoder,
            mode,
            online,
            target,
            mw: MwScaler::default(),
        }
    }

    pub fn has_head(&self) -> bool {
        self.online.contains(&format!("{HEAD_PREFIX}.l0.W"))
    }

    /// Target encoder plus the head when present; what finetuning starts from.
    pub fn export(&self) -> ParamSet {
        let mut out = self.target.clone();
        for (name, p) in self.online.iter() {
            if name.starts_with(&format!("{HEAD_PREFIX}.")) {
                out.insert(name, p.value.clone());
            }
        }
        out
    }

    /// Everything, for checkpointing.
    pub fn all_params(&self) -> ParamSet {
        let mut out = self.online.clone();
        for (name, p) in self.target.iter() {
            out.insert(name, p.value.clone());
        }
        out
    }

    fn context_as_target(&self) -> ParamSet {
        self.online
            .subset(&format!("{CONTEXT_PREFIX}."))
            .renamed(&format!("{CONTEXT_PREFIX}."), &format!("{TARGET_PREFIX}."))
    }
}

/// Selection and derived inputs for one graph in one epoch.
#[derive(Debug, Clone)]
pub struct JepaItem {
    /// Position of the graph in the batch slice.
    pub index: usize,
    pub selection: PatchSelection,
    pub context_input: GraphInput,
    /// One positional token row per target.
    pub tokens: Matrix,
}

pub fn prepare_item(
    pg: &PreparedGraph,
    index: usize,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<JepaItem, PartitionError> {
    let g = &pg.graph;
    let pool = patch_pool(g, cfg.algorithm, cfg.target_frac, derive_seed(&[seed, 0]))?;
    let selection = select_context_and_targets(
        &pool,
        g,
        cfg.context_frac,
        cfg.target_frac,
        cfg.targets,
        derive_seed(&[seed, 1]),
    )?;
    let context_input = GraphInput::restrict(g, &pg.input, &selection.context);
    let pe = patch_rwse(&selection, g, PATCH_PE_STEPS);
    let m = selection.targets.len();
    let mut tokens = Matrix::zeros(m, PATCH_PE_STEPS);
    for i in 0..m {
        tokens.row_mut(i).copy_from_slice(pe.row(i + 1));
    }
    Ok(JepaItem {
        index,
        selection,
        context_input,
        tokens,
    })
}

/// Selections for a batch; graphs without a valid selection are skipped
/// and counted. Each graph's seed mixes the run seed, the epoch, and its key.
pub fn select_items(
    graphs: &[&PreparedGraph],
    cfg: &PretrainConfig,
    run_seed: u64,
    epoch: usize,
) -> (Vec<JepaItem>, usize) {
    let mut items = Vec::with_capacity(graphs.len());
    let mut skipped = 0;
    for (i, pg) in graphs.iter().enumerate() {
        match prepare_item(pg, i, cfg, derive_seed(&[run_seed, epoch as u64, pg.key])) {
            Ok(item) => items.push(item),
            Err(e) => {
                log::debug!("graph {:#x} skipped: {e}", pg.key);
                skipped += 1;
            }
        }
    }
    (items, skipped)
}

/// Output of the batch forward pass.
pub struct JepaForward {
    pub jepa: Var,
    pub pseudolabel: Option<Var>,
    pub total: Var,
    /// Pooled target-encoder embedding of every used graph.
    pub target_pooled: Matrix,
    pub online: Bound,
    pub target: Bound,
    pub target_trainable: bool,
}

/// Maps the predictor input (`m × d`) to predicted target embeddings.
/// The second argument is the target embeddings, for oracle substitutes.
pub type PredictFn<'a> = &'a dyn Fn(&mut Tape, &Bound, Var, Var) -> Result<Var, DiffError>;

pub fn mlp_predict(tape: &mut Tape, online: &Bound, z: Var, _targets: Var) -> Result<Var, DiffError> {
    let mut h = z;
    for l in 0..3 {
        h = tape.linear(
            h,
            online.var(&format!("pred.l{l}.W")),
            online.var(&format!("pred.l{l}.b")),
        )?;
        if l < 2 {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

fn head_forward(tape: &mut Tape, online: &Bound, pooled: Var) -> Result<Var, DiffError> {
    let h = tape.linear(pooled, online.var("head.l0.W"), online.var("head.l0.b"))?;
    let h = tape.relu(h);
    tape.linear(h, online.var("head.l1.W"), online.var("head.l1.b"))
}

/// Batch loss: mean over graphs of the per-graph mean squared error between
/// predicted and actual target embeddings, plus `λ` times the mean squared
/// error of the standardized molecular weight when `λ > 0`.
pub fn jepa_forward(
    tape: &mut Tape,
    model: &JepaModel,
    graphs: &[&PreparedGraph],
    items: &[JepaItem],
    lambda: f64,
    predict: PredictFn<'_>,
) -> Result<JepaForward, PretrainError> {
    if items.is_empty() {
        return Err(PretrainError::EmptyBatch);
    }
    let use_head = lambda > 0.0;
    if use_head && !model.has_head() {
        return Err(PretrainError::MissingHead);
    }
    let target_trainable = model.mode == Coupling::Joint || use_head;
    let online = model.online.bind(tape, true);
    let target = model.target.bind(tape, target_trainable);
    let cfg = &model.encoder;
    let d = cfg.hidden;
    let share = 1.0 / items.len() as f64;
    let mut jepa_terms = Vec::with_capacity(items.len());
    let mut pl_terms = Vec::new();
    let mut pooled_rows = Matrix::zeros(items.len(), d);
    for (row, item) in items.iter().enumerate() {
        let pg = graphs[item.index];
        let h_ctx = encode_nodes(tape, &online, CONTEXT_PREFIX, &item.context_input, cfg)?;
        let s_x = pool_graph(tape, h_ctx)?;
        let h_full = encode_nodes(tape, &target, TARGET_PREFIX, &pg.input, cfg)?;
        let groups: Vec<Vec<usize>> = item.selection.targets.iter().map(|t| t.node_ids.clone()).collect();
        let m = groups.len();
        let mut s_y = pool_patches(tape, h_full, groups)?;
        if target_trainable && model.mode == Coupling::Ema {
            s_y = tape.detach(s_y);
        }
        let tokens = tape.constant(item.tokens.clone());
        let placed = tape.matmul(tokens, online.var(TOKEN))?;
        let s_x_rows = tape.gather_rows(s_x, std::sync::Arc::new(vec![0; m]))?;
        let z = tape.add(s_x_rows, placed)?;
        let predicted = predict(tape, &online, z, s_y)?;
        jepa_terms.push((tape.mse(predicted, s_y)?, share));

        let pooled = pool_graph(tape, h_full)?;
        pooled_rows.row_mut(row).copy_from_slice(tape.value(pooled).row(0));
        if use_head {
            let out = head_forward(tape, &online, pooled)?;
            let label = tape.constant(Matrix::scalar(model.mw.z(pg.graph.pseudolabel_mw)));
            pl_terms.push((tape.mse(out, label)?, share));
        }
    }
    let jepa = tape.weighted_sum(&jepa_terms)?;
    let (pseudolabel, total) = if use_head {
        let pl = tape.weighted_sum(&pl_terms)?;
        let total = tape.weighted_sum(&[(jepa, 1.0), (pl, lambda)])?;
        (Some(pl), total)
    } else {
        (None, jepa)
    };
    Ok(JepaForward {
        jepa,
        pseudolabel,
        total,
        target_pooled: pooled_rows,
        online,
        target,
        target_trainable,
    })
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub jepa_loss: f64,
    pub pl_loss: f64,
    pub emb_std: f64,
    pub used: usize,
}

/// Forward and backward pass; gradients are written into the models'
/// accumulators (after zeroing) and left unclipped.
pub fn compute_gradients(
    model: &mut JepaModel,
    graphs: &[&PreparedGraph],
    items: &[JepaItem],
    lambda: f64,
) -> Result<(StepStats, bool), PretrainError> {
    let mut tape = Tape::new();
    let fwd = jepa_forward(&mut tape, model, graphs, items, lambda, &mlp_predict)?;
    let grads = tape.backward(fwd.total)?;
    model.online.zero_grad();
    model.target.zero_grad();
    model.online.accumulate(&fwd.online, &grads);
    if fwd.target_trainable {
        model.target.accumulate(&fwd.target, &grads);
    }
    let stats = StepStats {
        loss: tape.value(fwd.total).item(),
        jepa_loss: tape.value(fwd.jepa).item(),
        pl_loss: fwd.pseudolabel.map_or(0.0, |v| tape.value(v).item()),
        emb_std: embedding_std(&fwd.target_pooled),
        used: items.len(),
    };
    Ok((stats, fwd.target_trainable))
}

/// One optimizer step on a prepared batch: gradients, global-norm
/// clipping, Adam, then the EMA pull of the target toward the context
/// encoder when coupled that way.
pub fn jepa_step(
    model: &mut JepaModel,
    opt: &mut JepaOptimizer,
    graphs: &[&PreparedGraph],
    items: &[JepaItem],
    lambda: f64,
    tau: f64,
) -> Result<StepStats, PretrainError> {
    let (stats, target_trainable) = compute_gradients(model, graphs, items, lambda)?;
    let norm = (model.online.grad_norm().powi(2) + model.target.grad_norm().powi(2)).sqrt();
    if !norm.is_finite() {
        return Err(DiffError::NonFiniteValue("gradient").into());
    }
    if norm > GRAD_CLIP_NORM {
        let s = GRAD_CLIP_NORM / norm;
        for set in [&mut model.online, &mut model.target] {
            for (_, p) in set.iter_mut() {
                p.grad.data.iter_mut().for_each(|g| *g *= s);
            }
        }
    }
    opt.online.step(&mut model.online);
    if target_trainable {
        opt.target.step(&mut model.target);
    }
    if model.mode == Coupling::Ema {
        let source = model.context_as_target();
        ema_update(&mut model.target, &source, tau)?;
    }
    Ok(stats)
}

/// Pseudolabel term alone: mean squared error of the head's prediction of
/// the standardized molecular weight from pooled target embeddings.
pub fn pseudolabel_loss(model: &JepaModel, graphs: &[&PreparedGraph]) -> Result<f64, PretrainError> {
    if !model.has_head() {
        return Err(PretrainError::MissingHead);
    }
    if graphs.is_empty() {
        return Err(PretrainError::EmptyBatch);
    }
    let mut tape = Tape::new();
    let online = model.online.bind(&mut tape, false);
    let target = model.target.bind(&mut tape, false);
    let mut total = 0.0;
    for pg in graphs {
        let h = encode_nodes(&mut tape, &target, TARGET_PREFIX, &pg.input, &model.encoder)?;
        let pooled = pool_graph(&mut tape, h)?;
        let out = head_forward(&mut tape, &online, pooled)?;
        total += (tape.value(out).item() - model.mw.z(pg.graph.pseudolabel_mw)).powi(2);
    }
    Ok(total / graphs.len() as f64)
}
