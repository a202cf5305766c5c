use super::PretrainError;
use crate::diff::{Adam, Bound, Matrix, ParamSet, Tape, Var, GRAD_CLIP_NORM};
use crate::encoder::{element_class, encode_nodes_with, EncoderConfig, PreparedGraph, ELEMENT_SLOTS};
use crate::seed::{derive_seed, rng_from};
use rand::seq::SliceRandom;
use std::sync::Arc;

pub const MASK_CLASSES: usize = ELEMENT_SLOTS;
const PREFIX: &str = "enc";

/// Encoder, learned mask vector, and per-node element classifier.
#[derive(Debug, Clone)]
pub struct MaskingModel {
    pub encoder: EncoderConfig,
    /// `enc.*`, `mask.token`, `mask.cls.*`
    pub params: ParamSet,
}

impl MaskingModel {
    pub fn new(encoder: EncoderConfig, seed: u64) -> Self {
        let mut rng = rng_from(&[seed, 0x4d41_534b]);
        let mut params = encoder.init_params(PREFIX, &mut rng);
        params.insert("mask.token", crate::diff::glorot(1, ELEMENT_SLOTS, &mut rng));
        params.add_linear("mask.cls", encoder.hidden, MASK_CLASSES, &mut rng);
        // zero logits at start: the untrained loss is the uniform guess
        params.insert("mask.cls.W", Matrix::zeros(encoder.hidden, MASK_CLASSES));
        params.insert("mask.cls.b", Matrix::zeros(1, MASK_CLASSES));
        Self { encoder, params }
    }

    /// Encoder weights only.
    pub fn export(&self) -> ParamSet {
        self.params.subset(&format!("{PREFIX}."))
    }
}

/// `⌈rate·N⌉` heavy-atom nodes (at least one) in seeded order.
pub fn masked_nodes(pg: &PreparedGraph, rate: f64, seed: u64) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..pg.graph.node_count())
        .filter(|&v| element_class(pg.graph.nodes[v].atom.element).is_some())
        .collect();
    if candidates.is_empty() {
        return candidates;
    }
    let k = ((rate * candidates.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    candidates.shuffle(&mut rng_from(&[seed, pg.key]));
    candidates.truncate(k.min(candidates.len()));
    candidates.sort_unstable();
    candidates
}

/// Mean over graphs of the element cross-entropy on masked nodes. Masked
/// rows have their element slots replaced by the learned mask vector.
pub fn masking_forward(
    tape: &mut Tape,
    model: &MaskingModel,
    graphs: &[&PreparedGraph],
    rate: f64,
    seed: u64,
) -> Result<(Var, Bound), PretrainError> {
    let bound = model.params.bind(tape, true);
    let mut terms = Vec::new();
    let usable: Vec<(&PreparedGraph, Vec<usize>)> = graphs
        .iter()
        .map(|pg| (*pg, masked_nodes(pg, rate, seed)))
        .filter(|(_, m)| !m.is_empty())
        .collect();
    if usable.is_empty() {
        return Err(PretrainError::EmptyBatch);
    }
    let share = 1.0 / usable.len() as f64;
    for (pg, masked) in usable {
        let x = &pg.input.x;
        let n = x.rows;
        let rest_cols = x.cols - ELEMENT_SLOTS;
        let mut elem = Matrix::zeros(n, ELEMENT_SLOTS);
        let mut rest = Matrix::zeros(n, rest_cols);
        for r in 0..n {
            elem.row_mut(r).copy_from_slice(&x.row(r)[..ELEMENT_SLOTS]);
            rest.row_mut(r).copy_from_slice(&x.row(r)[ELEMENT_SLOTS..]);
        }
        for &v in &masked {
            elem.row_mut(v).iter_mut().for_each(|e| *e = 0.0);
        }
        let k = masked.len();
        let masked = Arc::new(masked);
        let token_rows = tape.gather_rows(bound.var("mask.token"), Arc::new(vec![0; k]))?;
        let placed = tape.scatter_weighted(token_rows, masked.clone(), Arc::new(vec![1.0; k]), n)?;
        let elem = tape.constant(elem);
        let elem = tape.add(elem, placed)?;
        let rest = tape.constant(rest);
        let input = tape.concat(&[elem, rest])?;
        let h = encode_nodes_with(tape, &bound, PREFIX, &pg.input, input, &model.encoder)?;
        let hm = tape.gather_rows(h, masked.clone())?;
        let logits = tape.linear(hm, bound.var("mask.cls.W"), bound.var("mask.cls.b"))?;
        let classes: Vec<usize> = masked
            .iter()
            .map(|&v| element_class(pg.graph.nodes[v].atom.element).expect("masked nodes are heavy atoms"))
            .collect();
        terms.push((tape.cross_entropy(logits, &classes)?, share));
    }
    Ok((tape.weighted_sum(&terms)?, bound))
}

/// One Adam step on the masking objective; returns the batch loss.
pub fn masking_step(
    model: &mut MaskingModel,
    opt: &mut Adam,
    graphs: &[&PreparedGraph],
    rate: f64,
    seed: u64,
) -> Result<f64, PretrainError> {
    let mut tape = Tape::new();
    let (loss, bound) = masking_forward(&mut tape, model, graphs, rate, derive_seed(&[seed]))?;
    let grads = tape.backward(loss)?;
    model.params.zero_grad();
    model.params.accumulate(&bound, &grads);
    model.params.clip_grad_norm(GRAD_CLIP_NORM);
    opt.step(&mut model.params);
    Ok(tape.value(loss).item())
}
