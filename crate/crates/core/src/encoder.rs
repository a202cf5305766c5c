//! Node-centred weighted directed message passing.
//!
//! ```text
//! h0_v    = relu(W_in [x_v ‖ pe_v] + b_in)
//! m_v     = Σ_{u→v} w_uv · relu(W_msg [h_u ‖ e_uv] + b_msg)
//! h_v     ← relu(h0_v + W_upd [h_v ‖ m_v] + b_upd)      (T times)
//! ```
//!
//! Weights are shared across the T update steps.

use crate::chem::{BondOrder, Element};
use crate::diff::{Bound, DiffError, Matrix, ParamSet, Tape, Var};
use crate::encoding::{node_rwse, NODE_PE_STEPS};
use crate::partition::Patch;
use crate::polymer::PolymerGraph;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const ELEMENT_SLOTS: usize = 10;
pub const ATOM_FEATURES: usize = ELEMENT_SLOTS + 1 + 6 + 1;
pub const EDGE_FEATURES: usize = 4 + 1;

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("cannot pool an empty patch")]
    EmptyPatch,
    #[error("invalid encoder configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub depth: usize,
    pub hidden: usize,
    pub pe_steps: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            hidden: 64,
            pe_steps: NODE_PE_STEPS,
        }
    }
}

impl EncoderConfig {
    pub fn node_input(&self) -> usize {
        ATOM_FEATURES + self.pe_steps
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.depth == 0 || self.hidden == 0 {
            return Err(EncoderError::InvalidConfig(format!(
                "depth {} and hidden {} must both be ≥ 1",
                self.depth, self.hidden
            )));
        }
        Ok(())
    }

    /// Fresh encoder parameters named `{prefix}.in|msg|upd.{W,b}`.
    pub fn init_params<R: Rng>(&self, prefix: &str, rng: &mut R) -> ParamSet {
        let mut p = ParamSet::new();
        self.add_params(&mut p, prefix, rng);
        p
    }

    pub fn add_params<R: Rng>(&self, p: &mut ParamSet, prefix: &str, rng: &mut R) {
        let d = self.hidden;
        p.add_linear(&format!("{prefix}.in"), self.node_input(), d, rng);
        p.add_linear(&format!("{prefix}.msg"), d + EDGE_FEATURES, d, rng);
        p.add_linear(&format!("{prefix}.upd"), 2 * d, d, rng);
    }
}

/// Atom feature row: element one-hot, aromatic flag, degree one-hot (0–5),
/// formal charge clipped to [−1, 1]. Hydrogen has no element slot.
pub fn atom_features(g: &PolymerGraph) -> Matrix {
    let mut x = Matrix::zeros(g.node_count(), ATOM_FEATURES);
    for (v, node) in g.nodes.iter().enumerate() {
        let a = &node.atom;
        if let Some(slot) = a.element.heavy_index() {
            x.set(v, slot, 1.0);
        }
        x.set(v, ELEMENT_SLOTS, f64::from(u8::from(a.aromatic)));
        x.set(v, ELEMENT_SLOTS + 1 + usize::from(a.degree.min(5)), 1.0);
        x.set(v, ATOM_FEATURES - 1, f64::from(a.formal_charge.clamp(-1, 1)));
    }
    x
}

/// Edge feature row: bond-order one-hot and stochastic flag.
pub fn edge_feature(order: BondOrder, stochastic: bool) -> [f64; EDGE_FEATURES] {
    let mut f = [0.0; EDGE_FEATURES];
    f[order.index()] = 1.0;
    f[4] = f64::from(u8::from(stochastic));
    f
}

/// Element class of a node for the masking objective.
pub fn element_class(e: Element) -> Option<usize> {
    e.heavy_index()
}

/// Encoder input for a graph or a node-induced piece of it.
#[derive(Debug, Clone)]
pub struct GraphInput {
    /// Atom features followed by node encodings.
    pub x: Matrix,
    pub edge_x: Matrix,
    pub src: Arc<Vec<usize>>,
    pub dst: Arc<Vec<usize>>,
    pub weight: Arc<Vec<f64>>,
    /// Graph node index of every local row.
    pub nodes: Vec<usize>,
}

impl GraphInput {
    pub fn node_count(&self) -> usize {
        self.x.rows
    }

    /// Whole-graph input, computing node encodings with `pe_steps` steps.
    pub fn full(g: &PolymerGraph, pe_steps: usize) -> GraphInput {
        let pe = node_rwse(g, pe_steps);
        Self::from_parts(
            g,
            &atom_features(g),
            &pe,
            &(0..g.node_count()).collect::<Vec<_>>(),
            None,
        )
    }

    /// Rows of a precomputed full input restricted to `patch`; node
    /// encodings stay those of the whole graph.
    pub fn restrict(g: &PolymerGraph, full: &GraphInput, patch: &Patch) -> GraphInput {
        let atoms = Matrix::zeros(0, 0);
        Self::from_parts(g, &atoms, &full.x, &patch.node_ids, Some(&patch.edge_ids))
    }

    fn from_parts(
        g: &PolymerGraph,
        atoms: &Matrix,
        extra: &Matrix,
        nodes: &[usize],
        edges: Option<&[usize]>,
    ) -> GraphInput {
        let cols = atoms.cols + extra.cols;
        let mut x = Matrix::zeros(nodes.len(), cols);
        let mut local = vec![usize::MAX; g.node_count()];
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
            if atoms.cols > 0 {
                x.row_mut(i)[..atoms.cols].copy_from_slice(atoms.row(v));
            }
            x.row_mut(i)[atoms.cols..].copy_from_slice(extra.row(v));
        }
        let edge_ids: Vec<usize> = match edges {
            Some(ids) => ids.to_vec(),
            None => (0..g.edge_count()).collect(),
        };
        let mut edge_x = Matrix::zeros(edge_ids.len(), EDGE_FEATURES);
        let (mut src, mut dst, mut weight) = (Vec::new(), Vec::new(), Vec::new());
        for (r, &e) in edge_ids.iter().enumerate() {
            let edge = &g.edges[e];
            edge_x
                .row_mut(r)
                .copy_from_slice(&edge_feature(edge.bond_order, edge.stochastic));
            src.push(local[edge.src]);
            dst.push(local[edge.dst]);
            weight.push(edge.weight);
        }
        GraphInput {
            x,
            edge_x,
            src: Arc::new(src),
            dst: Arc::new(dst),
            weight: Arc::new(weight),
            nodes: nodes.to_vec(),
        }
    }
}

/// A graph with its whole-graph encoder input, keyed for seed derivation.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub key: u64,
    pub graph: PolymerGraph,
    pub input: GraphInput,
}

impl PreparedGraph {
    pub fn new(key: u64, graph: PolymerGraph, pe_steps: usize) -> Self {
        let input = GraphInput::full(&graph, pe_steps);
        Self { key, graph, input }
    }
}

/// Node embeddings (N × hidden) for `input`, reading node inputs from `x`.
pub fn encode_nodes_with(
    tape: &mut Tape,
    params: &Bound,
    prefix: &str,
    input: &GraphInput,
    x: Var,
    cfg: &EncoderConfig,
) -> Result<Var, EncoderError> {
    let p = |name: &str| params.var(&format!("{prefix}.{name}"));
    let n = input.node_count();
    let h0 = tape.linear(x, p("in.W"), p("in.b"))?;
    let h0 = tape.relu(h0);
    let e = tape.constant(input.edge_x.clone());
    let mut h = h0;
    for _ in 0..cfg.depth {
        let hs = tape.gather_rows(h, input.src.clone())?;
        let he = tape.concat(&[hs, e])?;
        let msg = tape.linear(he, p("msg.W"), p("msg.b"))?;
        let msg = tape.relu(msg);
        let m = tape.scatter_weighted(msg, input.dst.clone(), input.weight.clone(), n)?;
        let hm = tape.concat(&[h, m])?;
        let upd = tape.linear(hm, p("upd.W"), p("upd.b"))?;
        let sum = tape.add(h0, upd)?;
        h = tape.relu(sum);
    }
    Ok(h)
}

pub fn encode_nodes(
    tape: &mut Tape,
    params: &Bound,
    prefix: &str,
    input: &GraphInput,
    cfg: &EncoderConfig,
) -> Result<Var, EncoderError> {
    let x = tape.constant(input.x.clone());
    encode_nodes_with(tape, params, prefix, input, x, cfg)
}

/// Mean of all node rows.
pub fn pool_graph(tape: &mut Tape, h: Var) -> Result<Var, EncoderError> {
    if tape.shape(h).0 == 0 {
        return Err(EncoderError::EmptyPatch);
    }
    Ok(tape.mean_all_rows(h)?)
}

/// Mean of the rows listed in `rows`.
pub fn pool_patch(tape: &mut Tape, h: Var, rows: &[usize]) -> Result<Var, EncoderError> {
    pool_patches(tape, h, vec![rows.to_vec()])
}

/// One pooled row per group of node rows.
pub fn pool_patches(tape: &mut Tape, h: Var, groups: Vec<Vec<usize>>) -> Result<Var, EncoderError> {
    if groups.iter().any(Vec::is_empty) {
        return Err(EncoderError::EmptyPatch);
    }
    Ok(tape.mean_rows(h, Arc::new(groups))?)
}

/// Graph embedding (1 × hidden) with fixed parameters, outside of training.
pub fn embed_graph(
    params: &ParamSet,
    prefix: &str,
    input: &GraphInput,
    cfg: &EncoderConfig,
) -> Result<Matrix, EncoderError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let h = encode_nodes(&mut tape, &bound, prefix, input, cfg)?;
    let pooled = pool_graph(&mut tape, h)?;
    Ok(tape.value(pooled).clone())
}
