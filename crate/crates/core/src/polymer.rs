//! Stochastic polymer graphs: two monomer graphs joined by weighted
//! directed edges whose weights are connection probabilities.

use crate::chem::{atomic_mass, hydrogen_counts, AtomNode, BondOrder, Monomer, HYDROGEN_MASS};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const STOICHIOMETRY_TOLERANCE: f64 = 1e-9;

/// Self-link probability for block copolymers.
pub const BLOCK_SELF_WEIGHT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolymerError {
    #[error("monomer {0} has no attachment point")]
    NoAttachmentPoint(MonomerId),
    #[error("invalid stoichiometry ({0}, {1})")]
    InvalidStoichiometry(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MonomerId {
    A,
    B,
}

impl fmt::Display for MonomerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MonomerId::A => "A",
            MonomerId::B => "B",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Alternating,
    Random,
    Block,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Alternating, Architecture::Random, Architecture::Block];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Alternating => "alternating",
            Architecture::Random => "random",
            Architecture::Block => "block",
        }
    }

    /// Probability mass an attachment point of a monomer sends to its own
    /// monomer and to the other one.
    fn budgets(self, own_frac: f64, other_frac: f64) -> (f64, f64) {
        match self {
            Architecture::Alternating => (0.0, 1.0),
            Architecture::Random => (own_frac, other_frac),
            Architecture::Block => (BLOCK_SELF_WEIGHT, 1.0 - BLOCK_SELF_WEIGHT),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alternating" => Ok(Architecture::Alternating),
            "random" => Ok(Architecture::Random),
            "block" => Ok(Architecture::Block),
            other => Err(format!("unknown architecture {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolymerNode {
    pub atom: AtomNode,
    pub monomer: MonomerId,
    pub hydrogens: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectedEdge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
    pub stochastic: bool,
    pub bond_order: BondOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolymerGraph {
    pub nodes: Vec<PolymerNode>,
    /// Sorted by (src, dst, stochastic).
    pub edges: Vec<DirectedEdge>,
    pub stoichiometry: (f64, f64),
    pub architecture: Architecture,
    /// Node indices of attachment atoms; may repeat.
    pub attachment_nodes: Vec<usize>,
    pub pseudolabel_mw: f64,
}

fn check_stoichiometry(stoich: (f64, f64)) -> Result<(), PolymerError> {
    let (fa, fb) = stoich;
    let ok = fa.is_finite()
        && fb.is_finite()
        && (0.0..=1.0).contains(&fa)
        && (0.0..=1.0).contains(&fb)
        && (fa + fb - 1.0).abs() <= STOICHIOMETRY_TOLERANCE;
    if ok {
        Ok(())
    } else {
        Err(PolymerError::InvalidStoichiometry(fa, fb))
    }
}

fn push_monomer(nodes: &mut Vec<PolymerNode>, edges: &mut Vec<DirectedEdge>, m: &Monomer, id: MonomerId) -> usize {
    let offset = nodes.len();
    for (atom, h) in m.atoms.iter().zip(hydrogen_counts(m)) {
        nodes.push(PolymerNode {
            atom: atom.clone(),
            monomer: id,
            hydrogens: h,
        });
    }
    for bond in &m.bonds {
        for (s, d) in [(bond.a, bond.b), (bond.b, bond.a)] {
            edges.push(DirectedEdge {
                src: offset + s,
                dst: offset + d,
                weight: 1.0,
                stochastic: false,
                bond_order: bond.order,
            });
        }
    }
    offset
}

/// Spread `budget` uniformly over `targets`, accumulating per (src, dst).
fn spread(acc: &mut BTreeMap<(usize, usize), f64>, src: usize, targets: &[usize], budget: f64) {
    if budget <= 0.0 || targets.is_empty() {
        return;
    }
    let share = budget / targets.len() as f64;
    for &t in targets {
        *acc.entry((src, t)).or_insert(0.0) += share;
    }
}

fn finish_edges(edges: &mut Vec<DirectedEdge>, stochastic: BTreeMap<(usize, usize), f64>) {
    edges.extend(stochastic.into_iter().map(|((src, dst), weight)| DirectedEdge {
        src,
        dst,
        weight,
        stochastic: true,
        bond_order: BondOrder::Single,
    }));
    edges.sort_by_key(|a| (a.src, a.dst, a.stochastic));
}

/// Join two monomers into a stochastic polymer graph.
///
/// Each attachment point distributes one unit of connection probability:
/// alternating sends everything to the other monomer, random sends
/// `frac(Y)` toward monomer Y, block keeps 0.9 on its own monomer. Within
/// a group the mass is split evenly over the group's attachment atoms (an
/// attachment never links to its own atom); a group with no eligible atom
/// hands its mass to the other group.
pub fn build_polymer(
    a: &Monomer,
    b: &Monomer,
    stoich: (f64, f64),
    arch: Architecture,
) -> Result<PolymerGraph, PolymerError> {
    if a.attachment_points.is_empty() {
        return Err(PolymerError::NoAttachmentPoint(MonomerId::A));
    }
    if b.attachment_points.is_empty() {
        return Err(PolymerError::NoAttachmentPoint(MonomerId::B));
    }
    check_stoichiometry(stoich)?;
    if arch == Architecture::Random && (stoich.0 <= 0.0 || stoich.1 <= 0.0) {
        // a zero fraction would leave one direction of the cross links without weight
        return Err(PolymerError::InvalidStoichiometry(stoich.0, stoich.1));
    }

    let mut nodes = Vec::with_capacity(a.atoms.len() + b.atoms.len());
    let mut edges = Vec::new();
    let off_a = push_monomer(&mut nodes, &mut edges, a, MonomerId::A);
    let off_b = push_monomer(&mut nodes, &mut edges, b, MonomerId::B);
    let att_a: Vec<usize> = a.attachment_points.iter().map(|&i| off_a + i).collect();
    let att_b: Vec<usize> = b.attachment_points.iter().map(|&i| off_b + i).collect();

    let mut stochastic = BTreeMap::new();
    for (own, other, own_frac, other_frac) in [
        (&att_a, &att_b, stoich.0, stoich.1),
        (&att_b, &att_a, stoich.1, stoich.0),
    ] {
        let (same_budget, cross_budget) = arch.budgets(own_frac, other_frac);
        let mut sources = own.clone();
        sources.sort_unstable();
        sources.dedup();
        for src in sources {
            let same: Vec<usize> = own.iter().copied().filter(|&t| t != src).collect();
            if same.is_empty() {
                spread(&mut stochastic, src, other, same_budget + cross_budget);
            } else {
                spread(&mut stochastic, src, &same, same_budget);
                spread(&mut stochastic, src, other, cross_budget);
            }
        }
    }
    finish_edges(&mut edges, stochastic);

    let mut graph = PolymerGraph {
        nodes,
        edges,
        stoichiometry: stoich,
        architecture: arch,
        attachment_nodes: att_a.into_iter().chain(att_b).collect(),
        pseudolabel_mw: 0.0,
    };
    graph.pseudolabel_mw = molecular_weight(&graph);
    Ok(graph)
}

/// Mass of the atoms (plus implicit hydrogens) belonging to one monomer.
pub fn monomer_mass_in_graph(graph: &PolymerGraph, id: MonomerId) -> f64 {
    graph
        .nodes
        .iter()
        .filter(|n| n.monomer == id)
        .map(|n| atomic_mass(n.atom.element) + f64::from(n.hydrogens) * HYDROGEN_MASS)
        .sum()
}

/// Stoichiometry-weighted mean of two monomer masses.
pub fn blend_molecular_weight(mw_a: f64, mw_b: f64, stoich: (f64, f64)) -> f64 {
    stoich.0 * mw_a + stoich.1 * mw_b
}

/// Stoichiometry-weighted molecular weight of the repeat units (g/mol).
pub fn molecular_weight(graph: &PolymerGraph) -> f64 {
    blend_molecular_weight(
        monomer_mass_in_graph(graph, MonomerId::A),
        monomer_mass_in_graph(graph, MonomerId::B),
        graph.stoichiometry,
    )
}

impl PolymerGraph {
    /// Graph made from a single monomer; every node belongs to monomer A.
    /// Attachment atoms are linked head-to-tail with uniform weights.
    pub fn from_single_monomer(m: &Monomer) -> PolymerGraph {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        push_monomer(&mut nodes, &mut edges, m, MonomerId::A);
        let mut stochastic = BTreeMap::new();
        let mut sources = m.attachment_points.clone();
        sources.sort_unstable();
        sources.dedup();
        for src in sources {
            let same: Vec<usize> = m.attachment_points.iter().copied().filter(|&t| t != src).collect();
            spread(&mut stochastic, src, &same, 1.0);
        }
        finish_edges(&mut edges, stochastic);
        let mut graph = PolymerGraph {
            nodes,
            edges,
            stoichiometry: (1.0, 0.0),
            architecture: Architecture::Alternating,
            attachment_nodes: m.attachment_points.clone(),
            pseudolabel_mw: 0.0,
        };
        graph.pseudolabel_mw = molecular_weight(&graph);
        graph
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Outgoing edge ids per node, ascending by destination.
    pub fn out_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            out[e.src].push(i);
        }
        out
    }

    /// Distinct neighbor lists (ascending), ignoring weights and direction.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.src].push(e.dst);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Index of the reverse edge for every edge, if present.
    pub fn reverse_edge_ids(&self) -> Vec<Option<usize>> {
        self.edges
            .iter()
            .map(|e| {
                self.edges
                    .binary_search_by(|probe| {
                        (probe.src, probe.dst, probe.stochastic).cmp(&(e.dst, e.src, e.stochastic))
                    })
                    .ok()
            })
            .collect()
    }

    pub fn has_both_monomers(&self) -> bool {
        self.nodes.iter().any(|n| n.monomer == MonomerId::A) && self.nodes.iter().any(|n| n.monomer == MonomerId::B)
    }

    /// Sum of outgoing stochastic weights of each distinct attachment atom.
    pub fn attachment_weight_sums(&self) -> Vec<(usize, f64)> {
        let mut atoms = self.attachment_nodes.clone();
        atoms.sort_unstable();
        atoms.dedup();
        atoms
            .into_iter()
            .map(|v| {
                let total = self
                    .edges
                    .iter()
                    .filter(|e| e.stochastic && e.src == v)
                    .map(|e| e.weight)
                    .sum();
                (v, total)
            })
            .collect()
    }

    /// Multiply every edge weight of the directed pair u↔v by `factor`
    /// (stochastic edges only).
    pub fn scale_stochastic_pair(&mut self, u: usize, v: usize, factor: f64) {
        for e in &mut self.edges {
            if e.stochastic && ((e.src == u && e.dst == v) || (e.src == v && e.dst == u)) {
                e.weight *= factor;
            }
        }
    }

    /// Remove the stochastic edges between u and v in both directions.
    pub fn remove_stochastic_pair(&mut self, u: usize, v: usize) {
        self.edges
            .retain(|e| !(e.stochastic && ((e.src == u && e.dst == v) || (e.src == v && e.dst == u))));
    }

    /// Relabel nodes: node `i` moves to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> PolymerGraph {
        assert_eq!(perm.len(), self.nodes.len());
        let mut nodes = self.nodes.clone();
        for (i, node) in self.nodes.iter().enumerate() {
            nodes[perm[i]] = node.clone();
        }
        let mut edges: Vec<DirectedEdge> = self
            .edges
            .iter()
            .map(|e| DirectedEdge {
                src: perm[e.src],
                dst: perm[e.dst],
                ..*e
            })
            .collect();
        edges.sort_by_key(|a| (a.src, a.dst, a.stochastic));
        PolymerGraph {
            nodes,
            edges,
            stoichiometry: self.stoichiometry,
            architecture: self.architecture,
            attachment_nodes: self.attachment_nodes.iter().map(|&v| perm[v]).collect(),
            pseudolabel_mw: self.pseudolabel_mw,
        }
    }

    /// Check the structural invariants; returns a description of the first
    /// violation.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.nodes.len();
        for (i, e) in self.edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                return Err(format!("edge {i} out of range"));
            }
            if !e.stochastic && e.weight != 1.0 {
                return Err(format!("deterministic edge {i} has weight {}", e.weight));
            }
            if e.stochastic && !(e.weight > 0.0 && e.weight <= 1.0) {
                return Err(format!("stochastic edge {i} has weight {}", e.weight));
            }
        }
        if let Some(i) = self.reverse_edge_ids().iter().position(Option::is_none) {
            return Err(format!("edge {i} has no reverse"));
        }
        for (v, total) in self.attachment_weight_sums() {
            let has_any = self.edges.iter().any(|e| e.stochastic && e.src == v);
            if has_any && (total - 1.0).abs() > 1e-9 {
                return Err(format!("attachment {v} weights sum to {total}"));
            }
        }
        Ok(())
    }
}
