//! Patch generation and context/target selection.
//!
//! Three patch generators share one output type: a random-walk sampler,
//! a balanced min-cut partitioner, and a rule-based fragmenter. Every
//! generator returns patches that jointly cover all nodes and all directed
//! edges of the graph. [`select_context_and_targets`] then picks target
//! patches and unions other patches into a context.

mod metis;
mod motif;
mod random_walk;
mod select;

use crate::polymer::PolymerGraph;
use serde::{Deserialize, Serialize};

pub use metis::{cut_weight, metis_like_assignment, metis_like_patches, undirected_weights};
pub use motif::motif_patches;
pub use random_walk::random_walk_patches;
pub use select::{select_context_and_targets, PatchSelection, MAX_SELECTION_ATTEMPTS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PartitionError {
    #[error("patch size fraction {0} outside (0, 1]")]
    SizeOutOfRange(f64),
    #[error("cannot split {nodes} nodes into {parts} parts")]
    TooManyParts { parts: usize, nodes: usize },
    #[error("no valid context/target selection: {0}")]
    SelectionInfeasible(String),
}

/// Node subset with the directed edges induced on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    /// Ascending, distinct.
    pub node_ids: Vec<usize>,
    /// Ascending edge indices into the graph.
    pub edge_ids: Vec<usize>,
}

impl Patch {
    pub fn induced(g: &PolymerGraph, nodes: impl IntoIterator<Item = usize>) -> Patch {
        let mut member = vec![false; g.node_count()];
        for v in nodes {
            member[v] = true;
        }
        let node_ids: Vec<usize> = (0..member.len()).filter(|&v| member[v]).collect();
        let edge_ids = g
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| member[e.src] && member[e.dst])
            .map(|(i, _)| i)
            .collect();
        Patch { node_ids, edge_ids }
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.node_ids.binary_search(&v).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SubgraphAlgorithm {
    #[default]
    RandomWalk,
    Metis,
    Motif,
}

impl SubgraphAlgorithm {
    pub const ALL: [SubgraphAlgorithm; 3] = [Self::RandomWalk, Self::Metis, Self::Motif];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RandomWalk => "random_walk",
            Self::Metis => "metis",
            Self::Motif => "motif",
        }
    }
}

impl std::fmt::Display for SubgraphAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SubgraphAlgorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown subgraph algorithm {s:?}"))
    }
}

/// Patch pool for one graph as used during pretraining. Random-walk pools
/// use target-sized walks; the partitioner aims for target-sized blocks.
pub fn patch_pool(
    g: &PolymerGraph,
    algorithm: SubgraphAlgorithm,
    target_frac: f64,
    seed: u64,
) -> Result<Vec<Patch>, PartitionError> {
    let n = g.node_count();
    match algorithm {
        SubgraphAlgorithm::RandomWalk => {
            let size = size_for(target_frac, n)?;
            random_walk_patches(g, target_frac, (2 * n).div_ceil(size.max(1)), seed)
        }
        SubgraphAlgorithm::Metis => {
            let size = size_for(target_frac, n)?;
            let k = n.div_ceil(size).clamp(1, n.max(1));
            metis_like_patches(g, k)
        }
        SubgraphAlgorithm::Motif => Ok(motif_patches(g)),
    }
}

/// `⌈frac·n⌉` with a small tolerance for representation error.
pub fn size_for(frac: f64, n: usize) -> Result<usize, PartitionError> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(PartitionError::SizeOutOfRange(frac));
    }
    Ok(((frac * n as f64) - 1e-9).ceil().max(1.0) as usize)
}

/// Nodes and edges not covered by any patch.
pub fn uncovered(g: &PolymerGraph, patches: &[Patch]) -> (Vec<usize>, Vec<usize>) {
    let mut node_seen = vec![false; g.node_count()];
    let mut edge_seen = vec![false; g.edge_count()];
    for p in patches {
        for &v in &p.node_ids {
            node_seen[v] = true;
        }
        for &e in &p.edge_ids {
            edge_seen[e] = true;
        }
    }
    (
        (0..node_seen.len()).filter(|&v| !node_seen[v]).collect(),
        (0..edge_seen.len()).filter(|&e| !edge_seen[e]).collect(),
    )
}

/// Turn a block assignment into patches, then extend the block of each
/// cut edge's lower endpoint with the other endpoint so the edge is covered.
pub(crate) fn blocks_with_cut_edges(g: &PolymerGraph, assignment: &[usize], blocks: usize) -> Vec<Patch> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); blocks];
    for (v, &b) in assignment.iter().enumerate() {
        members[b].push(v);
    }
    for e in &g.edges {
        if assignment[e.src] != assignment[e.dst] {
            let (lo, hi) = if e.src < e.dst { (e.src, e.dst) } else { (e.dst, e.src) };
            members[assignment[lo]].push(hi);
        }
    }
    members
        .into_iter()
        .filter(|m| !m.is_empty())
        .map(|m| Patch::induced(g, m))
        .collect()
}
