use super::random_walk::walk;
use super::{size_for, PartitionError, Patch};
use crate::polymer::{MonomerId, PolymerGraph};
use crate::seed::rng_from;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MAX_SELECTION_ATTEMPTS: usize = 50;

/// One context patch and `m` target patches drawn from a patch pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSelection {
    pub context: Patch,
    pub targets: Vec<Patch>,
    /// Pool entries unioned into the context.
    pub source_patch_ids: Vec<usize>,
    /// Pool entry each target was drawn from.
    pub target_patch_ids: Vec<usize>,
    /// The input patches followed by the leftovers of patches that were
    /// trimmed to target size; ids above index into this list.
    pub pool: Vec<Patch>,
    /// Set when the non-target pool could not reach the requested context size.
    pub context_shortfall: bool,
    pub attempts: usize,
}

/// Connected `size`-node piece of `patch`, found by a walk restricted to it.
fn trim(adj: &[Vec<usize>], patch: &Patch, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut inner: Vec<Vec<usize>> = vec![Vec::new(); adj.len()];
    for &v in &patch.node_ids {
        inner[v] = adj[v].iter().copied().filter(|&u| patch.contains(u)).collect();
    }
    let start = patch.node_ids[rng.gen_range(0..patch.len())];
    let mut nodes = walk(&inner, start, None, size, rng);
    while nodes.len() < size {
        let rest: Vec<usize> = patch.node_ids.iter().copied().filter(|v| !nodes.contains(v)).collect();
        nodes.push(rest[rng.gen_range(0..rest.len())]);
    }
    nodes
}

fn touches(adj: &[Vec<usize>], in_context: &[bool], patch: &Patch) -> bool {
    patch
        .node_ids
        .iter()
        .any(|&v| in_context[v] || adj[v].iter().any(|&u| in_context[u]))
}

/// Pick `m` target patches of `⌈target_frac·N⌉` nodes and union other
/// pool patches into a context of at least `context_frac·N` nodes.
///
/// Patches larger than the target size are trimmed to a connected piece;
/// the leftover joins the pool and may feed the context. Context patches
/// are taken adjacent-first, and patches free of target nodes before the
/// rest. The context must hold atoms of both monomers and be no smaller
/// than any target; up to [`MAX_SELECTION_ATTEMPTS`] reseeded attempts are made.
pub fn select_context_and_targets(
    patches: &[Patch],
    g: &PolymerGraph,
    context_frac: f64,
    target_frac: f64,
    m: usize,
    seed: u64,
) -> Result<PatchSelection, PartitionError> {
    let n = g.node_count();
    let target_size = size_for(target_frac, n)?;
    let context_size = size_for(context_frac, n)?;
    if m == 0 {
        return Err(PartitionError::SelectionInfeasible(
            "at least one target is required".into(),
        ));
    }
    if target_frac > context_frac {
        return Err(PartitionError::SelectionInfeasible(format!(
            "target fraction {target_frac} exceeds context fraction {context_frac}"
        )));
    }
    if !g.has_both_monomers() {
        return Err(PartitionError::SelectionInfeasible(
            "graph lacks one of the two monomers".into(),
        ));
    }
    let adj = g.neighbor_lists();
    for attempt in 0..MAX_SELECTION_ATTEMPTS {
        let mut rng = rng_from(&[seed, attempt as u64]);
        if let Some(mut sel) = try_select(patches, g, &adj, context_size, target_size, m, &mut rng) {
            sel.attempts = attempt + 1;
            return Ok(sel);
        }
    }
    Err(PartitionError::SelectionInfeasible(format!(
        "no valid selection in {MAX_SELECTION_ATTEMPTS} attempts"
    )))
}

fn try_select(
    patches: &[Patch],
    g: &PolymerGraph,
    adj: &[Vec<usize>],
    context_size: usize,
    target_size: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Option<PatchSelection> {
    let n = g.node_count();
    let mut pool = patches.to_vec();
    let mut order: Vec<usize> = (0..pool.len()).filter(|&i| !pool[i].is_empty()).collect();
    order.shuffle(rng);

    let mut targets = Vec::with_capacity(m);
    let mut target_ids = Vec::with_capacity(m);
    for &idx in &order {
        if targets.len() == m {
            break;
        }
        let patch = pool[idx].clone();
        if patch.len() > target_size {
            let piece = trim(adj, &patch, target_size, rng);
            let leftover: Vec<usize> = patch.node_ids.iter().copied().filter(|v| !piece.contains(v)).collect();
            pool.push(Patch::induced(g, leftover));
            targets.push(Patch::induced(g, piece));
        } else {
            targets.push(patch);
        }
        target_ids.push(idx);
    }
    if targets.len() < m {
        return None;
    }

    let mut in_target = vec![false; n];
    for t in &targets {
        for &v in &t.node_ids {
            in_target[v] = true;
        }
    }
    let mut candidates: Vec<usize> = (0..pool.len())
        .filter(|i| !target_ids.contains(i) && !pool[*i].is_empty())
        .collect();
    candidates.shuffle(rng);
    // target-free patches first; shuffled order kept within each group
    candidates.sort_by_key(|&i| pool[i].node_ids.iter().any(|&v| in_target[v]));

    let mut in_context = vec![false; n];
    let mut size = 0;
    let mut sources = Vec::new();
    let has = |in_context: &[bool], id: MonomerId| (0..n).any(|v| in_context[v] && g.nodes[v].monomer == id);
    while !candidates.is_empty() {
        let both = has(&in_context, MonomerId::A) && has(&in_context, MonomerId::B);
        if size >= context_size && both {
            break;
        }
        let clean_end = candidates
            .iter()
            .position(|&i| pool[i].node_ids.iter().any(|&v| in_target[v]))
            .unwrap_or(candidates.len());
        let group = if clean_end > 0 {
            0..clean_end
        } else {
            0..candidates.len()
        };
        let pick = if size == 0 {
            group.start
        } else {
            group
                .clone()
                .find(|&k| touches(adj, &in_context, &pool[candidates[k]]))
                .unwrap_or(group.start)
        };
        let id = candidates.remove(pick);
        let adds_new = pool[id].node_ids.iter().any(|&v| !in_context[v]);
        if !adds_new {
            continue;
        }
        for &v in &pool[id].node_ids {
            if !in_context[v] {
                in_context[v] = true;
                size += 1;
            }
        }
        sources.push(id);
    }
    if !(has(&in_context, MonomerId::A) && has(&in_context, MonomerId::B)) {
        return None;
    }
    if targets.iter().any(|t| t.len() > size) {
        return None;
    }
    sources.sort_unstable();
    Some(PatchSelection {
        context: Patch::induced(g, (0..n).filter(|&v| in_context[v])),
        targets,
        source_patch_ids: sources,
        target_patch_ids: target_ids,
        pool,
        context_shortfall: size < context_size,
        attempts: 0,
    })
}
