//! Random-walk return probabilities at node and patch level.

use crate::diff::Matrix;
use crate::partition::PatchSelection;
use crate::polymer::PolymerGraph;

pub const NODE_PE_STEPS: usize = 16;
pub const PATCH_PE_STEPS: usize = 4;

/// `out[v][k-1]` is the probability that a walk from `v` following
/// out-edges with probability proportional to weight is back at `v`
/// after `k` steps. Nodes without outgoing weight get all-zero rows.
pub fn rwse_from_edges(n: usize, edges: &[(usize, usize, f64)], steps: usize) -> Matrix {
    let mut out_weight = vec![0.0; n];
    for &(s, _, w) in edges {
        out_weight[s] += w;
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(s, d, w) in edges {
        if out_weight[s] > 0.0 && w != 0.0 {
            adj[s].push((d, w / out_weight[s]));
        }
    }
    let mut pe = Matrix::zeros(n, steps);
    let mut dist = vec![0.0; n];
    let mut next = vec![0.0; n];
    for v in 0..n {
        if out_weight[v] <= 0.0 {
            continue;
        }
        dist.iter_mut().for_each(|x| *x = 0.0);
        dist[v] = 1.0;
        for k in 0..steps {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (u, &mass) in dist.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for &(d, p) in &adj[u] {
                    next[d] += mass * p;
                }
            }
            std::mem::swap(&mut dist, &mut next);
            pe.set(v, k, dist[v]);
        }
    }
    pe
}

/// Node-level encoding on the weighted polymer graph.
pub fn node_rwse(g: &PolymerGraph, steps: usize) -> Matrix {
    let edges: Vec<(usize, usize, f64)> = g.edges.iter().map(|e| (e.src, e.dst, e.weight)).collect();
    rwse_from_edges(g.node_count(), &edges, steps)
}

/// Unweighted graph over `[context, target_1, …, target_m]`: two patches
/// are linked when they share a node or an edge of `g` joins them.
pub fn coarse_patch_edges(selection: &PatchSelection, g: &PolymerGraph) -> Vec<(usize, usize, f64)> {
    let mut patches = vec![&selection.context];
    patches.extend(selection.targets.iter());
    let n = g.node_count();
    let masks: Vec<Vec<bool>> = patches
        .iter()
        .map(|p| {
            let mut m = vec![false; n];
            p.node_ids.iter().for_each(|&v| m[v] = true);
            m
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..patches.len() {
        for b in (a + 1)..patches.len() {
            let shared = patches[a].node_ids.iter().any(|&v| masks[b][v]);
            let joined = shared || g.edges.iter().any(|e| masks[a][e.src] && masks[b][e.dst]);
            if joined {
                edges.push((a, b, 1.0));
                edges.push((b, a, 1.0));
            }
        }
    }
    edges
}

/// Patch-level encoding; row 0 is the context, row `1 + i` is target `i`.
pub fn patch_rwse(selection: &PatchSelection, g: &PolymerGraph, steps: usize) -> Matrix {
    let edges = coarse_patch_edges(selection, g);
    rwse_from_edges(1 + selection.targets.len(), &edges, steps)
}
