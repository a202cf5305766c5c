use super::{blocks_with_cut_edges, PartitionError, Patch};
use crate::polymer::PolymerGraph;
use std::collections::{BTreeMap, VecDeque};

const MAX_PASSES: usize = 20;
const GAIN_EPS: f64 = 1e-12;

/// Symmetrized edge weights keyed by (lower, higher) node: the mean of
/// the two directed weights, summed over parallel edges.
pub fn undirected_weights(g: &PolymerGraph) -> BTreeMap<(usize, usize), f64> {
    let mut w = BTreeMap::new();
    for e in &g.edges {
        if e.src == e.dst {
            continue;
        }
        let key = (e.src.min(e.dst), e.src.max(e.dst));
        *w.entry(key).or_insert(0.0) += 0.5 * e.weight;
    }
    w
}

/// Total undirected weight crossing between blocks.
pub fn cut_weight(g: &PolymerGraph, assignment: &[usize]) -> f64 {
    undirected_weights(g)
        .into_iter()
        .filter(|&((u, v), _)| assignment[u] != assignment[v])
        .map(|(_, w)| w)
        .sum()
}

fn bfs_hops(adj: &[Vec<(usize, f64)>], src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(v) = queue.pop_front() {
        for &(u, _) in &adj[v] {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    dist
}

/// Seeds spread out by repeated farthest-point selection.
fn farthest_seeds(adj: &[Vec<(usize, f64)>], k: usize) -> Vec<usize> {
    let n = adj.len();
    let from_zero = bfs_hops(adj, 0);
    let first = (0..n)
        .max_by_key(|&v| (from_zero[v].min(n), std::cmp::Reverse(v)))
        .unwrap_or(0);
    let mut seeds = vec![first];
    let mut nearest = bfs_hops(adj, first);
    while seeds.len() < k {
        let next = (0..n)
            .filter(|v| !seeds.contains(v))
            .max_by_key(|&v| (nearest[v], std::cmp::Reverse(v)))
            .expect("k ≤ n leaves a free node");
        seeds.push(next);
        for (d, nd) in nearest.iter_mut().zip(bfs_hops(adj, next)) {
            *d = (*d).min(nd);
        }
    }
    seeds
}

fn connection(adj: &[Vec<(usize, f64)>], assignment: &[usize], v: usize, block: usize) -> f64 {
    adj[v]
        .iter()
        .filter(|&&(u, _)| assignment[u] == block)
        .map(|&(_, w)| w)
        .sum()
}

/// Balanced k-way block assignment: greedy region growing from spread-out
/// seeds, then boundary-move refinement passes that reduce the weighted cut.
pub fn metis_like_assignment(g: &PolymerGraph, k: usize) -> Result<Vec<usize>, PartitionError> {
    let n = g.node_count();
    if k == 0 || k > n {
        return Err(PartitionError::TooManyParts { parts: k, nodes: n });
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for ((u, v), w) in undirected_weights(g) {
        adj[u].push((v, w));
        adj[v].push((u, w));
    }

    const FREE: usize = usize::MAX;
    let mut assignment = vec![FREE; n];
    let mut sizes = vec![1usize; k];
    for (b, s) in farthest_seeds(&adj, k).into_iter().enumerate() {
        assignment[s] = b;
    }
    let cap = n.div_ceil(k);
    loop {
        let mut grew = false;
        for b in 0..k {
            if sizes[b] >= cap {
                continue;
            }
            let best = (0..n)
                .filter(|&v| assignment[v] == FREE && adj[v].iter().any(|&(u, _)| assignment[u] == b))
                .map(|v| (v, connection(&adj, &assignment, v, b)))
                .fold(None, |acc: Option<(usize, f64)>, (v, c)| match acc {
                    Some((_, bc)) if bc >= c => acc,
                    _ => Some((v, c)),
                });
            if let Some((v, _)) = best {
                assignment[v] = b;
                sizes[b] += 1;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    for v in 0..n {
        if assignment[v] != FREE {
            continue;
        }
        let b = (0..k)
            .min_by(|&a, &b| {
                let ca = connection(&adj, &assignment, v, a);
                let cb = connection(&adj, &assignment, v, b);
                cb.total_cmp(&ca).then(sizes[a].cmp(&sizes[b])).then(a.cmp(&b))
            })
            .expect("k ≥ 2");
        assignment[v] = b;
        sizes[b] += 1;
    }

    let lo = ((0.75 * n as f64 / k as f64).floor() as usize).max(1);
    let hi = ((1.25 * n as f64 / k as f64).ceil() as usize).max(cap);
    for _ in 0..MAX_PASSES {
        if !refine_pass(&adj, &mut assignment, &mut sizes, lo, hi) {
            break;
        }
    }
    Ok(assignment)
}

/// One pass of single-node moves with locking; keeps the best prefix.
/// Returns whether the cut decreased.
fn refine_pass(adj: &[Vec<(usize, f64)>], assignment: &mut [usize], sizes: &mut [usize], lo: usize, hi: usize) -> bool {
    let n = adj.len();
    let mut locked = vec![false; n];
    let mut moves: Vec<(usize, usize, usize)> = Vec::new();
    let (mut total, mut best, mut best_len) = (0.0, 0.0, 0);
    loop {
        let mut choice: Option<(usize, usize, f64)> = None;
        for v in 0..n {
            let own = assignment[v];
            if locked[v] || sizes[own] <= lo {
                continue;
            }
            let stay = connection(adj, assignment, v, own);
            let mut dests: Vec<usize> = adj[v]
                .iter()
                .map(|&(u, _)| assignment[u])
                .filter(|&b| b != own)
                .collect();
            dests.sort_unstable();
            dests.dedup();
            for dest in dests {
                if sizes[dest] >= hi {
                    continue;
                }
                let gain = connection(adj, assignment, v, dest) - stay;
                if choice.is_none_or(|(_, _, g)| gain > g + GAIN_EPS) {
                    choice = Some((v, dest, gain));
                }
            }
        }
        let Some((v, dest, gain)) = choice else { break };
        let own = assignment[v];
        assignment[v] = dest;
        sizes[own] -= 1;
        sizes[dest] += 1;
        locked[v] = true;
        moves.push((v, own, dest));
        total += gain;
        if total > best + GAIN_EPS {
            best = total;
            best_len = moves.len();
        }
    }
    for &(v, own, dest) in moves[best_len..].iter().rev() {
        assignment[v] = own;
        sizes[dest] -= 1;
        sizes[own] += 1;
    }
    best > GAIN_EPS
}

/// Blocks of [`metis_like_assignment`] as patches, with each cut edge
/// added to the block of its lower endpoint.
pub fn metis_like_patches(g: &PolymerGraph, k: usize) -> Result<Vec<Patch>, PartitionError> {
    let assignment = metis_like_assignment(g, k)?;
    Ok(blocks_with_cut_edges(g, &assignment, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic_dataset;

    #[test]
    fn single_part_is_whole_graph() {
        let g = &generate_synthetic_dataset(1, 5).unwrap()[0].graph;
        let p = metis_like_patches(g, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].len(), g.node_count());
        assert_eq!(cut_weight(g, &vec![0; g.node_count()]), 0.0);
    }

    #[test]
    fn too_many_parts() {
        let g = &generate_synthetic_dataset(1, 5).unwrap()[0].graph;
        let n = g.node_count();
        assert_eq!(
            metis_like_assignment(g, n + 1),
            Err(PartitionError::TooManyParts { parts: n + 1, nodes: n })
        );
        assert!(metis_like_assignment(g, n).is_ok());
    }
}
