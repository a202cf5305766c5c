use super::{size_for, uncovered, PartitionError, Patch};
use crate::polymer::PolymerGraph;
use crate::seed::rng_from;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Walk until `size` distinct nodes are gathered. Each step moves to a
/// random unvisited neighbor of the current node; when none exists the
/// walk resumes from a random visited node that still has one.
pub(super) fn walk(
    adj: &[Vec<usize>],
    start: usize,
    forced_next: Option<usize>,
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut visited = vec![false; adj.len()];
    let mut order = vec![start];
    visited[start] = true;
    if let Some(v) = forced_next {
        if !visited[v] && order.len() < size {
            visited[v] = true;
            order.push(v);
        }
    }
    let mut current = *order.last().expect("walk starts with a node");
    while order.len() < size {
        let fresh: Vec<usize> = adj[current].iter().copied().filter(|&u| !visited[u]).collect();
        if !fresh.is_empty() {
            let next = fresh[rng.gen_range(0..fresh.len())];
            visited[next] = true;
            order.push(next);
            current = next;
            continue;
        }
        let resumable: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&v| adj[v].iter().any(|&u| !visited[u]))
            .collect();
        if resumable.is_empty() {
            break;
        }
        current = resumable[rng.gen_range(0..resumable.len())];
    }
    order
}

/// `count` seeded random-walk patches of `⌈size_frac·N⌉` nodes, followed by
/// top-up walks until every node and directed edge is covered. Top-up
/// walks start on an uncovered edge and have at least two nodes.
pub fn random_walk_patches(
    g: &PolymerGraph,
    size_frac: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Patch>, PartitionError> {
    let n = g.node_count();
    let size = size_for(size_frac, n)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let adj = g.neighbor_lists();
    let mut rng = rng_from(&[seed, 0x5741_4c4b]);
    let mut patches: Vec<Patch> = (0..count)
        .map(|_| {
            let start = rng.gen_range(0..n);
            Patch::induced(g, walk(&adj, start, None, size, &mut rng))
        })
        .collect();
    loop {
        let (nodes, edges) = uncovered(g, &patches);
        let (start, next) = match (edges.first(), nodes.first()) {
            (Some(&e), _) => (g.edges[e].src, Some(g.edges[e].dst)),
            (None, Some(&v)) => (v, None),
            (None, None) => break,
        };
        let nodes = walk(&adj, start, next, size.max(2), &mut rng);
        patches.push(Patch::induced(g, nodes));
    }
    Ok(patches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic_dataset;

    #[test]
    fn full_size_walk_is_whole_graph() {
        let s = &generate_synthetic_dataset(1, 3).unwrap()[0];
        let p = random_walk_patches(&s.graph, 1.0, 1, 9).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].len(), s.graph.node_count());
        assert_eq!(p[0].edge_ids.len(), s.graph.edge_count());
    }

    #[test]
    fn out_of_range_fraction() {
        let s = &generate_synthetic_dataset(1, 3).unwrap()[0];
        assert_eq!(
            random_walk_patches(&s.graph, 0.0, 3, 1),
            Err(PartitionError::SizeOutOfRange(0.0))
        );
    }
}
