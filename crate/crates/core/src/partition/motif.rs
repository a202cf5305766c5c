use super::{blocks_with_cut_edges, Patch};
use crate::chem::{Bond, BondOrder, Element, Monomer};
use crate::polymer::PolymerGraph;

/// Deterministic fragmentation into chemically coherent pieces.
///
/// Cut bonds: every stochastic link; acyclic single bonds with exactly one
/// endpoint that is aromatic or on a ring; acyclic single bonds between
/// carbon and a heteroatom. Connected pieces of what remains become
/// patches, and each cut edge joins the patch of its lower endpoint.
pub fn motif_patches(g: &PolymerGraph) -> Vec<Patch> {
    let n = g.node_count();
    let bonds: Vec<Bond> = g
        .edges
        .iter()
        .filter(|e| !e.stochastic && e.src < e.dst)
        .map(|e| Bond {
            a: e.src,
            b: e.dst,
            order: e.bond_order,
        })
        .collect();
    let skeleton = Monomer {
        atoms: g.nodes.iter().map(|v| v.atom.clone()).collect(),
        bonds,
        attachment_points: Vec::new(),
    };
    let ring = skeleton.ring_bonds();
    let mut in_ring = vec![false; n];
    for (bond, &r) in skeleton.bonds.iter().zip(&ring) {
        if r {
            in_ring[bond.a] = true;
            in_ring[bond.b] = true;
        }
    }
    let ringish = |v: usize| in_ring[v] || g.nodes[v].atom.aromatic;
    let hetero = |v: usize| !matches!(g.nodes[v].atom.element, Element::C | Element::H);
    let carbon = |v: usize| g.nodes[v].atom.element == Element::C;

    // union-find over kept bonds
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for (bond, &r) in skeleton.bonds.iter().zip(&ring) {
        let (a, b) = (bond.a, bond.b);
        let acyclic_single = !r && bond.order == BondOrder::Single;
        let cut =
            acyclic_single && ((ringish(a) != ringish(b)) || (carbon(a) && hetero(b)) || (carbon(b) && hetero(a)));
        if !cut {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut block_of_root = vec![usize::MAX; n];
    let mut assignment = vec![0; n];
    let mut blocks = 0;
    for v in 0..n {
        let r = find(&mut parent, v);
        if block_of_root[r] == usize::MAX {
            block_of_root[r] = blocks;
            blocks += 1;
        }
        assignment[v] = block_of_root[r];
    }
    blocks_with_cut_edges(g, &assignment, blocks)
}
