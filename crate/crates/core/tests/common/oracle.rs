//! Reference implementations written independently of the library code.

use polyjepa::chem::{AtomNode, BondOrder, Element, Monomer};
use polyjepa::partition::{Patch, PatchSelection};
use polyjepa::polymer::{Architecture, DirectedEdge, MonomerId, PolymerGraph, PolymerNode};
use std::collections::BTreeSet;

pub type Dense = Vec<Vec<f64>>;

pub fn transition(n: usize, edges: &[(usize, usize, f64)]) -> Dense {
    let mut p = vec![vec![0.0; n]; n];
    for &(s, d, w) in edges {
        p[s][d] += w;
    }
    for row in &mut p {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|x| *x /= total);
        }
    }
    p
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

/// Diagonals of P, P², …, Pᴷ.
pub fn rwse_oracle(n: usize, edges: &[(usize, usize, f64)], steps: usize) -> Dense {
    let p = transition(n, edges);
    let mut power = p.clone();
    let mut out = vec![vec![0.0; steps]; n];
    for k in 0..steps {
        for (v, row) in out.iter_mut().enumerate() {
            row[k] = power[v][v];
        }
        power = matmul(&power, &p);
    }
    out
}

/// Coarse graph built from scratch: patches are adjacent when they share a
/// node or some edge of the graph runs between them.
pub fn coarse_oracle(g: &PolymerGraph, patches: &[&[usize]]) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for a in 0..patches.len() {
        for b in 0..patches.len() {
            if a == b {
                continue;
            }
            let touch = patches[a].iter().any(|v| patches[b].contains(v))
                || g.edges
                    .iter()
                    .any(|e| patches[a].contains(&e.src) && patches[b].contains(&e.dst));
            if touch {
                edges.push((a, b, 1.0));
            }
        }
    }
    edges
}

/// Precision at every distinct score threshold, weighted by the recall gained there.
pub fn ap_brute_force(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let total_pos = positive.iter().filter(|&&p| p).count();
    if total_pos == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let selected: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
        let tp = selected.iter().filter(|&&i| positive[i]).count();
        let precision = tp as f64 / selected.len() as f64;
        let recall = tp as f64 / total_pos as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

pub fn mass_table(e: Element) -> f64 {
    match e {
        Element::H => 1.008,
        Element::B => 10.81,
        Element::C => 12.011,
        Element::N => 14.007,
        Element::O => 15.999,
        Element::F => 18.998,
        Element::P => 30.974,
        Element::S => 32.06,
        Element::Cl => 35.45,
        Element::Br => 79.904,
        Element::I => 126.904,
    }
}

pub fn valence_table(e: Element) -> f64 {
    match e {
        Element::C => 4.0,
        Element::N | Element::B | Element::P => 3.0,
        Element::O | Element::S => 2.0,
        Element::H | Element::F | Element::Cl | Element::Br | Element::I => 1.0,
    }
}

/// Heavy atoms plus hydrogens filling each atom's standard valence.
pub fn monomer_mass_oracle(m: &Monomer) -> f64 {
    let mut used = vec![0.0; m.atoms.len()];
    for b in &m.bonds {
        let order = match b.order {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Aromatic => 1.5,
        };
        used[b.a] += order;
        used[b.b] += order;
    }
    for &a in &m.attachment_points {
        used[a] += 1.0;
    }
    m.atoms
        .iter()
        .enumerate()
        .map(|(i, atom)| {
            let h = atom
                .explicit_hydrogens
                .map(f64::from)
                .unwrap_or_else(|| (valence_table(atom.element) - used[i]).max(0.0).floor());
            mass_table(atom.element) + h * 1.008
        })
        .sum()
}

pub fn ceil_frac(frac: f64, n: usize) -> usize {
    ((frac * n as f64) - 1e-9).ceil().max(1.0) as usize
}

pub fn closed_and_induced(g: &PolymerGraph, p: &Patch) -> Result<(), String> {
    let nodes: BTreeSet<usize> = p.node_ids.iter().copied().collect();
    let edges: BTreeSet<usize> = p.edge_ids.iter().copied().collect();
    for (i, e) in g.edges.iter().enumerate() {
        let inside = nodes.contains(&e.src) && nodes.contains(&e.dst);
        if inside != edges.contains(&i) {
            return Err(format!(
                "edge {i} ({}→{}) membership is not the induced one",
                e.src, e.dst
            ));
        }
    }
    for &i in &edges {
        let e = &g.edges[i];
        let back = g
            .edges
            .iter()
            .enumerate()
            .any(|(j, r)| r.src == e.dst && r.dst == e.src && r.stochastic == e.stochastic && edges.contains(&j));
        if !back {
            return Err(format!("edge {i} has no reverse in the patch"));
        }
    }
    Ok(())
}

pub fn covers(g: &PolymerGraph, patches: &[Patch]) -> Result<(), String> {
    let nodes: BTreeSet<usize> = patches.iter().flat_map(|p| p.node_ids.iter().copied()).collect();
    let edges: BTreeSet<usize> = patches.iter().flat_map(|p| p.edge_ids.iter().copied()).collect();
    if nodes.len() != g.node_count() {
        return Err(format!("{} of {} nodes covered", nodes.len(), g.node_count()));
    }
    if edges.len() != g.edge_count() {
        return Err(format!("{} of {} edges covered", edges.len(), g.edge_count()));
    }
    Ok(())
}

/// Requirements on one selection drawn from `input` (the subgraph set).
pub fn check_selection(
    g: &PolymerGraph,
    input: &[Patch],
    sel: &PatchSelection,
    context_frac: f64,
    target_frac: f64,
    m: usize,
) -> Result<(), String> {
    // 1: both monomers in the context
    for id in [MonomerId::A, MonomerId::B] {
        if !sel.context.node_ids.iter().any(|&v| g.nodes[v].monomer == id) {
            return Err(format!("context lacks monomer {id}"));
        }
    }
    // 2: the subgraph set covers every node and directed edge
    covers(g, input)?;
    // 3: context at least as large as every target
    if sel.targets.len() != m {
        return Err(format!("{} targets, wanted {m}", sel.targets.len()));
    }
    let target_size = ceil_frac(target_frac, g.node_count());
    for t in &sel.targets {
        if t.is_empty() || t.len() > target_size {
            return Err(format!("target of {} nodes, size cap {target_size}", t.len()));
        }
        if t.len() > sel.context.len() {
            return Err("target larger than context".into());
        }
    }
    if !sel.context_shortfall && sel.context.len() < ceil_frac(context_frac, g.node_count()) {
        return Err("context below requested size without shortfall flag".into());
    }
    // 4: no pool patch serves both roles; context is exactly its sources
    let sources: BTreeSet<usize> = sel.source_patch_ids.iter().copied().collect();
    if sel.target_patch_ids.iter().any(|t| sources.contains(t)) {
        return Err("a pool patch is both context source and target".into());
    }
    let union: BTreeSet<usize> = sources
        .iter()
        .flat_map(|&s| sel.pool[s].node_ids.iter().copied())
        .collect();
    if union.into_iter().collect::<Vec<_>>() != sel.context.node_ids {
        return Err("context is not the union of its source patches".into());
    }
    for (t, &id) in sel.targets.iter().zip(&sel.target_patch_ids) {
        if id >= input.len() || !t.node_ids.iter().all(|v| input[id].node_ids.contains(v)) {
            return Err(format!("target does not come from pool patch {id}"));
        }
    }
    // 6: reversal closure everywhere
    closed_and_induced(g, &sel.context)?;
    for p in sel.targets.iter().chain(input) {
        closed_and_induced(g, p)?;
    }
    Ok(())
}

pub fn carbon(monomer: MonomerId) -> PolymerNode {
    PolymerNode {
        atom: AtomNode::new(Element::C, false),
        monomer,
        hydrogens: 0,
    }
}

/// Two cliques of `a` and `b` nodes joined by one edge.
pub fn bridge_of_cliques(a: usize, b: usize) -> PolymerGraph {
    let n = a + b;
    let nodes = (0..n)
        .map(|v| carbon(if v < a { MonomerId::A } else { MonomerId::B }))
        .collect();
    let mut edges = Vec::new();
    let mut link = |u: usize, v: usize| {
        for (s, d) in [(u, v), (v, u)] {
            edges.push(DirectedEdge {
                src: s,
                dst: d,
                weight: 1.0,
                stochastic: false,
                bond_order: BondOrder::Single,
            });
        }
    };
    for (lo, hi) in [(0, a), (a, n)] {
        for u in lo..hi {
            for v in (u + 1)..hi {
                link(u, v);
            }
        }
    }
    link(a - 1, a);
    edges.sort_by_key(|e| (e.src, e.dst));
    PolymerGraph {
        nodes,
        edges,
        stoichiometry: (0.5, 0.5),
        architecture: Architecture::Alternating,
        attachment_nodes: Vec::new(),
        pseudolabel_mw: 0.0,
    }
}

/// Undirected cut, counting each reversal pair once.
pub fn cut_oracle(g: &PolymerGraph, side: &[usize]) -> f64 {
    g.edges
        .iter()
        .filter(|e| side[e.src] != side[e.dst])
        .map(|e| e.weight)
        .sum::<f64>()
        / 2.0
}

pub fn exhaustive_min_cut(g: &PolymerGraph) -> f64 {
    let n = g.node_count();
    let mut best = f64::INFINITY;
    for mask in 1..(1u32 << (n - 1)) {
        let side: Vec<usize> = (0..n).map(|v| ((mask >> v) & 1) as usize).collect();
        best = best.min(cut_oracle(g, &side));
    }
    best
}
