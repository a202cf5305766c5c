//! Monomer graphs: atoms, bonds, attachment points, and the small
//! line-notation grammar used to describe them.

mod mass;
mod parser;
mod writer;

pub use mass::{atomic_mass, atomic_mass_of_symbol, hydrogen_counts, implicit_hydrogens, monomer_mass, HYDROGEN_MASS};
pub use parser::parse_monomer;
pub use writer::write_monomer;

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChemError {
    #[error("empty monomer string")]
    EmptyInput,
    #[error("unsupported token {token:?} at position {pos}")]
    UnsupportedToken { pos: usize, token: String },
    #[error("ring closure {0} was never closed")]
    UnclosedRing(u8),
    #[error("unbalanced parenthesis at position {0}")]
    UnbalancedParenthesis(usize),
    #[error("unknown element {0:?}")]
    UnknownElement(String),
}

/// Elements the grammar accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    H,
    B,
    C,
    N,
    O,
    S,
    P,
    F,
    Cl,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 11] = [
        Element::H,
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::S,
        Element::P,
        Element::F,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    /// Heavy elements that get a slot in the element one-hot.
    pub const HEAVY: [Element; 10] = [
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::S,
        Element::P,
        Element::F,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::S => "S",
            Element::P => "P",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(symbol: &str) -> Option<Element> {
        Element::ALL.iter().copied().find(|e| e.symbol() == symbol)
    }

    /// Index into the 10-slot element vocabulary; hydrogen has no slot.
    pub fn heavy_index(self) -> Option<usize> {
        Element::HEAVY.iter().position(|&e| e == self)
    }

    /// Standard valence used to infer implicit hydrogens.
    pub fn valence(self) -> u8 {
        match self {
            Element::C => 4,
            Element::N | Element::B | Element::P => 3,
            Element::O | Element::S => 2,
            Element::H | Element::F | Element::Cl | Element::Br | Element::I => 1,
        }
    }

    /// Elements allowed to appear in lowercase aromatic form.
    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::S | Element::P
        )
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub fn valence_contribution(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Aromatic => 1.5,
        }
    }

    /// Slot in the 4-way bond-order one-hot.
    pub fn index(self) -> usize {
        match self {
            BondOrder::Single => 0,
            BondOrder::Double => 1,
            BondOrder::Triple => 2,
            BondOrder::Aromatic => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomNode {
    pub element: Element,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Number of incident bonds to other atoms of the same monomer.
    pub degree: u8,
    /// Hydrogen count written inside brackets, if any.
    pub explicit_hydrogens: Option<u8>,
}

impl AtomNode {
    pub fn new(element: Element, aromatic: bool) -> Self {
        Self {
            element,
            aromatic,
            formal_charge: 0,
            degree: 0,
            explicit_hydrogens: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomer {
    pub atoms: Vec<AtomNode>,
    pub bonds: Vec<Bond>,
    /// Atom indices carrying an open valence; an atom may appear more than once.
    pub attachment_points: Vec<usize>,
}

impl Monomer {
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Number of attachment wildcards sitting on `atom`.
    pub fn attachments_on(&self, atom: usize) -> usize {
        self.attachment_points.iter().filter(|&&a| a == atom).count()
    }

    pub fn neighbors(&self) -> Vec<Vec<(usize, BondOrder)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for bond in &self.bonds {
            adj[bond.a].push((bond.b, bond.order));
            adj[bond.b].push((bond.a, bond.order));
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.atoms.is_empty() {
            return false;
        }
        let adj = self.neighbors();
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(u, _) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// For each bond, whether it lies on a cycle of the monomer graph.
    pub fn ring_bonds(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (i, bond) in self.bonds.iter().enumerate() {
            adj[bond.a].push((bond.b, i));
            adj[bond.b].push((bond.a, i));
        }
        // Bridge finding; every non-bridge bond is on a cycle.
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut is_bridge = vec![false; self.bonds.len()];
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // (vertex, parent bond, next neighbor cursor)
            let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(top) = stack.len().checked_sub(1) {
                let (v, parent, cursor) = stack[top];
                if cursor < adj[v].len() {
                    stack[top].2 += 1;
                    let (u, bond) = adj[v][cursor];
                    if Some(bond) == parent {
                        continue;
                    }
                    if disc[u] == usize::MAX {
                        disc[u] = timer;
                        low[u] = timer;
                        timer += 1;
                        stack.push((u, Some(bond), 0));
                    } else {
                        low[v] = low[v].min(disc[u]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[v]);
                        if low[v] > disc[p] {
                            is_bridge[parent.expect("non-root has parent bond")] = true;
                        }
                    }
                }
            }
        }
        is_bridge.into_iter().map(|b| !b).collect()
    }
}
