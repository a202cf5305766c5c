use super::{AtomNode, ChemError, Element, Monomer};

pub const HYDROGEN_MASS: f64 = 1.008;

/// Standard atomic weights (IUPAC 2021 conventional values, 3 decimals).
pub fn atomic_mass(element: Element) -> f64 {
    match element {
        Element::H => HYDROGEN_MASS,
        Element::B => 10.810,
        Element::C => 12.011,
        Element::N => 14.007,
        Element::O => 15.999,
        Element::S => 32.060,
        Element::P => 30.974,
        Element::F => 18.998,
        Element::Cl => 35.450,
        Element::Br => 79.904,
        Element::I => 126.904,
    }
}

pub fn atomic_mass_of_symbol(symbol: &str) -> Result<f64, ChemError> {
    Element::from_symbol(symbol)
        .map(atomic_mass)
        .ok_or_else(|| ChemError::UnknownElement(symbol.to_string()))
}

/// Hydrogens implied by the standard valence after bonds and open
/// attachment valences are accounted for. Bracket atoms carry their count
/// explicitly.
pub fn implicit_hydrogens(atom: &AtomNode, bond_valence: f64, attachments: usize) -> u8 {
    if let Some(h) = atom.explicit_hydrogens {
        return h;
    }
    let free = f64::from(atom.element.valence()) - bond_valence - attachments as f64;
    if free <= 0.0 {
        0
    } else {
        (free + 1e-9).floor() as u8
    }
}

/// Hydrogen count for every atom of the monomer.
pub fn hydrogen_counts(monomer: &Monomer) -> Vec<u8> {
    let mut bond_valence = vec![0.0; monomer.atoms.len()];
    for bond in &monomer.bonds {
        bond_valence[bond.a] += bond.order.valence_contribution();
        bond_valence[bond.b] += bond.order.valence_contribution();
    }
    monomer
        .atoms
        .iter()
        .enumerate()
        .map(|(i, atom)| implicit_hydrogens(atom, bond_valence[i], monomer.attachments_on(i)))
        .collect()
}

/// Repeat-unit mass in g/mol, implicit hydrogens included.
pub fn monomer_mass(monomer: &Monomer) -> f64 {
    monomer
        .atoms
        .iter()
        .zip(hydrogen_counts(monomer))
        .map(|(atom, h)| atomic_mass(atom.element) + f64::from(h) * HYDROGEN_MASS)
        .sum()
}
