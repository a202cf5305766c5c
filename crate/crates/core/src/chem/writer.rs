use super::{AtomNode, BondOrder, Monomer};

fn atom_symbol(atom: &AtomNode) -> String {
    let base = if atom.aromatic {
        atom.element.symbol().to_ascii_lowercase()
    } else {
        atom.element.symbol().to_string()
    };
    if atom.explicit_hydrogens.is_none() && atom.formal_charge == 0 {
        return base;
    }
    let mut s = format!("[{base}");
    match atom.explicit_hydrogens {
        Some(0) | None => {}
        Some(1) => s.push('H'),
        Some(n) => s.push_str(&format!("H{n}")),
    }
    match atom.formal_charge {
        0 => {}
        c if c > 0 => s.push('+'),
        _ => s.push('-'),
    }
    s.push(']');
    s
}

fn bond_symbol(order: BondOrder, a: &AtomNode, b: &AtomNode) -> &'static str {
    let both_aromatic = a.aromatic && b.aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

struct Layout {
    children: Vec<Vec<(usize, BondOrder)>>,
    /// Ring bonds opened at an atom: (partner, order).
    opens: Vec<Vec<(usize, BondOrder)>>,
    /// Ring bonds closed at an atom: partner atoms.
    closes: Vec<Vec<usize>>,
}

fn layout(monomer: &Monomer) -> Layout {
    let n = monomer.atoms.len();
    let mut adj = monomer.neighbors();
    for list in &mut adj {
        list.sort_by_key(|&(u, _)| u);
    }
    let mut order = vec![usize::MAX; n];
    let mut children = vec![Vec::new(); n];
    let mut tree = std::collections::HashSet::new();
    let mut counter = 0;
    // Recursive DFS mirrors the order the writer emits atoms in.
    fn visit(
        v: usize,
        adj: &[Vec<(usize, BondOrder)>],
        order: &mut [usize],
        counter: &mut usize,
        children: &mut [Vec<(usize, BondOrder)>],
        tree: &mut std::collections::HashSet<(usize, usize)>,
    ) {
        order[v] = *counter;
        *counter += 1;
        for &(u, bond) in &adj[v] {
            if order[u] == usize::MAX {
                children[v].push((u, bond));
                tree.insert((v.min(u), v.max(u)));
                visit(u, adj, order, counter, children, tree);
            }
        }
    }
    visit(0, &adj, &mut order, &mut counter, &mut children, &mut tree);
    let mut opens = vec![Vec::new(); n];
    let mut closes = vec![Vec::new(); n];
    for bond in &monomer.bonds {
        if tree.contains(&(bond.a.min(bond.b), bond.a.max(bond.b))) {
            continue;
        }
        let (first, second) = if order[bond.a] < order[bond.b] {
            (bond.a, bond.b)
        } else {
            (bond.b, bond.a)
        };
        opens[first].push((second, bond.order));
        closes[second].push(first);
    }
    Layout {
        children,
        opens,
        closes,
    }
}

/// Serialize a connected monomer back to line notation. Attachment points
/// are written as `([*])` branches on their atom.
pub fn write_monomer(monomer: &Monomer) -> String {
    if monomer.atoms.is_empty() {
        return String::new();
    }
    let layout = layout(monomer);
    let mut out = String::new();
    let mut digits: [Option<(usize, usize)>; 10] = [None; 10];
    write_atom(monomer, &layout, 0, &mut digits, &mut out);
    out
}

fn write_atom(
    monomer: &Monomer,
    layout: &Layout,
    v: usize,
    digits: &mut [Option<(usize, usize)>; 10],
    out: &mut String,
) {
    let atom = &monomer.atoms[v];
    out.push_str(&atom_symbol(atom));
    for &partner in &layout.closes[v] {
        let slot = digits
            .iter()
            .position(|d| *d == Some((partner, v)))
            .expect("ring opened before it closes");
        digits[slot] = None;
        out.push(char::from(b'0' + slot as u8));
    }
    for &(partner, order) in &layout.opens[v] {
        let slot = digits
            .iter()
            .skip(1)
            .position(Option::is_none)
            .map(|i| i + 1)
            .or_else(|| digits[0].is_none().then_some(0))
            .expect("more than ten simultaneously open rings");
        digits[slot] = Some((v, partner));
        out.push_str(bond_symbol(order, atom, &monomer.atoms[partner]));
        out.push(char::from(b'0' + slot as u8));
    }
    for _ in 0..monomer.attachments_on(v) {
        out.push_str("([*])");
    }
    let kids = &layout.children[v];
    for (i, &(child, order)) in kids.iter().enumerate() {
        let last = i + 1 == kids.len();
        if !last {
            out.push('(');
        }
        out.push_str(bond_symbol(order, atom, &monomer.atoms[child]));
        write_atom(monomer, layout, child, digits, out);
        if !last {
            out.push(')');
        }
    }
}
