use super::{AtomNode, Bond, BondOrder, ChemError, Element, Monomer};

/// Where the next atom attaches.
#[derive(Debug, Clone, Copy)]
enum Cursor {
    /// Nothing parsed yet; wildcards here attach to the next atom.
    Start,
    Atom(usize),
    /// A wildcard closed the chain after an atom; only `)` or the end may follow.
    Terminated,
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
    atoms: Vec<AtomNode>,
    bonds: Vec<Bond>,
    attachments: Vec<usize>,
    leading_attachments: usize,
    rings: [Option<(usize, Option<BondOrder>)>; 10],
    branches: Vec<(usize, usize)>,
    cursor: Cursor,
    pending_bond: Option<BondOrder>,
}

/// Parse a monomer written in the supported line-notation subset.
///
/// Attachment wildcards `[*]` are not atoms: they are recorded as
/// attachment points on the atom they bond to.
pub fn parse_monomer(text: &str) -> Result<Monomer, ChemError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(ChemError::EmptyInput);
    }
    let mut parser = Parser {
        input: trimmed.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        attachments: Vec::new(),
        leading_attachments: 0,
        rings: [None; 10],
        branches: Vec::new(),
        cursor: Cursor::Start,
        pending_bond: None,
    };
    parser.run()?;
    parser.finish()
}

impl Parser<'_> {
    fn unsupported(&self, start: usize, end: usize) -> ChemError {
        let end = end.min(self.input.len()).max(start + 1).min(self.input.len());
        ChemError::UnsupportedToken {
            pos: start,
            token: String::from_utf8_lossy(&self.input[start..end]).into_owned(),
        }
    }

    fn run(&mut self) -> Result<(), ChemError> {
        while self.pos < self.input.len() {
            let c = self.input[self.pos];
            match c {
                b'(' => {
                    let Cursor::Atom(root) = self.cursor else {
                        return Err(ChemError::UnbalancedParenthesis(self.pos));
                    };
                    if self.pending_bond.is_some() {
                        return Err(self.unsupported(self.pos, self.pos + 1));
                    }
                    self.branches.push((root, self.pos));
                    self.pos += 1;
                }
                b')' => {
                    let Some((root, _)) = self.branches.pop() else {
                        return Err(ChemError::UnbalancedParenthesis(self.pos));
                    };
                    if self.pending_bond.is_some() {
                        return Err(self.unsupported(self.pos - 1, self.pos));
                    }
                    self.cursor = Cursor::Atom(root);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' => {
                    if self.pending_bond.is_some() || matches!(self.cursor, Cursor::Start) {
                        return Err(self.unsupported(self.pos, self.pos + 1));
                    }
                    self.pending_bond = Some(match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    });
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    self.ring_closure(c - b'0')?;
                    self.pos += 1;
                }
                b'[' => self.bracket()?,
                b'*' => {
                    self.pos += 1;
                    self.wildcard()?;
                }
                _ => self.organic_atom()?,
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<Monomer, ChemError> {
        if let Some(&(_, pos)) = self.branches.last() {
            return Err(ChemError::UnbalancedParenthesis(pos));
        }
        if let Some(digit) = self.rings.iter().position(Option::is_some) {
            return Err(ChemError::UnclosedRing(digit as u8));
        }
        if self.pending_bond.is_some() {
            return Err(self.unsupported(self.input.len() - 1, self.input.len()));
        }
        if self.atoms.is_empty() {
            return Err(ChemError::EmptyInput);
        }
        let mut atoms = self.atoms;
        for bond in &self.bonds {
            atoms[bond.a].degree += 1;
            atoms[bond.b].degree += 1;
        }
        Ok(Monomer {
            atoms,
            bonds: self.bonds,
            attachment_points: self.attachments,
        })
    }

    fn organic_atom(&mut self) -> Result<(), ChemError> {
        let start = self.pos;
        let rest = &self.input[start..];
        let (element, aromatic, len) = match rest {
            [b'C', b'l', ..] => (Element::Cl, false, 2),
            [b'B', b'r', ..] => (Element::Br, false, 2),
            [c, ..] => match *c {
                b'H' => (Element::H, false, 1),
                b'B' => (Element::B, false, 1),
                b'C' => (Element::C, false, 1),
                b'N' => (Element::N, false, 1),
                b'O' => (Element::O, false, 1),
                b'S' => (Element::S, false, 1),
                b'P' => (Element::P, false, 1),
                b'F' => (Element::F, false, 1),
                b'I' => (Element::I, false, 1),
                b'b' => (Element::B, true, 1),
                b'c' => (Element::C, true, 1),
                b'n' => (Element::N, true, 1),
                b'o' => (Element::O, true, 1),
                b's' => (Element::S, true, 1),
                b'p' => (Element::P, true, 1),
                _ => return Err(self.unsupported(start, start + 1)),
            },
            [] => unreachable!("called at end of input"),
        };
        self.pos += len;
        self.add_atom(AtomNode::new(element, aromatic), start)
    }

    fn bracket(&mut self) -> Result<(), ChemError> {
        let start = self.pos;
        let close = self.input[start..]
            .iter()
            .position(|&b| b == b']')
            .map(|off| start + off)
            .ok_or_else(|| self.unsupported(start, self.input.len()))?;
        let body = &self.input[start + 1..close];
        self.pos = close + 1;
        if body == b"*" {
            return self.wildcard();
        }
        let bad = || ChemError::UnsupportedToken {
            pos: start,
            token: String::from_utf8_lossy(&self.input[start..=close]).into_owned(),
        };
        let mut i = 0;
        let symbol_len = match body {
            [a, b, ..] if a.is_ascii_uppercase() && b.is_ascii_lowercase() => {
                // two-letter symbols only if they exist, e.g. Cl / Br
                let two = std::str::from_utf8(&body[..2]).map_err(|_| bad())?;
                if Element::from_symbol(two).is_some() {
                    2
                } else {
                    1
                }
            }
            [_, ..] => 1,
            [] => return Err(bad()),
        };
        let sym = std::str::from_utf8(&body[..symbol_len]).map_err(|_| bad())?;
        let (element, aromatic) = if sym.chars().all(|c| c.is_ascii_lowercase()) {
            let upper = sym.to_ascii_uppercase();
            let element = Element::from_symbol(&upper).ok_or_else(bad)?;
            if !element.can_be_aromatic() {
                return Err(bad());
            }
            (element, true)
        } else {
            (Element::from_symbol(sym).ok_or_else(bad)?, false)
        };
        i += symbol_len;
        let mut atom = AtomNode::new(element, aromatic);
        if i < body.len() && body[i] == b'H' {
            i += 1;
            let mut count = 1u8;
            if i < body.len() && body[i].is_ascii_digit() {
                count = body[i] - b'0';
                i += 1;
            }
            atom.explicit_hydrogens = Some(count);
        } else {
            atom.explicit_hydrogens = Some(0);
        }
        if i < body.len() && (body[i] == b'+' || body[i] == b'-') {
            let sign: i8 = if body[i] == b'+' { 1 } else { -1 };
            i += 1;
            if i < body.len() && body[i] == b'1' {
                i += 1;
            }
            atom.formal_charge = sign;
        }
        if i != body.len() {
            return Err(bad());
        }
        self.add_atom(atom, start)
    }

    fn add_atom(&mut self, atom: AtomNode, pos: usize) -> Result<(), ChemError> {
        let idx = self.atoms.len();
        let aromatic = atom.aromatic;
        self.atoms.push(atom);
        match self.cursor {
            Cursor::Start => {
                for _ in 0..self.leading_attachments {
                    self.attachments.push(idx);
                }
                self.leading_attachments = 0;
                // a bond symbol after a leading wildcard belongs to the wildcard
                self.pending_bond = None;
            }
            Cursor::Atom(prev) => {
                let order = self.pending_bond.take().unwrap_or_else(|| {
                    if aromatic && self.atoms[prev].aromatic {
                        BondOrder::Aromatic
                    } else {
                        BondOrder::Single
                    }
                });
                self.bonds.push(Bond { a: prev, b: idx, order });
            }
            Cursor::Terminated => return Err(self.unsupported(pos, pos + 1)),
        }
        self.cursor = Cursor::Atom(idx);
        Ok(())
    }

    fn wildcard(&mut self) -> Result<(), ChemError> {
        match self.cursor {
            Cursor::Start => self.leading_attachments += 1,
            Cursor::Atom(prev) => {
                self.attachments.push(prev);
                self.pending_bond = None;
                self.cursor = Cursor::Terminated;
            }
            Cursor::Terminated => return Err(self.unsupported(self.pos - 1, self.pos)),
        }
        Ok(())
    }

    fn ring_closure(&mut self, digit: u8) -> Result<(), ChemError> {
        let Cursor::Atom(current) = self.cursor else {
            return Err(self.unsupported(self.pos, self.pos + 1));
        };
        let bond = self.pending_bond.take();
        match self.rings[digit as usize].take() {
            None => self.rings[digit as usize] = Some((current, bond)),
            Some((other, open_bond)) => {
                let duplicate = self
                    .bonds
                    .iter()
                    .any(|b| (b.a == other && b.b == current) || (b.a == current && b.b == other));
                if other == current || duplicate {
                    return Err(self.unsupported(self.pos, self.pos + 1));
                }
                let order = bond.or(open_bond).unwrap_or_else(|| {
                    if self.atoms[other].aromatic && self.atoms[current].aromatic {
                        BondOrder::Aromatic
                    } else {
                        BondOrder::Single
                    }
                });
                self.bonds.push(Bond {
                    a: other,
                    b: current,
                    order,
                });
            }
        }
        Ok(())
    }
}
