//! Connectivity-only SMILES: organic-subset and bracket atoms, `- = # :`
//! bonds, branches, ring closures (`1`..`9`, `%nn`) and `.` separators.
//! Stereo markers and isotopes are rejected.

use std::collections::{BTreeMap, HashMap};

use super::elements;
use super::graph::{Atom, BondType, MolGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SmilesErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unsupported SMILES feature: {0}")]
    Unsupported(&'static str),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("at byte {offset}: {kind}")]
pub struct SmilesError {
    pub offset: usize,
    pub kind: SmilesErrorKind,
}

fn syntax(offset: usize, msg: impl Into<String>) -> SmilesError {
    SmilesError {
        offset,
        kind: SmilesErrorKind::Syntax(msg.into()),
    }
}

fn unsupported(offset: usize, what: &'static str) -> SmilesError {
    SmilesError {
        offset,
        kind: SmilesErrorKind::Unsupported(what),
    }
}

const AROMATIC_ORGANIC: [(&str, u8); 6] =
    [("b", 5), ("c", 6), ("n", 7), ("o", 8), ("p", 15), ("s", 16)];

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    aromatic: Vec<bool>,
    bonds: BTreeMap<(usize, usize), BondType>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn implicit_bond(&self, a: usize, b: usize) -> BondType {
        if self.aromatic[a] && self.aromatic[b] {
            BondType::Aromatic
        } else {
            BondType::Single
        }
    }

    fn add_bond(
        &mut self,
        a: usize,
        b: usize,
        bond: BondType,
        at: usize,
    ) -> Result<(), SmilesError> {
        if a == b {
            return Err(syntax(at, "ring closure onto the same atom"));
        }
        let key = (a.min(b), a.max(b));
        if self.bonds.insert(key, bond).is_some() {
            return Err(syntax(at, "duplicate bond between the same atoms"));
        }
        Ok(())
    }

    fn add_atom(&mut self, atom: Atom, aromatic: bool) -> usize {
        self.atoms.push(atom);
        self.aromatic.push(aromatic);
        self.atoms.len() - 1
    }

    fn organic_atom(&mut self) -> Result<usize, SmilesError> {
        let start = self.pos;
        let rest = &self.text[self.pos..];
        let (symbol, aromatic, len) = if rest.starts_with(b"Cl") {
            ("Cl", false, 2)
        } else if rest.starts_with(b"Br") {
            ("Br", false, 2)
        } else {
            match rest[0] {
                b'B' => ("B", false, 1),
                b'C' => ("C", false, 1),
                b'N' => ("N", false, 1),
                b'O' => ("O", false, 1),
                b'P' => ("P", false, 1),
                b'S' => ("S", false, 1),
                b'F' => ("F", false, 1),
                b'I' => ("I", false, 1),
                b'b' => ("b", true, 1),
                b'c' => ("c", true, 1),
                b'n' => ("n", true, 1),
                b'o' => ("o", true, 1),
                b'p' => ("p", true, 1),
                b's' => ("s", true, 1),
                other => {
                    let end = (start + 2).min(self.text.len());
                    let shown = String::from_utf8_lossy(&self.text[start..end]).into_owned();
                    return Err(if other.is_ascii_alphabetic() {
                        SmilesError {
                            offset: start,
                            kind: SmilesErrorKind::UnknownElement(shown),
                        }
                    } else {
                        syntax(start, format!("unexpected character `{}`", other as char))
                    });
                }
            }
        };
        self.pos += len;
        let z = if aromatic {
            AROMATIC_ORGANIC
                .iter()
                .find(|(s, _)| *s == symbol)
                .unwrap()
                .1
        } else {
            elements::atomic_number(symbol).unwrap()
        };
        Ok(self.add_atom(Atom::new(z), aromatic))
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.text[start..self.pos])
            .ok()?
            .parse()
            .ok()
    }

    fn bracket_atom(&mut self) -> Result<usize, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        if self.peek().is_some_and(|c| c.is_ascii_digit()) {
            return Err(unsupported(self.pos, "isotope"));
        }
        let sym_start = self.pos;
        let rest = &self.text[self.pos..];
        let (z, aromatic) = if let Some(&(s, z)) = [("se", 34u8), ("as", 33u8)]
            .iter()
            .find(|(s, _)| rest.starts_with(s.as_bytes()))
        {
            self.pos += s.len();
            (z, true)
        } else if let Some(&(s, z)) = AROMATIC_ORGANIC
            .iter()
            .find(|(s, _)| rest.starts_with(s.as_bytes()))
        {
            self.pos += s.len();
            (z, true)
        } else {
            match rest.first() {
                Some(c) if c.is_ascii_uppercase() => {
                    let two = rest
                        .get(..2)
                        .filter(|t| t[1].is_ascii_lowercase())
                        .and_then(|t| std::str::from_utf8(t).ok())
                        .and_then(elements::atomic_number);
                    if let Some(z) = two {
                        self.pos += 2;
                        (z, false)
                    } else {
                        let one = std::str::from_utf8(&rest[..1]).unwrap();
                        match elements::atomic_number(one) {
                            Some(z) => {
                                self.pos += 1;
                                (z, false)
                            }
                            None => {
                                return Err(SmilesError {
                                    offset: sym_start,
                                    kind: SmilesErrorKind::UnknownElement(one.to_string()),
                                })
                            }
                        }
                    }
                }
                Some(b'*') => return Err(unsupported(sym_start, "wildcard atom")),
                Some(c) if c.is_ascii_lowercase() => {
                    let end = rest
                        .iter()
                        .position(|c| !c.is_ascii_lowercase())
                        .unwrap_or(rest.len());
                    return Err(SmilesError {
                        offset: sym_start,
                        kind: SmilesErrorKind::UnknownElement(
                            String::from_utf8_lossy(&rest[..end]).into_owned(),
                        ),
                    });
                }
                _ => return Err(syntax(sym_start, "expected element symbol")),
            }
        };
        if elements::vocab_index(z).is_none() {
            return Err(SmilesError {
                offset: sym_start,
                kind: SmilesErrorKind::UnknownElement(
                    elements::symbol(z).unwrap_or("?").to_string(),
                ),
            });
        }
        let mut atom = Atom::new(z);
        if self.peek() == Some(b'@') {
            return Err(unsupported(self.pos, "stereo marker"));
        }
        if self.peek() == Some(b'H') {
            self.pos += 1;
            atom.explicit_h_count = match self.number() {
                Some(n) => {
                    u8::try_from(n).map_err(|_| syntax(self.pos, "hydrogen count too large"))?
                }
                None => 1,
            };
        }
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit: i32 = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            let magnitude = if let Some(n) = self.number() {
                n as i32
            } else {
                let mut m = 1;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    m += 1;
                }
                m
            };
            atom.charge = i8::try_from(unit * magnitude)
                .map_err(|_| syntax(self.pos, "charge out of range"))?;
        }
        if self.peek() == Some(b':') {
            self.pos += 1;
            let at = self.pos;
            match self.number() {
                Some(0) => return Err(syntax(at, "atom map numbers start at 1")),
                Some(n) => atom.map_number = Some(n),
                None => return Err(syntax(at, "expected atom map number")),
            }
        }
        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(b'@') => return Err(unsupported(self.pos, "stereo marker")),
            Some(_) => return Err(syntax(self.pos, "unexpected character in bracket atom")),
            None => return Err(syntax(open, "unterminated bracket atom")),
        }
        Ok(self.add_atom(atom, aromatic))
    }
}

/// Parses the supported SMILES subset into a graph with derived attributes.
pub fn parse_smiles(text: &str) -> Result<MolGraph, SmilesError> {
    let mut p = Parser {
        text: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        aromatic: Vec::new(),
        bonds: BTreeMap::new(),
    };
    let mut prev: Option<usize> = None;
    let mut pending: Option<(BondType, usize)> = None;
    let mut branches: Vec<(usize, usize)> = Vec::new();
    let mut rings: HashMap<u32, (usize, Option<BondType>, usize)> = HashMap::new();

    while let Some(c) = p.peek() {
        let at = p.pos;
        match c {
            b'(' => {
                let Some(a) = prev else {
                    return Err(syntax(at, "branch without a preceding atom"));
                };
                if pending.is_some() {
                    return Err(syntax(at, "bond symbol before branch"));
                }
                branches.push((a, at));
                p.pos += 1;
            }
            b')' => {
                let Some((a, _)) = branches.pop() else {
                    return Err(syntax(at, "unmatched `)`"));
                };
                if pending.is_some() {
                    return Err(syntax(at, "dangling bond at end of branch"));
                }
                prev = Some(a);
                p.pos += 1;
            }
            b'.' => {
                if pending.is_some() {
                    return Err(syntax(at, "bond symbol before `.`"));
                }
                prev = None;
                p.pos += 1;
            }
            b'-' | b'=' | b'#' | b':' => {
                if pending.is_some() {
                    return Err(syntax(at, "two consecutive bond symbols"));
                }
                let b = match c {
                    b'-' => BondType::Single,
                    b'=' => BondType::Double,
                    b'#' => BondType::Triple,
                    _ => BondType::Aromatic,
                };
                pending = Some((b, at));
                p.pos += 1;
            }
            b'$' => return Err(unsupported(at, "quadruple bond")),
            b'/' | b'\\' => return Err(unsupported(at, "directional bond")),
            b'@' => return Err(unsupported(at, "stereo marker")),
            b'*' => return Err(unsupported(at, "wildcard atom")),
            b'0'..=b'9' | b'%' => {
                let Some(a) = prev else {
                    return Err(syntax(at, "ring closure without a preceding atom"));
                };
                let label = if c == b'%' {
                    let digits = p.text.get(at + 1..at + 3);
                    match digits {
                        Some(d) if d.iter().all(u8::is_ascii_digit) => {
                            p.pos += 3;
                            ((d[0] - b'0') * 10 + (d[1] - b'0')) as u32
                        }
                        _ => return Err(syntax(at, "`%` must be followed by two digits")),
                    }
                } else {
                    p.pos += 1;
                    (c - b'0') as u32
                };
                let bond = pending.take().map(|(b, _)| b);
                match rings.remove(&label) {
                    Some((other, open_bond, _)) => {
                        let b = match (open_bond, bond) {
                            (Some(x), Some(y)) if x != y => {
                                return Err(syntax(at, "ring closure bond types disagree"))
                            }
                            (Some(x), _) | (None, Some(x)) => x,
                            (None, None) => p.implicit_bond(other, a),
                        };
                        p.add_bond(other, a, b, at)?;
                    }
                    None => {
                        rings.insert(label, (a, bond, at));
                    }
                }
            }
            b'[' | b'A'..=b'Z' | b'a'..=b'z' => {
                let atom = if c == b'[' {
                    p.bracket_atom()?
                } else {
                    p.organic_atom()?
                };
                if let Some(a) = prev {
                    let b = match pending.take() {
                        Some((b, _)) => b,
                        None => p.implicit_bond(a, atom),
                    };
                    p.add_bond(a, atom, b, at)?;
                } else if let Some((_, bat)) = pending {
                    return Err(syntax(bat, "bond symbol without a preceding atom"));
                }
                prev = Some(atom);
            }
            other => {
                return Err(syntax(
                    at,
                    format!("unexpected character `{}`", other as char),
                ));
            }
        }
    }
    if let Some((_, at)) = pending {
        return Err(syntax(at, "dangling bond at end of input"));
    }
    if let Some(&(_, at)) = branches.last() {
        return Err(syntax(at, "unclosed branch"));
    }
    if let Some((_, (_, _, at))) = rings.iter().min_by_key(|(_, v)| v.2) {
        return Err(syntax(*at, "unclosed ring"));
    }
    let bonds: Vec<_> = p.bonds.iter().map(|(&(i, j), &b)| (i, j, b)).collect();
    Ok(MolGraph::from_parts(p.atoms, &bonds).expect("parser only emits valid bonds"))
}

fn has_aromatic_bond(g: &MolGraph, i: usize) -> bool {
    g.neighbors(i).any(|(_, b)| b == BondType::Aromatic)
}

fn writes_lowercase(g: &MolGraph, i: usize) -> bool {
    has_aromatic_bond(g, i) && matches!(g.atom(i).element, 5 | 6 | 7 | 8 | 15 | 16)
}

fn atom_text(g: &MolGraph, i: usize) -> String {
    let a = g.atom(i);
    let symbol = elements::symbol(a.element).unwrap_or("*");
    let lower = writes_lowercase(g, i);
    let symbol = if lower {
        symbol.to_ascii_lowercase()
    } else {
        symbol.to_string()
    };
    let organic = matches!(a.element, 5 | 6 | 7 | 8 | 9 | 15 | 16 | 17 | 35 | 53);
    if organic && a.charge == 0 && a.explicit_h_count == 0 && a.map_number.is_none() {
        return symbol;
    }
    let mut s = format!("[{symbol}");
    match a.explicit_h_count {
        0 => {}
        1 => s.push('H'),
        h => s.push_str(&format!("H{h}")),
    }
    match a.charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => s.push_str(&format!("+{c}")),
        c => s.push_str(&format!("-{}", -c)),
    }
    if let Some(m) = a.map_number {
        s.push_str(&format!(":{m}"));
    }
    s.push(']');
    s
}

fn bond_text(g: &MolGraph, i: usize, j: usize) -> &'static str {
    let both_lower = writes_lowercase(g, i) && writes_lowercase(g, j);
    match g.bond(i, j) {
        BondType::Single if both_lower => "-",
        BondType::Single | BondType::Null => "",
        BondType::Double => "=",
        BondType::Triple => "#",
        BondType::Aromatic if both_lower => "",
        BondType::Aromatic => ":",
    }
}

/// Writes a SMILES string that re-parses to a graph isomorphic to `g`,
/// keeping charges, explicit hydrogens and map numbers.
pub fn write_smiles(g: &MolGraph) -> String {
    let n = g.len();
    let mut visited = vec![false; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    // ring bonds as (opening atom, closing atom), in discovery order
    let mut ring_bonds: Vec<(usize, usize)> = Vec::new();
    let mut order: Vec<usize> = Vec::new();
    let mut roots = Vec::new();

    for comp in g.components() {
        let root = comp[0];
        roots.push(root);
        let mut stack: Vec<(usize, usize, Vec<usize>, usize)> = Vec::new();
        visited[root] = true;
        order.push(root);
        stack.push((
            root,
            usize::MAX,
            g.neighbors(root).map(|(j, _)| j).collect(),
            0,
        ));
        while let Some(top) = stack.last_mut() {
            let (v, parent) = (top.0, top.1);
            if top.3 >= top.2.len() {
                stack.pop();
                continue;
            }
            let w = top.2[top.3];
            top.3 += 1;
            if w == parent {
                continue;
            }
            if visited[w] {
                let known = ring_bonds
                    .iter()
                    .any(|&(a, b)| (a == w && b == v) || (a == v && b == w));
                if !known {
                    ring_bonds.push((w, v));
                }
                continue;
            }
            visited[w] = true;
            order.push(w);
            children[v].push(w);
            stack.push((w, v, g.neighbors(w).map(|(j, _)| j).collect(), 0));
        }
    }

    let mut rank = vec![0usize; n];
    for (k, &v) in order.iter().enumerate() {
        rank[v] = k;
    }
    let mut events: Vec<Vec<(usize, bool, usize)>> = vec![Vec::new(); n];
    for (r, &(open, close)) in ring_bonds.iter().enumerate() {
        events[open].push((r, true, close));
        events[close].push((r, false, open));
    }
    for ev in &mut events {
        // closings first, then openings ordered by partner position
        ev.sort_by_key(|&(r, opening, partner)| (opening, rank[partner], r));
    }

    let mut digits: Vec<Option<u32>> = vec![None; ring_bonds.len()];
    let mut free: Vec<bool> = vec![true; 100];
    free[0] = false;
    let mut out = String::new();

    fn emit(
        g: &MolGraph,
        v: usize,
        children: &[Vec<usize>],
        events: &[Vec<(usize, bool, usize)>],
        digits: &mut [Option<u32>],
        free: &mut [bool],
        out: &mut String,
    ) {
        out.push_str(&atom_text(g, v));
        for &(r, opening, partner) in &events[v] {
            if opening {
                let d = free.iter().position(|&f| f).expect("at most 99 open rings");
                free[d] = false;
                digits[r] = Some(d as u32);
                out.push_str(bond_text(g, v, partner));
                write_ring_digit(out, d as u32);
            } else {
                let d = digits[r].expect("ring opened before closing");
                free[d as usize] = true;
                write_ring_digit(out, d);
            }
        }
        let kids = &children[v];
        for (k, &c) in kids.iter().enumerate() {
            let last = k + 1 == kids.len();
            if !last {
                out.push('(');
            }
            out.push_str(bond_text(g, v, c));
            emit(g, c, children, events, digits, free, out);
            if !last {
                out.push(')');
            }
        }
    }

    for (k, &root) in roots.iter().enumerate() {
        if k > 0 {
            out.push('.');
        }
        emit(
            g,
            root,
            &children,
            &events,
            &mut digits,
            &mut free,
            &mut out,
        );
    }
    out
}

fn write_ring_digit(out: &mut String, d: u32) {
    if d < 10 {
        out.push(char::from_digit(d, 10).unwrap());
    } else {
        out.push_str(&format!("%{d:02}"));
    }
}
