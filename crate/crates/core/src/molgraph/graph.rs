use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::GraphError;

/// Bond label. `Null` means "no bond" and never appears in adjacency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BondType {
    Null,
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondType {
    pub const ALL: [BondType; 5] = [
        BondType::Null,
        BondType::Single,
        BondType::Double,
        BondType::Triple,
        BondType::Aromatic,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Bond order in half units (aromatic counts 1.5).
    pub fn order_halves(self) -> u32 {
        match self {
            BondType::Null => 0,
            BondType::Single => 2,
            BondType::Double => 4,
            BondType::Triple => 6,
            BondType::Aromatic => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BondType::Null => "NULL",
            BondType::Single => "SINGLE",
            BondType::Double => "DOUBLE",
            BondType::Triple => "TRIPLE",
            BondType::Aromatic => "AROMATIC",
        }
    }
}

impl fmt::Display for BondType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    /// Atomic number.
    pub element: u8,
    pub charge: i8,
    pub explicit_h_count: u8,
    pub map_number: Option<u32>,
    pub is_reagent: bool,
    /// Derived: non-null incident bonds.
    pub degree: u8,
    /// Derived: floor of bond-order sum plus explicit hydrogens.
    pub explicit_valence: u8,
    /// Derived: incident to at least one cycle edge.
    pub in_ring: bool,
}

impl Atom {
    pub fn new(element: u8) -> Self {
        Self {
            element,
            charge: 0,
            explicit_h_count: 0,
            map_number: None,
            is_reagent: false,
            degree: 0,
            explicit_valence: 0,
            in_ring: false,
        }
    }

    pub fn with_map(mut self, map: u32) -> Self {
        self.map_number = Some(map);
        self
    }

    pub fn with_charge(mut self, charge: i8) -> Self {
        self.charge = charge;
        self
    }

    pub fn with_hs(mut self, hs: u8) -> Self {
        self.explicit_h_count = hs;
        self
    }

    pub fn reagent(mut self, is_reagent: bool) -> Self {
        self.is_reagent = is_reagent;
        self
    }
}

/// Labeled multi-component molecular graph. Immutable once built; edits
/// produce new graphs.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    adjacency: Vec<BTreeMap<usize, BondType>>,
}

impl MolGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph and computes derived atom attributes.
    pub fn from_parts(
        atoms: Vec<Atom>,
        bonds: &[(usize, usize, BondType)],
    ) -> Result<Self, GraphError> {
        let mut g = Self {
            adjacency: vec![BTreeMap::new(); atoms.len()],
            atoms,
        };
        for &(i, j, b) in bonds {
            g.insert_bond(i, j, b)?;
        }
        g.refresh_derived();
        Ok(g)
    }

    fn insert_bond(&mut self, i: usize, j: usize, b: BondType) -> Result<(), GraphError> {
        let n = self.atoms.len();
        if i >= n || j >= n {
            return Err(GraphError::AtomOutOfRange(i.max(j)));
        }
        if i == j {
            return Err(GraphError::SelfLoop(i));
        }
        if b == BondType::Null {
            return Err(GraphError::NullBond(i, j));
        }
        if self.adjacency[i].contains_key(&j) {
            return Err(GraphError::DuplicateBond(i, j));
        }
        self.adjacency[i].insert(j, b);
        self.adjacency[j].insert(i, b);
        Ok(())
    }

    pub(crate) fn set_bond_raw(&mut self, i: usize, j: usize, b: BondType) {
        if b == BondType::Null {
            self.adjacency[i].remove(&j);
            self.adjacency[j].remove(&i);
        } else {
            self.adjacency[i].insert(j, b);
            self.adjacency[j].insert(i, b);
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    /// Bond between `i` and `j`, `Null` when absent.
    pub fn bond(&self, i: usize, j: usize) -> BondType {
        self.adjacency[i].get(&j).copied().unwrap_or(BondType::Null)
    }

    /// Neighbors of `i` in increasing index order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, BondType)> + '_ {
        self.adjacency[i].iter().map(|(&j, &b)| (j, b))
    }

    /// Every bond once, as `(i, j, bond)` with `i < j`, sorted.
    pub fn bonds(&self) -> Vec<(usize, usize, BondType)> {
        let mut out = Vec::new();
        for (i, nb) in self.adjacency.iter().enumerate() {
            for (&j, &b) in nb {
                if i < j {
                    out.push((i, j, b));
                }
            }
        }
        out
    }

    pub fn bond_count(&self) -> usize {
        self.adjacency.iter().map(BTreeMap::len).sum::<usize>() / 2
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut k = 0;
            while k < comp.len() {
                let v = comp[k];
                for &w in self.adjacency[v].keys() {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
                k += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Induced subgraph on `keep` (renumbered in the given order).
    pub fn subgraph(&self, keep: &[usize]) -> MolGraph {
        let mut new_index = vec![usize::MAX; self.len()];
        for (k, &i) in keep.iter().enumerate() {
            new_index[i] = k;
        }
        let atoms = keep.iter().map(|&i| self.atoms[i].clone()).collect();
        let mut bonds = Vec::new();
        for &i in keep {
            for (&j, &b) in &self.adjacency[i] {
                if i < j && new_index[j] != usize::MAX {
                    bonds.push((new_index[i], new_index[j], b));
                }
            }
        }
        MolGraph::from_parts(atoms, &bonds).expect("induced subgraph of a valid graph is valid")
    }

    /// Disjoint union; atoms of `other` follow those of `self`.
    pub fn union(&self, other: &MolGraph) -> MolGraph {
        let offset = self.len();
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        let mut bonds = self.bonds();
        bonds.extend(
            other
                .bonds()
                .into_iter()
                .map(|(i, j, b)| (i + offset, j + offset, b)),
        );
        MolGraph::from_parts(atoms, &bonds).expect("union of valid graphs is valid")
    }

    /// Same graph with atoms reordered: atom `perm[k]` of `self` becomes atom `k`.
    pub fn permuted(&self, perm: &[usize]) -> MolGraph {
        assert_eq!(perm.len(), self.len());
        self.subgraph(perm)
    }

    /// Marks every atom as reagent (or not).
    pub fn with_reagent_flag(mut self, is_reagent: bool) -> MolGraph {
        self.atoms
            .iter_mut()
            .for_each(|a| a.is_reagent = is_reagent);
        self
    }

    /// Recomputes degree, explicit valence and ring membership for all atoms.
    pub(crate) fn refresh_derived(&mut self) {
        let ring_edges = self.cycle_edges();
        for i in 0..self.len() {
            let halves: u32 = self.adjacency[i].values().map(|b| b.order_halves()).sum();
            let a = &mut self.atoms[i];
            a.degree = self.adjacency[i].len() as u8;
            a.explicit_valence = ((halves + 2 * a.explicit_h_count as u32) / 2) as u8;
            a.in_ring = ring_edges[i];
        }
    }

    /// For each atom, whether it touches a non-bridge edge.
    fn cycle_edges(&self) -> Vec<bool> {
        let n = self.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut in_ring = vec![false; n];
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // Iterative Tarjan bridge search: (vertex, parent, neighbor cursor).
            let mut stack: Vec<(usize, usize, Vec<usize>, usize)> = Vec::new();
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            stack.push((
                root,
                usize::MAX,
                self.adjacency[root].keys().copied().collect(),
                0,
            ));
            while let Some(top) = stack.last_mut() {
                let (v, parent) = (top.0, top.1);
                if top.3 < top.2.len() {
                    let w = top.2[top.3];
                    top.3 += 1;
                    if w == parent {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        stack.push((w, v, self.adjacency[w].keys().copied().collect(), 0));
                    } else {
                        low[v] = low[v].min(disc[w]);
                        // back edge closes a cycle
                        in_ring[v] = true;
                        in_ring[w] = true;
                    }
                } else {
                    stack.pop();
                    if parent != usize::MAX {
                        low[parent] = low[parent].min(low[v]);
                        if low[v] <= disc[parent] {
                            // tree edge parent-v is not a bridge
                            in_ring[v] = true;
                            in_ring[parent] = true;
                        }
                    }
                }
            }
        }
        in_ring
    }
}
