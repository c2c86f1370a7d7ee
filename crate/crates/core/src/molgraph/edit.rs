use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::graph::{BondType, MolGraph};
use super::EditError;

/// One elementary edit: set the bond between `u` and `v` to `new_bond`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReactionTriple {
    pub u: usize,
    pub v: usize,
    pub new_bond: BondType,
}

impl ReactionTriple {
    /// Orders the endpoints so that `u < v`.
    pub fn new(a: usize, b: usize, new_bond: BondType) -> Self {
        Self {
            u: a.min(b),
            v: a.max(b),
            new_bond,
        }
    }

    pub fn pair(&self) -> (usize, usize) {
        (self.u, self.v)
    }
}

/// Replaces the bond of `(t.u, t.v)` and recomputes derived atom attributes.
/// No valence rule is enforced.
pub fn apply_triple(g: &MolGraph, t: &ReactionTriple) -> Result<MolGraph, EditError> {
    let n = g.len();
    if t.u == t.v {
        return Err(EditError::SameAtom(t.u));
    }
    if t.u >= n || t.v >= n {
        return Err(EditError::AtomOutOfRange(t.u.max(t.v)));
    }
    let old = g.bond(t.u, t.v);
    if old == t.new_bond {
        return Err(EditError::NoOp {
            u: t.u,
            v: t.v,
            bond: old,
        });
    }
    let mut out = g.clone();
    out.set_bond_raw(t.u, t.v, t.new_bond);
    out.refresh_derived();
    Ok(out)
}

/// Applies every triple in order.
pub fn apply_all<'a>(
    g: &MolGraph,
    triples: impl IntoIterator<Item = &'a ReactionTriple>,
) -> Result<MolGraph, EditError> {
    let mut out = g.clone();
    let mut touched = false;
    for t in triples {
        let n = out.len();
        if t.u == t.v {
            return Err(EditError::SameAtom(t.u));
        }
        if t.u >= n || t.v >= n {
            return Err(EditError::AtomOutOfRange(t.u.max(t.v)));
        }
        let old = out.bond(t.u, t.v);
        if old == t.new_bond {
            return Err(EditError::NoOp {
                u: t.u,
                v: t.v,
                bond: old,
            });
        }
        out.set_bond_raw(t.u, t.v, t.new_bond);
        touched = true;
    }
    if touched {
        out.refresh_derived();
    }
    Ok(out)
}

fn map_index(g: &MolGraph, side: &'static str) -> Result<BTreeMap<u32, usize>, EditError> {
    let mut index = BTreeMap::new();
    for (i, a) in g.atoms().iter().enumerate() {
        if let Some(m) = a.map_number {
            if index.insert(m, i).is_some() {
                return Err(EditError::DuplicateMap { side, map: m });
            }
        }
    }
    Ok(index)
}

/// Bond edits that turn `input` into `product`, matched by atom map number.
///
/// Pairs whose atoms both appear in the product contribute a triple when the
/// bond differs. A bonded pair with exactly one endpoint in the product
/// contributes a `Null` triple (the other side leaves). Atoms without a map
/// number count as absent from the product.
pub fn extract_triples(
    input: &MolGraph,
    product: &MolGraph,
) -> Result<BTreeSet<ReactionTriple>, EditError> {
    map_index(input, "input")?;
    let product_index = map_index(product, "product")?;
    for (i, a) in product.atoms().iter().enumerate() {
        if a.map_number.is_none() {
            return Err(EditError::UnmappedProductAtom(i));
        }
    }
    let input_maps: BTreeSet<u32> = input.atoms().iter().filter_map(|a| a.map_number).collect();
    if let Some(&m) = product_index.keys().find(|m| !input_maps.contains(m)) {
        return Err(EditError::MissingInInput(m));
    }
    let in_product: Vec<Option<usize>> = input
        .atoms()
        .iter()
        .map(|a| a.map_number.and_then(|m| product_index.get(&m).copied()))
        .collect();

    let mut out = BTreeSet::new();
    let n = input.len();
    for a in 0..n {
        for b in a + 1..n {
            match (in_product[a], in_product[b]) {
                (Some(pa), Some(pb)) => {
                    let after = product.bond(pa, pb);
                    if input.bond(a, b) != after {
                        out.insert(ReactionTriple::new(a, b, after));
                    }
                }
                (Some(_), None) | (None, Some(_)) => {
                    if input.bond(a, b) != BondType::Null {
                        out.insert(ReactionTriple::new(a, b, BondType::Null));
                    }
                }
                (None, None) => {}
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::{canonical_hash, parse_smiles};

    #[test]
    fn deleting_only_bond_splits_graph() {
        let g = parse_smiles("CC").unwrap();
        let out = apply_triple(&g, &ReactionTriple::new(0, 1, BondType::Null)).unwrap();
        assert_eq!(out.components().len(), 2);
        assert_eq!(out.atom(0).degree, 0);
    }

    #[test]
    fn no_op_edit_is_rejected() {
        let g = parse_smiles("CC").unwrap();
        assert!(matches!(
            apply_triple(&g, &ReactionTriple::new(1, 0, BondType::Single)),
            Err(EditError::NoOp { .. })
        ));
        assert!(matches!(
            apply_triple(&g, &ReactionTriple::new(0, 0, BondType::Single)),
            Err(EditError::SameAtom(0))
        ));
    }

    #[test]
    fn identical_graphs_have_no_edits() {
        let g = parse_smiles("[CH3:1][C:2](=[O:3])[OH:4]").unwrap();
        assert!(extract_triples(&g, &g).unwrap().is_empty());
    }

    #[test]
    fn inverse_edit_restores_hash() {
        let g = parse_smiles("C1CCOC1").unwrap();
        let t = ReactionTriple::new(0, 1, BondType::Double);
        let edited = apply_triple(&g, &t).unwrap();
        let back = apply_triple(&edited, &ReactionTriple::new(0, 1, BondType::Single)).unwrap();
        assert_eq!(canonical_hash(&back, true), canonical_hash(&g, true));
        assert_eq!(back, g);
    }

    #[test]
    fn leaving_group_becomes_null_edit() {
        let input = parse_smiles("[CH3:1][Cl:2].[OH-:3]").unwrap();
        let product = parse_smiles("[CH3:1][OH:3]").unwrap();
        let t = extract_triples(&input, &product).unwrap();
        let expected: BTreeSet<_> = [
            ReactionTriple::new(0, 1, BondType::Null),
            ReactionTriple::new(0, 2, BondType::Single),
        ]
        .into_iter()
        .collect();
        assert_eq!(t, expected);
    }

    #[test]
    fn map_errors() {
        let dup = parse_smiles("[CH3:1][OH:1]").unwrap();
        assert!(matches!(
            extract_triples(&dup, &dup),
            Err(EditError::DuplicateMap { .. })
        ));
        let input = parse_smiles("[CH4:1]").unwrap();
        let product = parse_smiles("[CH4:2]").unwrap();
        assert!(matches!(
            extract_triples(&input, &product),
            Err(EditError::MissingInInput(2))
        ));
        let unmapped = parse_smiles("C").unwrap();
        assert!(matches!(
            extract_triples(&input, &unmapped),
            Err(EditError::UnmappedProductAtom(0))
        ));
    }
}
