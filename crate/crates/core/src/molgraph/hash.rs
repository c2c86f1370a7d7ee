//! Weisfeiler-Lehman color refinement digest.
//!
//! Equal for isomorphic graphs. Different digests prove non-isomorphism;
//! equal digests do not prove isomorphism for WL-indistinguishable pairs
//! (e.g. some regular graphs).

use std::fmt;

use sha2::{Digest, Sha256};

use super::graph::MolGraph;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GraphDigest(pub [u8; 32]);

impl fmt::Display for GraphDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for GraphDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GraphDigest({self})")
    }
}

fn color_of(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

fn distinct(colors: &[u64]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

/// Permutation-invariant digest seeded by element, charge, explicit H count
/// and, when `use_maps`, the atom map number.
pub fn canonical_hash(g: &MolGraph, use_maps: bool) -> GraphDigest {
    let n = g.len();
    let mut colors: Vec<u64> = g
        .atoms()
        .iter()
        .map(|a| {
            let mut seed = vec![a.element, a.charge as u8, a.explicit_h_count];
            if use_maps {
                seed.push(1);
                seed.extend_from_slice(&a.map_number.unwrap_or(0).to_le_bytes());
            }
            color_of(&seed)
        })
        .collect();
    let mut classes = distinct(&colors);
    for _ in 0..n {
        let next: Vec<u64> = (0..n)
            .map(|i| {
                let mut nb: Vec<(u8, u64)> = g
                    .neighbors(i)
                    .map(|(j, b)| (b.index() as u8, colors[j]))
                    .collect();
                nb.sort_unstable();
                let mut bytes = colors[i].to_le_bytes().to_vec();
                for (b, c) in nb {
                    bytes.push(b);
                    bytes.extend_from_slice(&c.to_le_bytes());
                }
                color_of(&bytes)
            })
            .collect();
        colors = next;
        let now = distinct(&colors);
        if now == classes {
            break;
        }
        classes = now;
    }
    colors.sort_unstable();
    let mut h = Sha256::new();
    h.update((n as u64).to_le_bytes());
    h.update((g.bond_count() as u64).to_le_bytes());
    for c in colors {
        h.update(c.to_le_bytes());
    }
    GraphDigest(h.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    #[test]
    fn permutation_invariant() {
        let g = parse_smiles("CC(=O)Nc1ccc(O)cc1").unwrap();
        let perm: Vec<usize> = (0..g.len()).rev().collect();
        assert_eq!(
            canonical_hash(&g, false),
            canonical_hash(&g.permuted(&perm), false)
        );
    }

    #[test]
    fn different_labels_differ() {
        let h = |s| canonical_hash(&parse_smiles(s).unwrap(), false);
        assert_ne!(h("CCO"), h("CCN"));
        assert_ne!(h("C"), h("CC"));
        assert_ne!(h("C=C"), h("CC"));
    }

    #[test]
    fn maps_matter_only_when_requested() {
        let a = parse_smiles("[CH3:1][OH:2]").unwrap();
        let b = parse_smiles("[CH3:2][OH:1]").unwrap();
        assert_eq!(canonical_hash(&a, false), canonical_hash(&b, false));
        assert_ne!(canonical_hash(&a, true), canonical_hash(&b, true));
    }
}
