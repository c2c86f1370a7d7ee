//! Synthetic reactions with a deterministic, degree-driven edit rule.
//!
//! Inputs are random connected graphs over C, N, O and S joined by single
//! bonds, with no hydrogens. An atom can take a new bond while its degree is
//! below its valence (4, 3, 2, 6). A pair is eligible when it is not bonded,
//! both atoms can take a bond and their degree sum reaches the threshold.
//! The rule repeatedly bonds the best eligible pair, ranked by degree sum,
//! then the larger and then the smaller atomic number, until none is left.
//! Both the edits and their number are functions of the graph. Draws with a
//! tie for the best pair, or with an edit count outside the requested
//! range, are redrawn.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::{apply_all, Atom, BondType, MolGraph, ReactionRecord, ReactionTriple};

const ELEMENTS: [(u8, u32, f64); 4] = [(6, 4, 0.5), (7, 3, 0.2), (8, 2, 0.2), (16, 6, 0.1)];
const MAX_ATTEMPTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub nodes_min: usize,
    pub nodes_max: usize,
    pub changes_min: usize,
    pub changes_max: usize,
    /// Smallest degree sum of an eligible pair.
    pub threshold: u32,
    /// Chance of adding a one- or two-atom reagent molecule.
    pub reagent_prob: f64,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            nodes_min: 6,
            nodes_max: 10,
            changes_min: 1,
            changes_max: 2,
            threshold: 4,
            reagent_prob: 0.2,
            train: 1000,
            valid: 200,
            test: 200,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ToyError {
    #[error("node range {min}..={max} is empty or below 2")]
    Nodes { min: usize, max: usize },
    #[error("change range {min}..={max} is empty or above 3")]
    Changes { min: usize, max: usize },
    #[error("{changes} changes do not fit graphs with {nodes} nodes")]
    TooManyChanges { changes: usize, nodes: usize },
    #[error("degree-sum threshold {0} is below 2")]
    Threshold(u32),
    #[error("reagent probability {0} is outside [0, 1]")]
    Probability(f64),
    #[error("no valid reaction found in {0} attempts")]
    Exhausted(usize),
}

impl ToySpec {
    pub fn check(&self) -> Result<(), ToyError> {
        if self.nodes_min < 2 || self.nodes_min > self.nodes_max {
            return Err(ToyError::Nodes {
                min: self.nodes_min,
                max: self.nodes_max,
            });
        }
        if self.changes_min > self.changes_max || self.changes_max > 3 {
            return Err(ToyError::Changes {
                min: self.changes_min,
                max: self.changes_max,
            });
        }
        // A tree on n nodes leaves (n-1)(n-2)/2 non-edges.
        let n = self.nodes_min;
        if self.changes_max > (n - 1) * (n - 2) / 2 {
            return Err(ToyError::TooManyChanges {
                changes: self.changes_max,
                nodes: n,
            });
        }
        if self.threshold < 2 {
            return Err(ToyError::Threshold(self.threshold));
        }
        if !(0.0..=1.0).contains(&self.reagent_prob) {
            return Err(ToyError::Probability(self.reagent_prob));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ToyDataset {
    pub train: Vec<ReactionRecord>,
    pub valid: Vec<ReactionRecord>,
    pub test: Vec<ReactionRecord>,
}

fn pick_element(rng: &mut ChaCha8Rng) -> (u8, u32) {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (z, val, w) in ELEMENTS {
        acc += w;
        if u < acc {
            return (z, val);
        }
    }
    (ELEMENTS[0].0, ELEMENTS[0].1)
}

fn max_valence(z: u8) -> u32 {
    ELEMENTS.iter().find(|e| e.0 == z).map_or(0, |e| e.1)
}

/// Random connected graph with single bonds that respects valences.
fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> MolGraph {
    let elems: Vec<(u8, u32)> = (0..n).map(|_| pick_element(rng)).collect();
    let mut degree = vec![0u32; n];
    let mut bonds = Vec::new();
    for i in 1..n {
        let open: Vec<usize> = (0..i).filter(|&j| degree[j] < elems[j].1).collect();
        let j = *open.choose(rng).unwrap_or(&0);
        bonds.push((j, i, BondType::Single));
        degree[i] += 1;
        degree[j] += 1;
    }
    for i in 0..n {
        for j in i + 1..n {
            if degree[i] < elems[i].1
                && degree[j] < elems[j].1
                && !bonds.iter().any(|&(a, b, _)| (a, b) == (i, j))
                && rng.gen_bool(0.1)
            {
                bonds.push((i, j, BondType::Single));
                degree[i] += 1;
                degree[j] += 1;
            }
        }
    }
    let atoms = elems
        .iter()
        .enumerate()
        .map(|(i, &(z, _))| Atom::new(z).with_map(i as u32 + 1))
        .collect();
    MolGraph::from_parts(atoms, &bonds).expect("generated bonds are distinct")
}

/// Gold edits for `g` under the toy rule, in the order the rule makes
/// them, or `None` when the best eligible pair is ever tied or more than
/// `limit` edits would be made.
pub fn toy_rule(g: &MolGraph, threshold: u32, limit: usize) -> Option<Vec<ReactionTriple>> {
    let n = g.len();
    let mut degree: Vec<u32> = g.atoms().iter().map(|a| u32::from(a.degree)).collect();
    let mut bonded: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| g.bond(i, j) != BondType::Null).collect())
        .collect();
    let room = |i: usize, degree: &[u32]| {
        let a = g.atom(i);
        !a.is_reagent && degree[i] < max_valence(a.element)
    };
    let mut edits = Vec::new();
    loop {
        let mut best: Option<((u32, u8, u8), (usize, usize))> = None;
        let mut tied = false;
        for i in 0..n {
            for j in i + 1..n {
                if bonded[i][j] || !room(i, &degree) || !room(j, &degree) {
                    continue;
                }
                let sum = degree[i] + degree[j];
                if sum < threshold {
                    continue;
                }
                let (a, b) = (g.atom(i).element, g.atom(j).element);
                let key = (sum, a.max(b), a.min(b));
                match best {
                    Some((k, _)) if key < k => {}
                    Some((k, _)) if key == k => tied = true,
                    _ => {
                        best = Some((key, (i, j)));
                        tied = false;
                    }
                }
            }
        }
        let Some((_, (i, j))) = best else { return Some(edits) };
        if tied || edits.len() == limit {
            return None;
        }
        edits.push(ReactionTriple::new(i, j, BondType::Single));
        bonded[i][j] = true;
        bonded[j][i] = true;
        degree[i] += 1;
        degree[j] += 1;
    }
}

fn reagent(rng: &mut ChaCha8Rng) -> MolGraph {
    let atoms = if rng.gen_bool(0.5) {
        vec![Atom::new(8)]
    } else {
        vec![Atom::new(16), Atom::new(16)]
    };
    let bonds: Vec<(usize, usize, BondType)> = if atoms.len() == 2 {
        vec![(0, 1, BondType::Single)]
    } else {
        vec![]
    };
    MolGraph::from_parts(atoms, &bonds)
        .expect("fixed reagent is valid")
        .with_reagent_flag(true)
}

/// One record drawn with `rng`.
pub fn toy_record(spec: &ToySpec, rng: &mut ChaCha8Rng, id: String) -> Result<ReactionRecord, ToyError> {
    for _ in 0..MAX_ATTEMPTS {
        let n = rng.gen_range(spec.nodes_min..=spec.nodes_max);
        let mut g = random_graph(rng, n);
        if rng.gen_bool(spec.reagent_prob) {
            g = g.union(&reagent(rng));
        }
        let Some(gold) = toy_rule(&g, spec.threshold, spec.changes_max) else { continue };
        if gold.len() < spec.changes_min {
            continue;
        }
        let edited = apply_all(&g, &gold).expect("toy edits are valid");
        let keep: Vec<usize> = (0..n).collect();
        let product = edited.subgraph(&keep);
        let record = ReactionRecord::new(id.clone(), g, product)
            .expect("toy maps are consistent")
            .expect("toy edits avoid reagents");
        return Ok(record);
    }
    Err(ToyError::Exhausted(MAX_ATTEMPTS))
}

/// Train, validation and test splits, reproducible from `seed`.
pub fn gen_toy_dataset(spec: &ToySpec, seed: u64) -> Result<ToyDataset, ToyError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = |name: &str, count: usize| -> Result<Vec<ReactionRecord>, ToyError> {
        (0..count)
            .map(|i| toy_record(spec, &mut rng, format!("toy-{name}-{i:05}")))
            .collect()
    };
    Ok(ToyDataset {
        train: split("train", spec.train)?,
        valid: split("valid", spec.valid)?,
        test: split("test", spec.test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::{extract_triples, validate_valence, write_format_b};

    fn small() -> ToySpec {
        ToySpec {
            train: 40,
            valid: 10,
            test: 10,
            ..ToySpec::default()
        }
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let a = gen_toy_dataset(&small(), 7).unwrap();
        let b = gen_toy_dataset(&small(), 7).unwrap();
        assert_eq!(write_format_b(&a.train), write_format_b(&b.train));
        assert_eq!(write_format_b(&a.test), write_format_b(&b.test));
        let c = gen_toy_dataset(&small(), 8).unwrap();
        assert_ne!(write_format_b(&a.train), write_format_b(&c.train));
    }

    #[test]
    fn records_follow_the_rule_and_round_trip() {
        let d = gen_toy_dataset(&small(), 1).unwrap();
        for r in d.train.iter().chain(&d.valid).chain(&d.test) {
            assert!((1..=2).contains(&r.gold.len()), "{}", r.id);
            let again = toy_rule(&r.input, 4, 2).unwrap();
            assert_eq!(again.into_iter().collect::<std::collections::BTreeSet<_>>(), r.gold);
            assert_eq!(extract_triples(&r.input, &r.product).unwrap(), r.gold);
            assert!(validate_valence(&r.product).is_empty());
            assert_eq!(r.input.components().len() - usize::from(r.input.atoms().iter().any(|a| a.is_reagent)), 1);
        }
    }

    #[test]
    fn zero_changes_give_empty_gold() {
        let spec = ToySpec {
            changes_min: 0,
            changes_max: 0,
            train: 5,
            valid: 0,
            test: 0,
            ..ToySpec::default()
        };
        let d = gen_toy_dataset(&spec, 3).unwrap();
        assert!(d.train.iter().all(|r| r.gold.is_empty()));
    }

    fn carbons(n: usize, bonds: &[(usize, usize)]) -> MolGraph {
        let atoms = (0..n).map(|i| Atom::new(6).with_map(i as u32 + 1)).collect();
        let bonds: Vec<_> = bonds.iter().map(|&(a, b)| (a, b, BondType::Single)).collect();
        MolGraph::from_parts(atoms, &bonds).unwrap()
    }

    #[test]
    fn rule_follows_degrees_and_threshold() {
        // Path 0-1-2-3-4 has degrees 1,2,2,2,1, so (1,3) is the only pair
        // with sum 4. Bonding it makes (0,3) and (1,4) tie at 4.
        let g = carbons(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        assert_eq!(toy_rule(&g, 5, 3), Some(vec![]));
        // With threshold 4 the first pick is unique but the second ties.
        assert_eq!(toy_rule(&g, 4, 3), None);
        // A star's leaves tie.
        let star = carbons(4, &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(toy_rule(&star, 2, 3), None);
        // Labels break degree ties.
        let atoms = vec![
            Atom::new(6).with_map(1),
            Atom::new(6).with_map(2),
            Atom::new(7).with_map(3),
            Atom::new(8).with_map(4),
        ];
        let g = MolGraph::from_parts(atoms, &[(0, 1, BondType::Single), (0, 2, BondType::Single), (0, 3, BondType::Single)])
            .unwrap();
        let edits = toy_rule(&g, 2, 1);
        assert_eq!(edits, None, "two edits exceed the limit");
        // N-O beats C-O beats C-N at equal degree sums; then O is full.
        let edits: Vec<_> = toy_rule(&g, 2, 3).unwrap().iter().map(|t| t.pair()).collect();
        assert_eq!(edits, vec![(2, 3), (1, 2)]);
    }

    #[test]
    fn infeasible_specs_are_errors() {
        let bad = ToySpec {
            nodes_min: 3,
            nodes_max: 3,
            changes_max: 2,
            ..ToySpec::default()
        };
        assert!(matches!(bad.check(), Err(ToyError::TooManyChanges { .. })));
        let bad = ToySpec {
            nodes_min: 5,
            nodes_max: 4,
            ..ToySpec::default()
        };
        assert!(matches!(gen_toy_dataset(&bad, 0), Err(ToyError::Nodes { .. })));
    }
}
