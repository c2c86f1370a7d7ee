use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diffcore::ParamStore;
use crate::molgraph::{parse_smiles, read_format_a, Atom};
use crate::pairnet::{PairConfig, PairNetwork};
use crate::policy::PolicyConfig;

fn toy_config() -> PolicyConfig {
    PolicyConfig {
        pair: PairConfig {
            network: PairNetwork::Global,
            hidden: 4,
            score_hidden: 3,
            top_k: 3,
        },
        bond_types: 3,
        max_steps: 2,
        ..PolicyConfig::small()
    }
}

fn policy(cfg: PolicyConfig, seed: u64) -> (ParamStore, Policy) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let p = Policy::new(&mut store, cfg, &mut rng).unwrap();
    (store, p)
}

fn random_graph(rng: &mut ChaCha8Rng) -> MolGraph {
    let n = rng.gen_range(3..=6);
    let atoms: Vec<Atom> = (0..n)
        .map(|i| Atom::new([6, 7, 8][rng.gen_range(0..3)]).with_map(i as u32 + 1))
        .collect();
    let mut bonds = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.3) {
                bonds.push((i, j, if rng.gen_bool(0.8) { BondType::Single } else { BondType::Double }));
            }
        }
    }
    MolGraph::from_parts(atoms, &bonds).unwrap()
}

/// Every sequence the policy can emit within the step limit, with its
/// length-normalized joint log-probability.
fn enumerate(policy: &Policy, store: &ParamStore, g: &MolGraph) -> Vec<(Vec<Action>, f64)> {
    fn rec(
        policy: &Policy,
        store: &ParamStore,
        st: &FrozenState,
        lp: f64,
        actions: &mut Vec<Action>,
        out: &mut Vec<(Vec<Action>, f64)>,
    ) {
        if st.step == policy.config.max_steps {
            out.push((actions.clone(), lp));
            return;
        }
        let tape = Tape::new();
        let cx = Ctx::new(&tape, store);
        let state = st.thaw(&tape);
        let view = policy.view(cx, &state, None);
        actions.push(Action::STOP);
        if view.topk.is_empty() {
            out.push((actions.clone(), lp));
            actions.pop();
            return;
        }
        let (stop, go) = policy.signal_log_probs(cx, &view);
        out.push((actions.clone(), lp + tape.scalar(stop)));
        actions.pop();
        let go = tape.scalar(go);
        let pairs = tape.value(policy.pair_log_probs(cx, &view).unwrap()).values().to_vec();
        for (k, plp) in pairs.iter().enumerate() {
            let (options, blp) = policy.bond_log_probs(cx, &state, &view, k);
            let blp = tape.value(blp).values().to_vec();
            for (b, l) in options.iter().zip(blp) {
                let next = policy.advance(cx, &state, &view, k, *b);
                actions.push(Action::edit(view.topk.pairs[k], *b));
                rec(policy, store, &FrozenState::freeze(&tape, &next), lp + go + plp + l, actions, out);
                actions.pop();
            }
        }
    }
    let tape = Tape::new();
    let st = policy.start(Ctx::new(&tape, store), g).unwrap();
    let mut out = Vec::new();
    rec(policy, store, &FrozenState::freeze(&tape, &st), 0.0, &mut Vec::new(), &mut out);
    let t = policy.config.max_steps as f64;
    for o in &mut out {
        o.1 /= t;
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

#[test]
fn wide_beam_equals_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for inst in 0..20 {
        let g = random_graph(&mut rng);
        let (store, p) = policy(toy_config(), inst);
        let oracle = enumerate(&p, &store, &g);
        let beam = beam_search(&p, &store, &g, oracle.len() + 5).unwrap();
        assert_eq!(beam.len(), oracle.len(), "instance {inst}");
        for (c, (_, s)) in beam.iter().zip(&oracle) {
            assert!((c.score - s).abs() < 1e-9, "instance {inst}: {} vs {s}", c.score);
        }
        for c in &beam {
            let o = oracle.iter().find(|(a, _)| *a == c.actions).expect("sequence in oracle");
            assert!((o.1 - c.score).abs() < 1e-9);
        }
    }
}

#[test]
fn scores_are_sorted_and_bounded_by_exhaustive_best() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for inst in 0..10 {
        let g = random_graph(&mut rng);
        let (store, p) = policy(toy_config(), 100 + inst);
        let best = enumerate(&p, &store, &g)[0].1;
        for width in [1, 2, 5] {
            let beam = beam_search(&p, &store, &g, width).unwrap();
            assert!(beam.len() <= width);
            assert!(beam.windows(2).all(|w| w[0].score >= w[1].score));
            assert!(beam[0].score <= best + 1e-12);
        }
    }
}

#[test]
fn search_is_repeatable_and_leaves_input_alone() {
    let g = parse_smiles("[CH3:1][CH2:2][OH:3].[NH3:4]").unwrap();
    let before = canonical_hash(&g, true);
    let (store, p) = policy(PolicyConfig::small(), 3);
    let a = beam_search(&p, &store, &g, 6).unwrap();
    let b = beam_search(&p, &store, &g, 6).unwrap();
    assert_eq!(canonical_hash(&g, true), before);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.actions, y.actions);
        assert_eq!(x.score, y.score);
        assert_eq!(realize_products(&g, &x.actions).unwrap(), x.product);
    }
}

#[test]
fn immediate_stop_keeps_reactants() {
    let g = parse_smiles("[CH4:1].[OH2:2]").unwrap();
    let (mut store, p) = policy(PolicyConfig::small(), 4);
    // A large negative output bias makes stopping near certain.
    let id = store
        .ids()
        .filter(|&i| store.name(i).starts_with("policy.signal") && store.name(i).ends_with(".b"))
        .last()
        .unwrap();
    store.value_mut(id).fill(-30.0);
    let beam = beam_search(&p, &store, &g, 3).unwrap();
    assert_eq!(beam[0].actions, vec![Action::STOP]);
    assert_eq!(beam[0].product, g);
    assert!(beam[0].stopped);
}

#[test]
fn realize_drops_reagents_and_commutes() {
    let r = read_format_a("[CH3:1][CH2:2][OH:3].[NH3:4]>[Cl-]>[CH2:1]=[C:2]([NH2:4])[OH:3]")
        .unwrap()
        .0
        .remove(0);
    let empty = realize_products(&r.input, &[]).unwrap();
    assert_eq!(empty.len(), 4);
    let acts: Vec<Action> = r.gold.iter().map(|t| Action::edit(t.pair(), t.new_bond)).collect();
    let fwd = realize_products(&r.input, &acts).unwrap();
    let rev: Vec<Action> = acts.iter().rev().cloned().collect();
    let back = realize_products(&r.input, &rev).unwrap();
    assert_eq!(canonical_hash(&fwd, true), canonical_hash(&back, true));
    assert!(match_gold(&fwd, &r.product));
}

fn candidate(g: MolGraph, score: f64) -> Candidate {
    Candidate {
        actions: vec![],
        score,
        log_prob: score,
        stopped: true,
        product: product_view(&g),
        graph: g,
    }
}

#[test]
fn postprocess_filters_invalid_and_duplicates() {
    let bad = parse_smiles("C(C)(C)(C)(C)C").unwrap();
    let a = parse_smiles("[CH3:1][OH:2]").unwrap();
    let a_other_maps = parse_smiles("[OH:5][CH3:9]").unwrap();
    let b = parse_smiles("CC").unwrap();
    let out = postprocess(vec![
        candidate(bad.clone(), -0.1),
        candidate(a, -0.2),
        candidate(a_other_maps, -0.3),
        candidate(b, -0.4),
    ]);
    let scores: Vec<f64> = out.iter().map(|c| c.score).collect();
    assert_eq!(scores, vec![-0.2, -0.4]);
    let kept = postprocess_with(vec![candidate(bad, -0.1)], false, true);
    assert_eq!(kept.len(), 1);
}

#[test]
fn match_gold_rules() {
    let gold = parse_smiles("[CH3:1][OH:2]").unwrap();
    assert!(match_gold(&parse_smiles("[CH3:1][OH:2]").unwrap(), &gold));
    assert!(!match_gold(&parse_smiles("[CH2:1]=[O:2]").unwrap(), &gold));
    // A detached leftover fragment does not matter.
    assert!(match_gold(&parse_smiles("[CH3:1][OH:2].[Na+:3]").unwrap(), &gold));
    // A bond from a product atom to a leftover atom does.
    assert!(!match_gold(&parse_smiles("[CH3:1][O:2][Na:3]").unwrap(), &gold));
    // Missing product atom.
    assert!(!match_gold(&parse_smiles("[CH4:1]").unwrap(), &gold));
}
