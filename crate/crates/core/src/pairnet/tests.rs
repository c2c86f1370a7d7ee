use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diffcore::{check_gradients, Tape};
use crate::gnn::{Gnn, GnnConfig};
use crate::molgraph::{parse_smiles, BondType};

struct Fixture {
    store: ParamStore,
    gnn: Gnn,
    net: PairNet,
}

fn fixture(network: PairNetwork, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let gcfg = GnnConfig {
        steps: 2,
        atom_embed: 5,
        bond_embed: 3,
        state: 6,
    };
    let gnn = Gnn::new(&mut store, gcfg, &mut rng).unwrap();
    let cfg = PairConfig {
        network,
        hidden: 5,
        score_hidden: 4,
        top_k: 3,
    };
    let net = PairNet::new(&mut store, cfg, 6, 4, gnn.bond_embed, &mut rng).unwrap();
    Fixture { store, gnn, net }
}

fn scores_for(f: &Fixture, g: &MolGraph, pairs: Vec<(usize, usize)>) -> Vec<f64> {
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &f.store);
    let (x, _) = f.gnn.run(cx, g);
    let h = tape.constant(Tensor::row(vec![0.2, -0.1, 0.4, 0.3]));
    f.net.score(cx, g, x, h, pairs).values
}

#[test]
fn pair_order_does_not_matter() {
    for network in [PairNetwork::Local, PairNetwork::Global] {
        let f = fixture(network, 1);
        let g = parse_smiles("CC(=O)O.N").unwrap();
        let a = scores_for(&f, &g, vec![(1, 4), (0, 2)]);
        let b = scores_for(&f, &g, vec![(4, 1), (2, 0)]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

#[test]
fn unbonded_pairs_use_null_embedding() {
    let mut f = fixture(PairNetwork::Local, 2);
    let g = parse_smiles("CCO").unwrap();
    let pairs = vec![(0, 1), (0, 2)];
    let before = scores_for(&f, &g, pairs.clone());
    let e = f.gnn.bond_embed;
    for c in 0..3 {
        let v = f.store.value(e).get(BondType::Null.index(), c);
        f.store.value_mut(e).set(BondType::Null.index(), c, v + 0.5);
    }
    // Scores only; the encoder also reads bond rows but never the NULL row.
    let after = scores_for(&f, &g, pairs);
    assert_eq!(before[0], after[0]);
    assert_ne!(before[1], after[1]);
}

#[test]
fn zero_weights_give_equal_scores() {
    let mut f = fixture(PairNetwork::Global, 3);
    for id in f.store.ids().collect::<Vec<_>>() {
        if f.store.name(id).starts_with("pair.") {
            f.store.value_mut(id).fill(0.0);
        }
    }
    let g = parse_smiles("CC(=O)O.N").unwrap();
    let s = scores_for(&f, &g, candidate_pairs(&g, &BTreeSet::new()));
    assert_eq!(s.len(), 10);
    assert!(s.iter().all(|&v| v == s[0]));
}

#[test]
fn attention_rows_are_distributions() {
    let f = fixture(PairNetwork::Global, 4);
    let g = parse_smiles("CC(=O)O.N").unwrap();
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &f.store);
    let (x, _) = f.gnn.run(cx, &g);
    let xa = f.net.augment(cx, &g, x);
    let (a, _) = f.net.attention(cx, &g, xa).unwrap();
    let a = tape.value(a);
    for i in 0..a.rows() {
        let total: f64 = a.row_slice(i).iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn two_atom_context_is_convex_combination() {
    let f = fixture(PairNetwork::Global, 5);
    let g = parse_smiles("CO").unwrap();
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &f.store);
    let (x, _) = f.gnn.run(cx, &g);
    let xa = f.net.augment(cx, &g, x);
    let (a, c) = f.net.attention(cx, &g, xa).unwrap();
    let (a, c, xv) = (tape.value(a), tape.value(c), tape.value(xa));
    for i in 0..2 {
        let w = a.get(i, 0);
        assert!((0.0..=1.0).contains(&w));
        for k in 0..xv.cols() {
            let expect = w * xv.get(0, k) + (1.0 - w) * xv.get(1, k);
            assert!((c.get(i, k) - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn gradient_reaches_attention_output_layer() {
    let mut f = fixture(PairNetwork::Global, 6);
    let g = parse_smiles("CC(=O)O").unwrap();
    let v2 = f.store.id("pair.attn.v2").unwrap();
    let gnn = f.gnn.clone();
    let net = f.net.clone();
    let report = check_gradients(&mut f.store, &[v2], 1e-5, 1e-8, |tape, s| {
        let cx = Ctx::new(tape, s);
        let (x, _) = gnn.run(cx, &g);
        let h = tape.constant(Tensor::row(vec![0.2, -0.1, 0.4, 0.3]));
        let scores = net.score(cx, &g, x, h, candidate_pairs(&g, &BTreeSet::new()));
        tape.sum(scores.s.unwrap())
    })
    .unwrap();
    assert!(report.analytic != 0.0);
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn top_k_examples() {
    let pairs = [(0, 1), (0, 2), (1, 2)];
    assert_eq!(select_top_k(&pairs, &[0.9, 0.5, 0.3], 2), vec![0, 1]);
    assert_eq!(select_top_k(&pairs, &[0.3, 0.9, 0.9], 2), vec![1, 2]);
    assert_eq!(select_top_k(&pairs, &[0.3, 0.9, 0.9], 10), vec![1, 2, 0]);
    assert!(select_top_k(&[], &[], 3).is_empty());
}

#[test]
fn candidates_skip_reagents_and_consumed_pairs() {
    let g = parse_smiles("CCO").unwrap().union(&parse_smiles("O").unwrap().with_reagent_flag(true));
    let consumed: BTreeSet<_> = [(0, 1)].into_iter().collect();
    assert_eq!(candidate_pairs(&g, &consumed), vec![(0, 2), (1, 2)]);
    let all_reagent = parse_smiles("CC").unwrap().with_reagent_flag(true);
    assert!(candidate_pairs(&all_reagent, &BTreeSet::new()).is_empty());
}

#[test]
fn masked_best_pair_yields_next_best() {
    let f = fixture(PairNetwork::Global, 7);
    let g = parse_smiles("CC(=O)O.N").unwrap();
    let all = candidate_pairs(&g, &BTreeSet::new());
    let s = scores_for(&f, &g, all.clone());
    let best = select_top_k(&all, &s, 1)[0];
    let consumed: BTreeSet<_> = [all[best]].into_iter().collect();
    let rest = candidate_pairs(&g, &consumed);
    let s2 = scores_for(&f, &g, rest.clone());
    let top = select_top_k(&rest, &s2, 3);
    let mut expect = select_top_k(&all, &s, 4);
    expect.remove(0);
    let got: Vec<_> = top.iter().map(|&p| rest[p]).collect();
    let want: Vec<_> = expect.iter().map(|&p| all[p]).collect();
    assert_eq!(got, want);
}

proptest! {
    #[test]
    fn top_k_is_sorted_and_dominant(scores in prop::collection::vec(-3i32..3, 0..30), k in 0usize..12) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let pairs: Vec<(usize, usize)> = (0..scores.len()).map(|i| (i / 7, i % 7 + 7)).collect();
        let top = select_top_k(&pairs, &scores, k);
        prop_assert_eq!(top.len(), k.min(scores.len()));
        for w in top.windows(2) {
            prop_assert!(scores[w[0]] > scores[w[1]] || (scores[w[0]] == scores[w[1]] && pairs[w[0]] < pairs[w[1]]));
        }
        if let Some(&last) = top.last() {
            for i in 0..scores.len() {
                if !top.contains(&i) {
                    prop_assert!(scores[i] <= scores[last]);
                }
            }
        }
    }
}
