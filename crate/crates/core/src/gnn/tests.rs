use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diffcore::{check_gradients, Tape};
use crate::molgraph::{apply_triple, parse_smiles, ReactionTriple};

fn small() -> GnnConfig {
    GnnConfig {
        steps: 3,
        atom_embed: 6,
        bond_embed: 4,
        state: 7,
    }
}

fn model(seed: u64) -> (ParamStore, Gnn) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let gnn = Gnn::new(&mut store, small(), &mut rng).unwrap();
    (store, gnn)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row_slice(i).to_vec()).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn feature_width_is_embedding_plus_attributes() {
    assert_eq!(GnnConfig::default().feature_width(), 56);
    let (store, gnn) = model(1);
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &store);
    let g = parse_smiles("CCO").unwrap();
    let v = gnn.atom_feature_vector(cx, &g, 2).unwrap();
    assert_eq!(tape.shape(v), [1, 6 + ATTRIBUTE_COUNT]);
}

#[test]
fn unknown_element_is_rejected() {
    let g = MolGraph::from_parts(vec![crate::molgraph::Atom::new(92)], &[]).unwrap();
    let (store, gnn) = model(1);
    let tape = Tape::new();
    assert!(matches!(
        gnn.atom_feature_vector(Ctx::new(&tape, &store), &g, 0),
        Err(EncodeError::UnknownElement { atom: 0, .. })
    ));
}

#[test]
fn identical_atoms_start_identical() {
    let (store, gnn) = model(2);
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &store);
    let g = parse_smiles("C.C").unwrap();
    let v = gnn.features(cx, &g);
    let x = tape.value(gnn.init_states(cx, v));
    assert_eq!(x.shape(), [2, 7]);
    assert_eq!(x.row_slice(0), x.row_slice(1));
}

#[test]
fn zero_steps_leave_states_unchanged() {
    let (store, gnn) = model(3);
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &store);
    let g = parse_smiles("CC(=O)N").unwrap();
    let v = gnn.features(cx, &g);
    let x0 = gnn.init_states(cx, v);
    assert_eq!(gnn.encode(cx, &g, x0, v, 0), x0);
}

#[test]
fn messages_depend_on_direction() {
    let (store, gnn) = model(4);
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &store);
    let a = tape.constant(Tensor::row(vec![0.5, -0.1, 0.3, 0.9, 0.0, 0.2, 0.7]));
    let b = tape.constant(Tensor::row(vec![0.1, 0.8, -0.4, 0.2, 0.6, 0.3, 0.1]));
    let ab = tape.value(gnn.message(cx, a, b, BondType::Single));
    let ba = tape.value(gnn.message(cx, b, a, BondType::Single));
    assert_ne!(ab.values(), ba.values());
}

#[test]
fn single_neighbor_aggregate_is_that_message() {
    let (store, gnn) = model(5);
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &store);
    let g = parse_smiles("CO").unwrap();
    let (x, _) = gnn.run(cx, &g);
    let m = tape.value(gnn.aggregate(cx, &g, x, &[0]));
    let x0 = tape.gather_rows(x, &[0]);
    let x1 = tape.gather_rows(x, &[1]);
    let direct = tape.value(gnn.message(cx, x0, x1, BondType::Single));
    assert!(close(m.values(), direct.values(), 1e-14));
}

#[test]
fn isolated_node_aggregate_is_zero() {
    let (store, gnn) = model(6);
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &store);
    let g = parse_smiles("C.O").unwrap();
    let (x, _) = gnn.run(cx, &g);
    let m = tape.value(gnn.aggregate(cx, &g, x, &[0, 1]));
    assert!(m.values().iter().all(|&v| v == 0.0));
}

#[test]
fn highway_gate_extremes_and_convexity() {
    let (mut store, gnn) = model(7);
    let g = parse_smiles("CCN").unwrap();
    for (bias, expect_carry) in [(-800.0, true), (800.0, false)] {
        store.value_mut(gnn.gate_bias()).fill(bias);
        let tape = Tape::new();
        let cx = Ctx::new(&tape, &store);
        let v = gnn.features(cx, &g);
        let x = gnn.init_states(cx, v);
        let m = gnn.aggregate(cx, &g, x, &[0, 1, 2]);
        let out = tape.value(gnn.highway(cx, x, m, v));
        let input = tape.concat(&[x, m, v]);
        let cand = tape.value(tape.relu(gnn.transform.forward(cx, input)));
        let target = if expect_carry { tape.value(x) } else { cand };
        assert!(close(out.values(), target.values(), 1e-12));
    }
    store.value_mut(gnn.gate_bias()).fill(0.0);
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &store);
    let v = gnn.features(cx, &g);
    let x = gnn.init_states(cx, v);
    let m = gnn.aggregate(cx, &g, x, &[0, 1, 2]);
    let out = tape.value(gnn.highway(cx, x, m, v));
    let input = tape.concat(&[x, m, v]);
    let cand = tape.value(tape.relu(gnn.transform.forward(cx, input)));
    let xv = tape.value(x);
    for k in 0..out.len() {
        let (a, b) = (xv.values()[k], cand.values()[k]);
        let o = out.values()[k];
        assert!(o >= a.min(b) - 1e-15 && o <= a.max(b) + 1e-15);
    }
}

#[test]
fn automorphic_oxygens_stay_equal() {
    let (store, gnn) = model(8);
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &store);
    let g = parse_smiles("O=C=O").unwrap();
    let v = gnn.features(cx, &g);
    let mut x = gnn.init_states(cx, v);
    for _ in 0..4 {
        x = gnn.step(cx, &g, x, v, None);
        let xv = tape.value(x);
        assert_eq!(xv.row_slice(0), xv.row_slice(2));
    }
}

#[test]
fn encoding_is_permutation_equivariant() {
    let (store, gnn) = model(9);
    let g = parse_smiles("CC(=O)Nc1ccccc1.[Na+]").unwrap();
    let n = g.len();
    let perm: Vec<usize> = (0..n).map(|i| (i * 5 + 3) % n).collect();
    let pg = g.permuted(&perm);
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &store);
    let (x, _) = gnn.run(cx, &g);
    let (px, _) = gnn.run(cx, &pg);
    let (x, px) = (rows(&tape.value(x)), rows(&tape.value(px)));
    for k in 0..n {
        assert!(close(&x[perm[k]], &px[k], 1e-12), "node {k}");
    }
}

#[test]
fn one_step_sees_only_direct_neighbors() {
    let (store, gnn) = model(10);
    let a = parse_smiles("CCCCC").unwrap();
    let b = parse_smiles("CCCCN").unwrap();
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &store);
    let step = |g: &MolGraph| {
        let v = gnn.features(cx, g);
        let x = gnn.init_states(cx, v);
        rows(&tape.value(gnn.step(cx, g, x, v, None)))
    };
    let (sa, sb) = (step(&a), step(&b));
    for i in 0..3 {
        assert_eq!(sa[i], sb[i], "node {i} is two or more bonds from the change");
    }
    assert_ne!(sa[3], sb[3]);
}

#[test]
fn refresh_after_edit_is_local_then_global() {
    let (store, gnn) = model(11);
    let g = parse_smiles("CCO.CCCCN").unwrap();
    let edited = apply_triple(&g, &ReactionTriple::new(1, 2, BondType::Null)).unwrap();
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &store);
    let (x, _) = gnn.run(cx, &g);
    let refreshed = rows(&tape.value(gnn.refresh_after_edit(cx, &edited, x, 1, 2)));
    let v = gnn.features(cx, &edited);
    let plain = rows(&tape.value(gnn.step(cx, &edited, x, v, None)));
    // The second component is far from the edit, so it only sees the global step.
    for i in 3..g.len() {
        assert_eq!(refreshed[i], plain[i]);
    }
    assert_ne!(refreshed[1], plain[1]);
    let again = rows(&tape.value(gnn.refresh_after_edit(cx, &edited, x, 1, 2)));
    assert_eq!(again, refreshed);
}

#[test]
fn gradients_flow_through_refresh() {
    let (mut store, gnn) = model(12);
    let g = parse_smiles("CC(O)C=O").unwrap();
    let edited = apply_triple(&g, &ReactionTriple::new(0, 4, BondType::Single)).unwrap();
    let ids: Vec<_> = store.ids().collect();
    let report = check_gradients(&mut store, &ids, 1e-5, 1e-7, |tape, s| {
        let cx = Ctx::new(tape, s);
        let (x, _) = gnn.run(cx, &g);
        let y = gnn.refresh_after_edit(cx, &edited, x, 0, 4);
        let sq = tape.mul(y, y);
        tape.sum(sq)
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-5, "{report:?}");
}
