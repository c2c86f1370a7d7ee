use std::collections::HashSet;

use gtpn_core::decode::{
    beam_search, match_gold, postprocess, product_view, realize_products, Action,
};
use gtpn_core::harness::{toy_record, ToySpec};
use gtpn_core::molgraph::canonical_hash;
use gtpn_core::policy::PolicyConfig;
use gtpn_core::training::Model;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(max_steps: usize) -> PolicyConfig {
    PolicyConfig {
        max_steps,
        ..PolicyConfig::small()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn beam_candidates_are_consistent(
        data_seed in 0u64..10_000,
        model_seed in 0u64..10_000,
        width in 1usize..8,
        max_steps in 1usize..4,
    ) {
        let spec = ToySpec { nodes_min: 4, nodes_max: 7, ..ToySpec::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
        let record = toy_record(&spec, &mut rng, "r".into()).unwrap();
        let model = Model::new(config(max_steps), model_seed).unwrap();
        let out = beam_search(&model.policy, &model.store, &record.input, width).unwrap();

        prop_assert!(!out.is_empty());
        prop_assert!(out.len() <= width);
        prop_assert!(out.windows(2).all(|w| w[0].score >= w[1].score));
        let distinct: HashSet<Vec<Action>> = out.iter().map(|c| c.actions.clone()).collect();
        prop_assert_eq!(distinct.len(), out.len());
        for c in &out {
            prop_assert!(c.score.is_finite() && c.log_prob <= 1e-12);
            prop_assert!((c.score - c.log_prob / max_steps as f64).abs() < 1e-12);
            prop_assert!(c.actions.len() <= max_steps);
            let last_stop = c.actions.last().is_some_and(|a| !a.signal);
            prop_assert_eq!(c.stopped, last_stop);
            prop_assert!(c.actions[..c.actions.len() - c.stopped as usize].iter().all(|a| a.signal));
            let realized = realize_products(&record.input, &c.actions).unwrap();
            prop_assert_eq!(realized.bonds(), c.product.bonds());
            prop_assert_eq!(product_view(&c.graph).bonds(), c.product.bonds());
            // reagents are never edited
            for t in c.triples() {
                prop_assert!(!record.input.atom(t.u).is_reagent && !record.input.atom(t.v).is_reagent);
            }
        }

        let kept = postprocess(out.clone());
        prop_assert!(kept.iter().all(|c| c.is_valid()));
        let hashes: HashSet<_> = kept.iter().map(|c| canonical_hash(&c.product, false)).collect();
        prop_assert_eq!(hashes.len(), kept.len());
        let mut it = out.iter();
        for k in &kept {
            prop_assert!(it.any(|c| c.actions == k.actions), "postprocess keeps the order");
        }
    }

    #[test]
    fn gold_edits_always_match_gold(data_seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
        let record = toy_record(&ToySpec::default(), &mut rng, "r".into()).unwrap();
        let actions: Vec<Action> = record
            .gold
            .iter()
            .map(|t| Action::edit(t.pair(), t.new_bond))
            .collect();
        let graph = gtpn_core::molgraph::apply_all(&record.input, &record.gold).unwrap();
        prop_assert!(match_gold(&graph, &record.product));
        prop_assert!(match_gold(&realize_products(&record.input, &actions).unwrap(), &record.product));
        if !record.gold.is_empty() {
            prop_assert!(!match_gold(&record.input, &record.product));
        }
    }
}
