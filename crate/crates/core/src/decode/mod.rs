//! Beam search over (signal, pair, bond) sequences and product cleanup.
//!
//! Scores are joint log-probabilities divided by the step count. At step
//! `tau` (1-based) every score is first rescaled by `(tau - 1) / tau` and
//! the new sub-action log-probabilities enter divided by `tau`, so after the
//! last step every sequence carries `log p / T` regardless of when it
//! stopped. Each of the three phases expands the surviving beams and keeps
//! the best `width`. A finished beam enters every phase once, unchanged
//! apart from the rescaling.

#[cfg(test)]
mod tests;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::diffcore::{Ctx, ParamStore, Tape};
use crate::gnn::EncodeError;
use crate::molgraph::{
    apply_all, canonical_hash, extract_triples, validate_valence, BondType, EditError, MolGraph,
    ReactionTriple,
};
use crate::policy::{EpisodeState, FrozenState, Policy, StepView};

/// One step of a decoded sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub signal: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bond: Option<BondType>,
}

impl Action {
    pub const STOP: Action = Action {
        signal: false,
        pair: None,
        bond: None,
    };

    pub fn edit(pair: (usize, usize), bond: BondType) -> Self {
        Self {
            signal: true,
            pair: Some(pair),
            bond: Some(bond),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub actions: Vec<Action>,
    /// Normalized score, `log_prob / T`.
    pub score: f64,
    pub log_prob: f64,
    /// Ended with a stop signal rather than at the step limit.
    pub stopped: bool,
    /// Input graph with all edits applied, reagents included.
    pub graph: MolGraph,
    /// `graph` without reagent atoms.
    pub product: MolGraph,
}

impl Candidate {
    pub fn triples(&self) -> Vec<ReactionTriple> {
        self.actions
            .iter()
            .filter_map(|a| Some(ReactionTriple::new(a.pair?.0, a.pair?.1, a.bond?)))
            .collect()
    }

    pub fn is_valid(&self) -> bool {
        validate_valence(&self.product).is_empty()
    }
}

struct Beam {
    state: FrozenState,
    score: f64,
    log_prob: f64,
    live: bool,
    actions: Vec<Action>,
}

/// Per-beam evaluation at the current step, built once and shared by all
/// of that beam's expansions.
struct Expansion {
    tape: Tape,
    state: EpisodeState,
    view: StepView,
    stop: f64,
    go: f64,
    pair: Vec<f64>,
    bonds: BTreeMap<usize, (Vec<BondType>, Vec<f64>)>,
}

#[derive(Clone, Copy, Debug)]
enum Choice {
    /// A beam that had already stopped.
    Finished,
    Stop,
    Go,
    Pair(usize),
    Edit(usize, BondType),
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    beam: usize,
    score: f64,
    log_prob: f64,
    choice: Choice,
}

fn keep_best(entries: &mut Vec<Entry>, width: usize) {
    entries.sort_by(|a, b| b.score.total_cmp(&a.score));
    entries.truncate(width);
}

fn expand(policy: &Policy, store: &ParamStore, beam: &Beam) -> Expansion {
    let tape = Tape::new();
    let (state, view, stop, go, pair) = {
        let cx = Ctx::new(&tape, store);
        let state = beam.state.thaw(&tape);
        let view = policy.view(cx, &state, None);
        let (stop, go, pair) = if view.topk.is_empty() {
            (0.0, f64::NEG_INFINITY, Vec::new())
        } else {
            let (s, g) = policy.signal_log_probs(cx, &view);
            let p = policy.pair_log_probs(cx, &view).expect("non-empty top-K");
            (tape.scalar(s), tape.scalar(g), tape.value(p).values().to_vec())
        };
        (state, view, stop, go, pair)
    };
    Expansion {
        tape,
        state,
        view,
        stop,
        go,
        pair,
        bonds: BTreeMap::new(),
    }
}

/// Graph without reagent atoms.
pub fn product_view(g: &MolGraph) -> MolGraph {
    let keep: Vec<usize> = (0..g.len()).filter(|&i| !g.atom(i).is_reagent).collect();
    g.subgraph(&keep)
}

/// Applies the edits of `actions` to `g` and drops reagents.
pub fn realize_products(g: &MolGraph, actions: &[Action]) -> Result<MolGraph, EditError> {
    let triples: Vec<ReactionTriple> = actions
        .iter()
        .filter_map(|a| Some(ReactionTriple::new(a.pair?.0, a.pair?.1, a.bond?)))
        .collect();
    Ok(product_view(&apply_all(g, &triples)?))
}

/// Runs the search from `g` and returns at most `width` candidates, best
/// first.
pub fn beam_search(
    policy: &Policy,
    store: &ParamStore,
    g: &MolGraph,
    width: usize,
) -> Result<Vec<Candidate>, EncodeError> {
    let width = width.max(1);
    let start = {
        let tape = Tape::new();
        let st = policy.start(Ctx::new(&tape, store), g)?;
        FrozenState::freeze(&tape, &st)
    };
    let mut beams = vec![Beam {
        state: start,
        score: 0.0,
        log_prob: 0.0,
        live: true,
        actions: Vec::new(),
    }];

    for tau in 1..=policy.config.max_steps {
        let t = tau as f64;
        let carry = (t - 1.0) / t;
        let mut cache: Vec<Option<Expansion>> = beams.iter().map(|_| None).collect();

        // Signal phase.
        let mut entries = Vec::new();
        for (i, b) in beams.iter().enumerate() {
            let base = b.score * carry;
            if !b.live {
                entries.push(Entry {
                    beam: i,
                    score: base,
                    log_prob: b.log_prob,
                    choice: Choice::Finished,
                });
                continue;
            }
            let e = expand(policy, store, b);
            entries.push(Entry {
                beam: i,
                score: base + e.stop / t,
                log_prob: b.log_prob + e.stop,
                choice: Choice::Stop,
            });
            if !e.pair.is_empty() {
                entries.push(Entry {
                    beam: i,
                    score: base + e.go / t,
                    log_prob: b.log_prob + e.go,
                    choice: Choice::Go,
                });
            }
            cache[i] = Some(e);
        }
        keep_best(&mut entries, width);

        // Pair phase.
        let mut next = Vec::new();
        for en in entries {
            if let Choice::Go = en.choice {
                let e = cache[en.beam].as_ref().expect("expanded");
                for (k, lp) in e.pair.iter().enumerate() {
                    next.push(Entry {
                        score: en.score + lp / t,
                        log_prob: en.log_prob + lp,
                        choice: Choice::Pair(k),
                        ..en
                    });
                }
            } else {
                next.push(en);
            }
        }
        keep_best(&mut next, width);

        // Bond phase.
        let mut entries = Vec::new();
        for en in next {
            if let Choice::Pair(k) = en.choice {
                let e = cache[en.beam].as_mut().expect("expanded");
                let (options, lps) = e.bonds.entry(k).or_insert_with(|| {
                    let cx = Ctx::new(&e.tape, store);
                    let (o, lp) = policy.bond_log_probs(cx, &e.state, &e.view, k);
                    (o, e.tape.value(lp).values().to_vec())
                });
                for (b, lp) in options.iter().zip(lps.iter()) {
                    entries.push(Entry {
                        score: en.score + lp / t,
                        log_prob: en.log_prob + lp,
                        choice: Choice::Edit(k, *b),
                        ..en
                    });
                }
            } else {
                entries.push(en);
            }
        }
        keep_best(&mut entries, width);

        beams = entries
            .into_iter()
            .map(|en| {
                let parent = &beams[en.beam];
                let mut actions = parent.actions.clone();
                let (state, live) = match en.choice {
                    Choice::Finished => (parent.state.clone(), false),
                    Choice::Stop => {
                        actions.push(Action::STOP);
                        (parent.state.clone(), false)
                    }
                    Choice::Edit(k, bond) => {
                        let e = cache[en.beam].as_ref().expect("expanded");
                        let cx = Ctx::new(&e.tape, store);
                        let st = policy.advance(cx, &e.state, &e.view, k, bond);
                        actions.push(Action::edit(e.view.topk.pairs[k], bond));
                        (FrozenState::freeze(&e.tape, &st), true)
                    }
                    Choice::Go | Choice::Pair(_) => unreachable!("phases complete every edit"),
                };
                Beam {
                    state,
                    score: en.score,
                    log_prob: en.log_prob,
                    live,
                    actions,
                }
            })
            .collect();
    }

    Ok(beams
        .into_iter()
        .map(|b| Candidate {
            product: product_view(&b.state.graph),
            graph: b.state.graph,
            score: b.score,
            log_prob: b.log_prob,
            stopped: !b.live,
            actions: b.actions,
        })
        .collect())
}

/// Removes candidates whose product breaks valence rules, then keeps the
/// first of each group with isomorphic products. Order is preserved.
pub fn postprocess(candidates: Vec<Candidate>) -> Vec<Candidate> {
    postprocess_with(candidates, true, true)
}

pub fn postprocess_with(candidates: Vec<Candidate>, drop_invalid: bool, dedup: bool) -> Vec<Candidate> {
    let mut seen = HashSet::new();
    candidates
        .into_iter()
        .filter(|c| !drop_invalid || c.is_valid())
        .filter(|c| !dedup || seen.insert(canonical_hash(&c.product, false)))
        .collect()
}

/// True when every gold product atom has exactly the gold bonds in
/// `candidate`, and no bond links a gold product atom to an atom outside
/// the gold product. Fragments made only of other atoms are ignored.
pub fn match_gold(candidate: &MolGraph, gold_product: &MolGraph) -> bool {
    matches!(extract_triples(candidate, gold_product), Ok(t) if t.is_empty())
}
