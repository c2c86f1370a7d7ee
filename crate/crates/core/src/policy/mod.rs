//! Edit environment and the three prediction heads.
//!
//! Each step first scores candidate pairs and takes the top K. The signal
//! head decides whether to continue, the pair head picks one of the K pairs
//! and the bond head picks its new bond type. Executing an edit updates the
//! graph, refreshes node states and advances the recurrent state with the
//! chosen pair representation.

mod rollout;

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Ctx, DiffError, Gru, Linear, Mlp2, ParamId, ParamStore, Tape, Tensor, Var};
use crate::gnn::{check_vocabulary, EncodeError, Gnn, GnnConfig};
use crate::molgraph::{apply_triple, BondType, MolGraph, ReactionTriple};
use crate::pairnet::{candidate_pairs, PairConfig, PairNet, PairScores, TopKSet};

pub use rollout::{
    rollout_supervised, ActionSource, Episode, RewardConfig, StepRecord, Trace, TraceStep,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub gnn: GnnConfig,
    pub pair: PairConfig,
    pub recurrent: usize,
    pub head_hidden: usize,
    pub value_hidden: usize,
    /// Bond types the bond head may emit: the first `bond_types` of
    /// `NULL, SINGLE, DOUBLE, TRIPLE, AROMATIC`.
    pub bond_types: usize,
    pub max_steps: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            gnn: GnnConfig::default(),
            pair: PairConfig::default(),
            recurrent: 101,
            head_hidden: 81,
            value_hidden: 99,
            bond_types: 5,
            max_steps: 8,
        }
    }
}

impl PolicyConfig {
    /// Tiny widths for gradient checks and fast tests.
    pub fn small() -> Self {
        Self {
            gnn: GnnConfig {
                steps: 2,
                atom_embed: 4,
                bond_embed: 3,
                state: 5,
            },
            pair: PairConfig {
                network: crate::pairnet::PairNetwork::Global,
                hidden: 4,
                score_hidden: 3,
                top_k: 4,
            },
            recurrent: 4,
            head_hidden: 3,
            value_hidden: 3,
            bond_types: 5,
            max_steps: 4,
        }
    }

    pub fn bond_vocabulary(&self) -> &'static [BondType] {
        &BondType::ALL[..self.bond_types]
    }
}

/// Model state in the middle of an episode. Vars live on one tape.
#[derive(Clone, Debug)]
pub struct EpisodeState {
    pub graph: MolGraph,
    pub x: Var,
    pub h: Var,
    pub consumed: BTreeSet<(usize, usize)>,
    pub step: usize,
}

/// [`EpisodeState`] detached from any tape.
#[derive(Clone, Debug)]
pub struct FrozenState {
    pub graph: MolGraph,
    pub x: Arc<Tensor>,
    pub h: Arc<Tensor>,
    pub consumed: BTreeSet<(usize, usize)>,
    pub step: usize,
}

impl FrozenState {
    pub fn freeze(tape: &Tape, st: &EpisodeState) -> Self {
        Self {
            graph: st.graph.clone(),
            x: tape.value(st.x),
            h: tape.value(st.h),
            consumed: st.consumed.clone(),
            step: st.step,
        }
    }

    /// Re-enters the state on `tape` as constants.
    pub fn thaw(&self, tape: &Tape) -> EpisodeState {
        EpisodeState {
            graph: self.graph.clone(),
            x: tape.constant((*self.x).clone()),
            h: tape.constant((*self.h).clone()),
            consumed: self.consumed.clone(),
            step: self.step,
        }
    }
}

/// Everything the heads need at one step.
#[derive(Clone, Debug)]
pub struct StepView {
    pub scores: PairScores,
    pub topk: TopKSet,
    /// `1 x 1` logit of continuing.
    pub signal_logit: Var,
    /// `1 x 1` state value.
    pub value: Var,
}

impl StepView {
    /// Probability of continuing.
    pub fn continue_probability(&self, tape: &Tape) -> f64 {
        crate::diffcore::sigmoid(tape.scalar(self.signal_logit))
    }
}

#[derive(Clone, Debug)]
pub struct Policy {
    pub config: PolicyConfig,
    pub gnn: Gnn,
    pub pairnet: PairNet,
    h0: ParamId,
    gru: Gru,
    pool: Linear,
    signal: Mlp2,
    bond: Mlp2,
    value: Mlp2,
}

impl Policy {
    /// Registers every parameter in `store`.
    pub fn new<R: Rng>(store: &mut ParamStore, config: PolicyConfig, rng: &mut R) -> Result<Self, DiffError> {
        let gnn = Gnn::new(store, config.gnn, rng)?;
        let pairnet = PairNet::new(store, config.pair, config.gnn.state, config.recurrent, gnn.bond_embed, rng)?;
        let hz = config.pair.hidden;
        let hr = config.recurrent;
        let de = config.gnn.bond_embed;
        Ok(Self {
            config,
            h0: store.insert_zeros("policy.h0", 1, hr)?,
            gru: Gru::new(store, "policy.gru", hz, hr, rng)?,
            pool: Linear::new(store, "policy.pool", hz, hz, false, rng)?,
            signal: Mlp2::new(store, "policy.signal", hr + hz, config.head_hidden, 1, rng)?,
            bond: Mlp2::new(store, "policy.bond", hr + hz + de, config.head_hidden, 1, rng)?,
            value: Mlp2::new(store, "policy.value", hz, config.value_hidden, 1, rng)?,
            gnn,
            pairnet,
        })
    }

    /// Encodes `g` and sets the recurrent state to its learned initial value.
    pub fn start(&self, cx: Ctx, g: &MolGraph) -> Result<EpisodeState, EncodeError> {
        check_vocabulary(g)?;
        let (x, _) = self.gnn.run(cx, g);
        Ok(EpisodeState {
            graph: g.clone(),
            x,
            h: cx.p(self.h0),
            consumed: BTreeSet::new(),
            step: 0,
        })
    }

    /// Scores pairs, selects the top K (or the `forced` list) and evaluates
    /// the signal and value heads.
    pub fn view(&self, cx: Ctx, st: &EpisodeState, forced: Option<&[(usize, usize)]>) -> StepView {
        let pairs = candidate_pairs(&st.graph, &st.consumed);
        let scores = self.pairnet.score(cx, &st.graph, st.x, st.h, pairs);
        let topk = self.pairnet.top_k(cx, &scores, forced);
        let pooled = self.pooled_rep(cx, &topk);
        let signal_logit = self.signal.forward(cx, cx.tape.concat(&[st.h, pooled]));
        let value = self.value_estimate(cx, &topk);
        StepView {
            scores,
            topk,
            signal_logit,
            value,
        }
    }

    /// Mean of `W z` over the top-K entries; zero when the set is empty.
    pub fn pooled_rep(&self, cx: Ctx, topk: &TopKSet) -> Var {
        match topk.z {
            Some(z) => cx.tape.mean_axis(self.pool.forward(cx, z), 0),
            None => cx.tape.constant(Tensor::zeros(1, self.config.pair.hidden)),
        }
    }

    /// Value of the mean top-K representation; a zero pool when empty.
    pub fn value_estimate(&self, cx: Ctx, topk: &TopKSet) -> Var {
        let pooled = match topk.z {
            Some(z) => cx.tape.mean_axis(z, 0),
            None => cx.tape.constant(Tensor::zeros(1, self.config.pair.hidden)),
        };
        self.value.forward(cx, pooled)
    }

    /// `(log p(stop), log p(continue))`.
    pub fn signal_log_probs(&self, cx: Ctx, view: &StepView) -> (Var, Var) {
        let t = cx.tape;
        (
            t.log_sigmoid(t.scale(view.signal_logit, -1.0)),
            t.log_sigmoid(view.signal_logit),
        )
    }

    /// Log-softmax over the top-K scores (`K x 1`); `None` when empty.
    pub fn pair_log_probs(&self, cx: Ctx, view: &StepView) -> Option<Var> {
        view.topk.s.map(|s| cx.tape.log_softmax(s, 0))
    }

    /// Bond types the head chooses between when the current bond is `old`.
    pub fn bond_options(&self, old: BondType) -> Vec<BondType> {
        self.config
            .bond_vocabulary()
            .iter()
            .copied()
            .filter(|&b| b != old)
            .collect()
    }

    /// Log-probabilities over [`Policy::bond_options`] for top-K entry `k`.
    /// The current bond is left out, so it has probability zero.
    pub fn bond_log_probs(&self, cx: Ctx, st: &EpisodeState, view: &StepView, k: usize) -> (Vec<BondType>, Var) {
        let t = cx.tape;
        let (u, v) = view.topk.pairs[k];
        let old = st.graph.bond(u, v);
        let options = self.bond_options(old);
        let m = options.len();
        let z = view.topk.z.expect("top-K set is non-empty");
        let e = cx.p(self.gnn.bond_embed);
        let new_idx: Vec<usize> = options.iter().map(|b| b.index()).collect();
        let diff = t.sub(t.gather_rows(e, &new_idx), t.gather_rows(e, &vec![old.index(); m]));
        let input = t.concat(&[t.gather_rows(st.h, &vec![0; m]), t.gather_rows(z, &vec![k; m]), diff]);
        let logits = self.bond.forward(cx, input);
        (options, t.log_softmax(logits, 0))
    }

    /// Applies the edit for top-K entry `k`, refreshes node states and
    /// advances the recurrent state.
    pub fn advance(&self, cx: Ctx, st: &EpisodeState, view: &StepView, k: usize, bond: BondType) -> EpisodeState {
        let (u, v) = view.topk.pairs[k];
        let graph = apply_triple(&st.graph, &ReactionTriple::new(u, v, bond))
            .expect("bond head never proposes the current bond");
        let x = self.gnn.refresh_after_edit(cx, &graph, st.x, u, v);
        let z = view.topk.z.expect("top-K set is non-empty");
        let zuv = cx.tape.gather_rows(z, &[k]);
        let h = self.gru.forward(cx, st.h, zuv);
        let mut consumed = st.consumed.clone();
        consumed.insert((u, v));
        EpisodeState {
            graph,
            x,
            h,
            consumed,
            step: st.step + 1,
        }
    }
}
