//! Supervised rollouts against a set of gold edits.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EpisodeState, Policy, StepView};
use crate::diffcore::{Ctx, Var};
use crate::gnn::EncodeError;
use crate::molgraph::{BondType, ReactionRecord, ReactionTriple};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Reward magnitude for each correct (+) or wrong (-) sub-action.
    pub immediate: f64,
    /// Reward magnitude for the complete edit set being right (+) or not (-).
    pub delayed: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            immediate: 1.0,
            delayed: 2.0,
        }
    }
}

/// How sub-actions are chosen.
pub enum ActionSource<'a> {
    Sample(&'a mut ChaCha8Rng),
    Greedy,
    /// Repeats a recorded episode, including its top-K sets.
    Replay(&'a Trace),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub topk: Vec<(usize, usize)>,
    pub signal: bool,
    pub pair: Option<(usize, usize)>,
    pub bond: Option<BondType>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

/// One step of a rollout. Sub-actions after the first wrong one are absent.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub view: StepView,
    /// Gold edits not yet made when the step began.
    pub remaining: BTreeMap<(usize, usize), BondType>,
    pub signal: bool,
    /// `log p` of the emitted signal; `None` when stopping was forced by an
    /// empty top-K set.
    pub signal_log_prob: Option<Var>,
    /// `log p(stop)`, `None` when forced.
    pub stop_log_prob: Option<Var>,
    pub pair: Option<(usize, usize)>,
    pub pair_log_prob: Option<Var>,
    pub bond: Option<BondType>,
    pub bond_log_prob: Option<Var>,
    /// One reward per executed sub-action, delayed reward included.
    pub rewards: Vec<f64>,
    pub correct: Vec<bool>,
    pub value: f64,
}

impl StepRecord {
    pub fn reward_total(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

#[derive(Clone, Debug)]
pub struct Episode {
    pub steps: Vec<StepRecord>,
    pub gold_len: usize,
    pub predicted: Vec<ReactionTriple>,
    /// Sub-step index `3 * step + k` of the first wrong sub-action.
    pub first_wrong: Option<usize>,
    /// Every sub-action was right and the edit set equals the gold set.
    pub success: bool,
    /// The step limit ended the episode.
    pub truncated: bool,
    pub trace: Trace,
    /// One flag per sub-step up to the step limit: 1 through the first wrong
    /// sub-action, 0 afterwards.
    pub zeta: Vec<u8>,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(StepRecord::reward_total).sum()
    }

    pub fn sub_steps(&self) -> usize {
        self.steps.iter().map(|s| s.rewards.len()).sum()
    }

    /// Step count at which the stop signal should have been emitted.
    pub fn gold_end(&self) -> usize {
        self.gold_len
    }
}

fn sample_index(rng: &mut ChaCha8Rng, log_probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Runs the policy on `record.input`, checking each sub-action against the
/// gold edits and stopping at the first wrong one.
///
/// Correct sub-actions earn `+immediate`, a wrong one `-immediate`. When the
/// episode ends, `+delayed` is added to the last sub-action if the edit set
/// equals the gold set with no mistakes, `-delayed` otherwise.
pub fn rollout_supervised(
    policy: &Policy,
    cx: Ctx,
    record: &ReactionRecord,
    rewards: &RewardConfig,
    mut source: ActionSource,
) -> Result<Episode, EncodeError> {
    let t = cx.tape;
    let max_steps = policy.config.max_steps;
    let mut st: EpisodeState = policy.start(cx, &record.input)?;
    let mut remaining: BTreeMap<(usize, usize), BondType> =
        record.gold.iter().map(|g| (g.pair(), g.new_bond)).collect();
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut predicted = Vec::new();
    let mut trace = Trace::default();
    let mut first_wrong = None;
    let mut truncated = false;
    let score = |ok: bool| if ok { rewards.immediate } else { -rewards.immediate };

    loop {
        if st.step >= max_steps {
            truncated = true;
            break;
        }
        let tau = st.step;
        let replay = match &source {
            ActionSource::Replay(tr) => Some(tr.steps.get(tau).expect("trace covers the episode").clone()),
            _ => None,
        };
        let view = policy.view(cx, &st, replay.as_ref().map(|r| r.topk.as_slice()));
        let value = t.scalar(view.value);
        let mut rec = StepRecord {
            view: view.clone(),
            remaining: remaining.clone(),
            signal: false,
            signal_log_prob: None,
            stop_log_prob: None,
            pair: None,
            pair_log_prob: None,
            bond: None,
            bond_log_prob: None,
            rewards: Vec::new(),
            correct: Vec::new(),
            value,
        };
        let mut ts = TraceStep {
            topk: view.topk.pairs.clone(),
            signal: false,
            pair: None,
            bond: None,
        };

        // Signal.
        let signal = if view.topk.is_empty() {
            false
        } else {
            let (stop, go) = policy.signal_log_probs(cx, &view);
            let p = view.continue_probability(t);
            let s = match &mut source {
                ActionSource::Sample(rng) => rng.gen::<f64>() < p,
                ActionSource::Greedy => p >= 0.5,
                ActionSource::Replay(_) => replay.as_ref().map(|r| r.signal).unwrap_or(false),
            };
            rec.stop_log_prob = Some(stop);
            rec.signal_log_prob = Some(if s { go } else { stop });
            s
        };
        rec.signal = signal;
        ts.signal = signal;
        let ok = signal == !remaining.is_empty();
        rec.rewards.push(score(ok));
        rec.correct.push(ok);
        if !ok || !signal {
            if !ok {
                first_wrong = Some(3 * tau);
            }
            steps.push(rec);
            trace.steps.push(ts);
            break;
        }

        // Pair.
        let pair_lp = policy.pair_log_probs(cx, &view).expect("top-K set is non-empty");
        let lps = t.value(pair_lp).values().to_vec();
        let k = match &mut source {
            ActionSource::Sample(rng) => sample_index(rng, &lps),
            ActionSource::Greedy => argmax(&lps),
            ActionSource::Replay(_) => {
                let want = replay.as_ref().and_then(|r| r.pair).expect("trace has a pair");
                view.topk.pairs.iter().position(|&p| p == want).expect("replayed pair is in top-K")
            }
        };
        let pair = view.topk.pairs[k];
        rec.pair = Some(pair);
        rec.pair_log_prob = Some(t.gather_rows(pair_lp, &[k]));
        ts.pair = Some(pair);
        let ok = remaining.contains_key(&pair);
        rec.rewards.push(score(ok));
        rec.correct.push(ok);
        if !ok {
            first_wrong = Some(3 * tau + 1);
            steps.push(rec);
            trace.steps.push(ts);
            break;
        }

        // Bond.
        let (options, bond_lp) = policy.bond_log_probs(cx, &st, &view, k);
        let lps = t.value(bond_lp).values().to_vec();
        let b = match &mut source {
            ActionSource::Sample(rng) => sample_index(rng, &lps),
            ActionSource::Greedy => argmax(&lps),
            ActionSource::Replay(_) => {
                let want = replay.as_ref().and_then(|r| r.bond).expect("trace has a bond");
                options.iter().position(|&o| o == want).expect("replayed bond is an option")
            }
        };
        let bond = options[b];
        rec.bond = Some(bond);
        rec.bond_log_prob = Some(t.gather_rows(bond_lp, &[b]));
        ts.bond = Some(bond);
        let ok = remaining.get(&pair) == Some(&bond);
        rec.rewards.push(score(ok));
        rec.correct.push(ok);
        steps.push(rec);
        trace.steps.push(ts);
        if !ok {
            first_wrong = Some(3 * tau + 2);
            break;
        }
        remaining.remove(&pair);
        predicted.push(ReactionTriple::new(pair.0, pair.1, bond));
        st = policy.advance(cx, &st, &view, k, bond);
    }

    let success = first_wrong.is_none() && remaining.is_empty();
    if let Some(last) = steps.last_mut() {
        let r = last.rewards.last_mut().expect("every step has a signal");
        *r += if success { rewards.delayed } else { -rewards.delayed };
    }
    let executed: usize = steps.iter().map(|s| s.rewards.len()).sum();
    let mut zeta = vec![0u8; 3 * max_steps.max(1)];
    for z in zeta.iter_mut().take(executed) {
        *z = 1;
    }
    Ok(Episode {
        steps,
        gold_len: record.gold.len(),
        predicted,
        first_wrong,
        success,
        truncated,
        trace,
        zeta,
    })
}
