//! Loss terms over a supervised episode.
//!
//! Every term only sees sub-steps up to and including the first wrong one,
//! because rollouts stop there.

use serde::{Deserialize, Serialize};

use crate::diffcore::{Tape, Tensor, Var};
use crate::policy::Episode;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub a2c: f64,
    pub value: f64,
    pub atom_pair: f64,
    pub over_length: f64,
    pub in_topk: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            a2c: 1.0,
            value: 0.5,
            atom_pair: 1.0,
            over_length: 0.2,
            in_topk: 0.2,
        }
    }
}

fn zero(tape: &Tape) -> Var {
    tape.constant(Tensor::scalar(0.0))
}

fn sum_or_zero(tape: &Tape, terms: &[Var]) -> Var {
    tape.add_all(terms).unwrap_or_else(|| zero(tape))
}

/// Undiscounted return from each step: the sum of all later rewards.
pub fn returns(ep: &Episode) -> Vec<f64> {
    let mut out = vec![0.0; ep.steps.len()];
    let mut acc = 0.0;
    for (i, s) in ep.steps.iter().enumerate().rev() {
        acc += s.reward_total();
        out[i] = acc;
    }
    out
}

/// Per step and executed sub-action, `r + V(next) - V(current)`. The value
/// after the last step is zero.
pub fn advantages(ep: &Episode) -> Vec<Vec<f64>> {
    let n = ep.steps.len();
    (0..n)
        .map(|i| {
            let next = if i + 1 < n { ep.steps[i + 1].value } else { 0.0 };
            let v = ep.steps[i].value;
            ep.steps[i].rewards.iter().map(|r| r + next - v).collect()
        })
        .collect()
}

/// `-sum A * log p` over executed sub-actions, advantages held constant.
pub fn a2c_loss(tape: &Tape, ep: &Episode) -> Var {
    a2c_loss_with(tape, ep, &advantages(ep))
}

/// [`a2c_loss`] with caller-supplied advantages, shaped like
/// [`advantages`].
pub fn a2c_loss_with(tape: &Tape, ep: &Episode, adv: &[Vec<f64>]) -> Var {
    let mut terms = Vec::new();
    for (s, a) in ep.steps.iter().zip(adv) {
        let lps = [s.signal_log_prob, s.pair_log_prob, s.bond_log_prob];
        for (k, &ak) in a.iter().enumerate() {
            if let Some(lp) = lps[k] {
                terms.push(tape.scale(lp, -ak));
            }
        }
    }
    sum_or_zero(tape, &terms)
}

/// `sum (V - R)^2` over executed steps.
pub fn value_loss(tape: &Tape, ep: &Episode) -> Var {
    let r = returns(ep);
    let terms: Vec<Var> = ep
        .steps
        .iter()
        .zip(r)
        .map(|(s, ret)| {
            let d = tape.affine(s.view.value, 1.0, -ret);
            tape.mul(d, d)
        })
        .collect();
    sum_or_zero(tape, &terms)
}

/// Binary cross-entropy of `sigmoid(s_ij)` against "is a remaining gold
/// pair", over the candidate pairs of every executed step. Consumed and
/// reagent pairs are never candidates, so they are masked out.
pub fn atom_pair_loss(tape: &Tape, ep: &Episode) -> Var {
    let mut terms = Vec::new();
    for s in &ep.steps {
        let Some(scores) = s.view.scores.s else { continue };
        let y: Vec<f64> = s
            .view
            .scores
            .pairs
            .iter()
            .map(|p| if s.remaining.contains_key(p) { 1.0 } else { 0.0 })
            .collect();
        let yv = tape.constant(Tensor::column(y.clone()));
        let not_y = tape.constant(Tensor::column(y.iter().map(|v| 1.0 - v).collect()));
        let pos = tape.mul(yv, tape.log_sigmoid(scores));
        let neg = tape.mul(not_y, tape.log_sigmoid(tape.scale(scores, -1.0)));
        terms.push(tape.scale(tape.sum(tape.add(pos, neg)), -1.0));
    }
    sum_or_zero(tape, &terms)
}

/// `-log p(stop)` at every step at or beyond the gold edit count where the
/// policy chose to continue.
pub fn over_length_loss(tape: &Tape, ep: &Episode) -> Var {
    let terms: Vec<Var> = ep
        .steps
        .iter()
        .enumerate()
        .filter(|(tau, s)| *tau >= ep.gold_len && s.signal)
        .filter_map(|(_, s)| s.stop_log_prob)
        .map(|lp| tape.scale(lp, -1.0))
        .collect();
    sum_or_zero(tape, &terms)
}

/// `-log(exp(s_g) / (exp(s_g) + sum_k exp(s_k)))`, where `g` is the best
/// scored remaining gold pair and `k` runs over the top K. When `g` is itself
/// in the top K it appears in both places.
pub fn in_topk_loss(tape: &Tape, ep: &Episode) -> Var {
    let mut terms = Vec::new();
    for s in &ep.steps {
        let (Some(all), Some(top)) = (s.view.scores.s, s.view.topk.s) else { continue };
        let scores = &s.view.scores;
        let best = scores
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| s.remaining.contains_key(p))
            .max_by(|a, b| {
                scores.values[a.0]
                    .total_cmp(&scores.values[b.0])
                    .then(b.1.cmp(a.1))
            })
            .map(|(i, _)| i);
        let Some(g) = best else { continue };
        let col = tape.concat_rows(&[tape.gather_rows(all, &[g]), top]);
        let lp = tape.gather_rows(tape.log_softmax(col, 0), &[0]);
        terms.push(tape.scale(lp, -1.0));
    }
    sum_or_zero(tape, &terms)
}

/// The individual terms and their weighted sum.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub a2c: Var,
    pub value: Var,
    pub atom_pair: Var,
    pub over_length: Var,
    pub in_topk: Var,
    pub total: Var,
}

impl LossTerms {
    pub fn values(&self, tape: &Tape) -> LossValues {
        LossValues {
            a2c: tape.scalar(self.a2c),
            value: tape.scalar(self.value),
            atom_pair: tape.scalar(self.atom_pair),
            over_length: tape.scalar(self.over_length),
            in_topk: tape.scalar(self.in_topk),
            total: tape.scalar(self.total),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub a2c: f64,
    pub value: f64,
    pub atom_pair: f64,
    pub over_length: f64,
    pub in_topk: f64,
    pub total: f64,
}

impl LossValues {
    pub fn add(&mut self, o: &LossValues) {
        self.a2c += o.a2c;
        self.value += o.value;
        self.atom_pair += o.atom_pair;
        self.over_length += o.over_length;
        self.in_topk += o.in_topk;
        self.total += o.total;
    }

    pub fn scaled(&self, k: f64) -> LossValues {
        LossValues {
            a2c: self.a2c * k,
            value: self.value * k,
            atom_pair: self.atom_pair * k,
            over_length: self.over_length * k,
            in_topk: self.in_topk * k,
            total: self.total * k,
        }
    }
}

pub fn total_loss(tape: &Tape, ep: &Episode, w: &LossWeights) -> LossTerms {
    total_loss_with(tape, ep, w, &advantages(ep))
}

/// [`total_loss`] with fixed advantages. The actor term treats advantages as
/// constants, so a finite-difference check must hold them at their
/// unperturbed values.
pub fn total_loss_with(tape: &Tape, ep: &Episode, w: &LossWeights, adv: &[Vec<f64>]) -> LossTerms {
    let a2c = a2c_loss_with(tape, ep, adv);
    let value = value_loss(tape, ep);
    let atom_pair = atom_pair_loss(tape, ep);
    let over_length = over_length_loss(tape, ep);
    let in_topk = in_topk_loss(tape, ep);
    let weighted = [
        tape.scale(a2c, w.a2c),
        tape.scale(value, w.value),
        tape.scale(atom_pair, w.atom_pair),
        tape.scale(over_length, w.over_length),
        tape.scale(in_topk, w.in_topk),
    ];
    let total = sum_or_zero(tape, &weighted);
    LossTerms {
        a2c,
        value,
        atom_pair,
        over_length,
        in_topk,
        total,
    }
}
