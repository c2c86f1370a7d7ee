//! Model evaluation: step-0 pair ranking, beam search and per-reaction
//! outcomes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{coverage_at_k, precision_at_k, recall_at_k, ScoreDump};
use crate::decode::{beam_search, match_gold, postprocess_with, Action, Candidate};
use crate::diffcore::{Ctx, Tape};
use crate::gnn::EncodeError;
use crate::molgraph::{write_smiles, MolGraph, ReactionRecord};
use crate::policy::{rollout_supervised, ActionSource, RewardConfig};
use crate::training::Model;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    Empty,
    #[error("record {id}: {source}")]
    Encode {
        id: String,
        #[source]
        source: EncodeError,
    },
}

fn encode_err(id: &str) -> impl FnOnce(EncodeError) -> EvalError + '_ {
    move |source| EvalError::Encode {
        id: id.to_string(),
        source,
    }
}

/// Pair scores before any edit.
pub fn score_dump(model: &Model, record: &ReactionRecord) -> Result<ScoreDump, EvalError> {
    let tape = Tape::new();
    let cx = Ctx::new(&tape, &model.store);
    let st = model.policy.start(cx, &record.input).map_err(encode_err(&record.id))?;
    let view = model.policy.view(cx, &st, None);
    Ok(ScoreDump {
        id: record.id.clone(),
        pairs: view.scores.pairs,
        scores: view.scores.values,
        gold: record.gold.iter().map(|t| t.pair()).collect(),
    })
}

/// Ranked, post-processed candidates for one input graph.
pub fn predict(model: &Model, g: &MolGraph, width: usize) -> Result<Vec<Candidate>, EncodeError> {
    let raw = beam_search(&model.policy, &model.store, g, width)?;
    Ok(postprocess_with(raw, true, true))
}

/// 1-based rank of the first candidate matching the gold product.
pub fn gold_rank(candidates: &[Candidate], gold_product: &MolGraph) -> Option<usize> {
    candidates
        .iter()
        .position(|c| match_gold(&c.product, gold_product))
        .map(|i| i + 1)
}

/// Which sub-action a greedy supervised rollout got wrong first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubAction {
    Signal,
    Pair,
    Bond,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub id: String,
    pub gold_len: usize,
    /// Edits in the top-ranked candidate.
    pub predicted_len: Option<usize>,
    pub rank_raw: Option<usize>,
    pub rank_valid: Option<usize>,
    pub rank: Option<usize>,
    /// First mistake of the greedy rollout, with its step.
    pub first_wrong: Option<(usize, SubAction)>,
    pub top1: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub reactions: usize,
    pub beam_width: usize,
    /// After removing invalid products and duplicates.
    pub precision: BTreeMap<usize, f64>,
    /// Raw beam output.
    pub precision_raw: BTreeMap<usize, f64>,
    /// After removing invalid products only.
    pub precision_valid: BTreeMap<usize, f64>,
    pub coverage: Vec<(usize, f64)>,
    pub recall: Vec<(usize, f64)>,
    pub outcomes: Vec<Outcome>,
}

impl MetricReport {
    pub fn p_at(&self, k: usize) -> f64 {
        self.precision.get(&k).copied().unwrap_or(0.0)
    }
}

pub const PRECISION_KS: [usize; 3] = [1, 3, 5];

fn precision_table(ranks: &[Option<usize>]) -> BTreeMap<usize, f64> {
    PRECISION_KS
        .iter()
        .map(|&k| (k, precision_at_k(ranks, k).unwrap_or(0.0)))
        .collect()
}

fn sub_action(index: usize) -> (usize, SubAction) {
    let kind = match index % 3 {
        0 => SubAction::Signal,
        1 => SubAction::Pair,
        _ => SubAction::Bond,
    };
    (index / 3, kind)
}

/// Full evaluation. Coverage and recall are reported for `k` in
/// `1..=max_k`.
pub fn evaluate(
    model: &Model,
    records: &[ReactionRecord],
    beam_width: usize,
    max_k: usize,
) -> Result<MetricReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut dumps = Vec::with_capacity(records.len());
    let mut outcomes = Vec::with_capacity(records.len());
    for r in records {
        dumps.push(score_dump(model, r)?);
        let raw = beam_search(&model.policy, &model.store, &r.input, beam_width)
            .map_err(encode_err(&r.id))?;
        let rank_raw = gold_rank(&raw, &r.product);
        let valid = postprocess_with(raw.clone(), true, false);
        let rank_valid = gold_rank(&valid, &r.product);
        let fin = postprocess_with(valid, false, true);
        let rank = gold_rank(&fin, &r.product);

        let tape = Tape::new();
        let ep = rollout_supervised(
            &model.policy,
            Ctx::new(&tape, &model.store),
            r,
            &RewardConfig::default(),
            ActionSource::Greedy,
        )
        .map_err(encode_err(&r.id))?;
        outcomes.push(Outcome {
            id: r.id.clone(),
            gold_len: r.gold.len(),
            predicted_len: fin.first().map(|c| c.triples().len()),
            rank_raw,
            rank_valid,
            rank,
            first_wrong: ep.first_wrong.map(sub_action),
            top1: fin.first().map(|c| write_smiles(&c.product)),
        });
    }
    let ranks = |f: fn(&Outcome) -> Option<usize>| -> Vec<Option<usize>> { outcomes.iter().map(f).collect() };
    let curve = |f: fn(&[ScoreDump], usize) -> Option<f64>| -> Vec<(usize, f64)> {
        (1..=max_k).filter_map(|k| f(&dumps, k).map(|v| (k, v))).collect()
    };
    Ok(MetricReport {
        reactions: records.len(),
        beam_width,
        precision: precision_table(&ranks(|o| o.rank)),
        precision_raw: precision_table(&ranks(|o| o.rank_raw)),
        precision_valid: precision_table(&ranks(|o| o.rank_valid)),
        coverage: curve(coverage_at_k),
        recall: curve(recall_at_k),
        outcomes,
    })
}

/// Precision@1 after post-processing, the training validation metric.
pub fn precision_at_1(model: &Model, records: &[ReactionRecord], beam_width: usize) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut hits = 0usize;
    for r in records {
        let c = predict(model, &r.input, beam_width).map_err(encode_err(&r.id))?;
        if gold_rank(&c[..c.len().min(1)], &r.product).is_some() {
            hits += 1;
        }
    }
    Ok(hits as f64 / records.len() as f64)
}

/// One line of `predict` output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub id: String,
    pub rank: usize,
    pub score: f64,
    pub actions: Vec<Action>,
    pub product: String,
    pub valid: bool,
}

pub fn prediction_lines(id: &str, candidates: &[Candidate]) -> Vec<PredictionLine> {
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| PredictionLine {
            id: id.to_string(),
            rank: i + 1,
            score: c.score,
            actions: c.actions.clone(),
            product: write_smiles(&c.product),
            valid: c.is_valid(),
        })
        .collect()
}
