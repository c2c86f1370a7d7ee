use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::losses::{total_loss, LossValues, LossWeights};
use super::Model;
use crate::diffcore::{AdamConfig, Ctx, DiffError, PlateauConfig, PlateauSchedule, Tape};
use crate::gnn::EncodeError;
use crate::molgraph::ReactionRecord;
use crate::policy::{rollout_supervised, ActionSource, RewardConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: usize,
    /// Iterations between validation passes; the plateau schedule only sees
    /// these.
    pub eval_interval: usize,
    /// Iterations between checkpoint callbacks; 0 disables them.
    pub checkpoint_interval: usize,
    pub schedule: PlateauConfig,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub rewards: RewardConfig,
    /// Stop as soon as validation reaches this value.
    pub target_metric: Option<f64>,
    /// Stop after this many seconds of wall time.
    pub time_budget_secs: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 20,
            iterations: 10_000,
            eval_interval: 1000,
            checkpoint_interval: 0,
            schedule: PlateauConfig::small_data(1000),
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            rewards: RewardConfig::default(),
            target_metric: None,
            time_budget_secs: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training records")]
    EmptyDataset,
    #[error("record {id}: {source}")]
    Encode {
        id: String,
        #[source]
        source: EncodeError,
    },
    #[error("non-finite loss at iteration {iteration} on record {id}: {detail}")]
    NonFinite {
        iteration: usize,
        id: String,
        detail: String,
    },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Averages over the episodes of one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub loss: LossValues,
    pub reward: f64,
    pub success_rate: f64,
    pub grad_max_abs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub lr: f64,
    #[serde(flatten)]
    pub stats: BatchStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<f64>,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub best_validation: Option<f64>,
    pub final_lr: f64,
    pub reached_target: bool,
    pub elapsed_secs: f64,
}

/// Hooks the training loop calls out to.
pub trait FitObserver {
    /// Validation metric, higher is better. `None` skips the schedule update.
    fn validate(&mut self, model: &Model) -> Option<f64>;
    fn log(&mut self, _entry: &LogEntry) {}
    fn checkpoint(&mut self, _iteration: usize, _model: &Model) {}
}

/// Samples one episode per record, sums the gradients of all episode losses
/// and applies one Adam step.
pub fn train_batch(
    model: &mut Model,
    batch: &[&ReactionRecord],
    cfg: &TrainConfig,
    lr: f64,
    iteration: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BatchStats, TrainError> {
    let mut stats = BatchStats::default();
    for record in batch {
        let tape = Tape::new();
        let cx = Ctx {
            tape: &tape,
            store: &model.store,
        };
        let ep = rollout_supervised(&model.policy, cx, record, &cfg.rewards, ActionSource::Sample(rng))
            .map_err(|source| TrainError::Encode {
                id: record.id.clone(),
                source,
            })?;
        let terms = total_loss(&tape, &ep, &cfg.weights);
        let values = terms.values(&tape);
        let non_finite = |detail: String| TrainError::NonFinite {
            iteration,
            id: record.id.clone(),
            detail,
        };
        if let Err(e) = tape.check() {
            return Err(non_finite(e.to_string()));
        }
        if !values.total.is_finite() {
            return Err(non_finite(format!("{values:?}")));
        }
        tape.backward(terms.total, &mut model.store)
            .map_err(|e| non_finite(e.to_string()))?;
        stats.loss.add(&values);
        stats.reward += ep.total_reward();
        stats.success_rate += f64::from(u8::from(ep.success));
    }
    let n = batch.len().max(1) as f64;
    stats.loss = stats.loss.scaled(1.0 / n);
    stats.reward /= n;
    stats.success_rate /= n;
    stats.grad_max_abs = model.store.grad_max_abs();
    model.store.adam_step(lr, &cfg.adam);
    Ok(stats)
}

/// Runs mini-batch training over `data`, visiting records in a fresh random
/// order each epoch.
pub fn fit(
    model: &mut Model,
    data: &[ReactionRecord],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    observer: &mut dyn FitObserver,
) -> Result<FitSummary, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let start = Instant::now();
    let mut schedule = PlateauSchedule::new(cfg.schedule);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut best: Option<f64> = None;
    let mut reached = false;
    let mut done = 0;
    let batch_size = cfg.batch_size.max(1);

    for it in 1..=cfg.iterations {
        let mut batch = Vec::with_capacity(batch_size);
        while batch.len() < batch_size {
            if cursor == order.len() {
                order.shuffle(rng);
                cursor = 0;
            }
            batch.push(&data[order[cursor]]);
            cursor += 1;
        }
        let lr = schedule.lr();
        let stats = train_batch(model, &batch, cfg, lr, it, rng)?;
        done = it;

        let mut validation = None;
        if cfg.eval_interval > 0 && it % cfg.eval_interval == 0 {
            validation = observer.validate(model);
            if let Some(m) = validation {
                schedule.observe(m);
                best = Some(best.map_or(m, |b: f64| b.max(m)));
                if cfg.target_metric.is_some_and(|t| m >= t) {
                    reached = true;
                }
            }
        }
        observer.log(&LogEntry {
            iteration: it,
            lr,
            stats,
            validation,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
        if cfg.checkpoint_interval > 0 && it % cfg.checkpoint_interval == 0 {
            observer.checkpoint(it, model);
        }
        if reached {
            break;
        }
        if cfg
            .time_budget_secs
            .is_some_and(|b| start.elapsed().as_secs_f64() >= b)
        {
            break;
        }
    }
    Ok(FitSummary {
        iterations: done,
        best_validation: best,
        final_lr: schedule.lr(),
        reached_target: reached,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}
