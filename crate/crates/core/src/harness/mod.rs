//! Configuration, toy data, metrics, evaluation and the gradient-check
//! fixture shared by the command-line tool and the tests.

mod config;
mod eval;
mod metrics;
mod toy;

use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{Config, ConfigError};
pub use eval::{
    evaluate, gold_rank, precision_at_1, predict, prediction_lines, score_dump, EvalError,
    MetricReport, Outcome, PredictionLine, SubAction, PRECISION_KS,
};
pub use metrics::{coverage_at_k, precision_at_k, recall_at_k, ScoreDump};
pub use toy::{gen_toy_dataset, toy_record, toy_rule, ToyDataset, ToyError, ToySpec};

use crate::diffcore::{check_gradients, Ctx, DiffError, GradCheckReport};
use crate::molgraph::{read_format_a, ReactionRecord};
use crate::policy::{rollout_supervised, ActionSource, PolicyConfig, RewardConfig, Trace, TraceStep};
use crate::training::{advantages, total_loss_with, FitObserver, LogEntry, LossWeights, Model};

/// Ten atoms: an acyl chloride and an amino alcohol forming an amide, with
/// sodium and chloride ions as reagents.
pub const GRADCHECK_REACTION: &str =
    "[CH3:1][C:2](=[O:3])[Cl:4].[NH2:5][CH2:6][CH2:7][OH:8]>[Na+].[Cl-]>[CH3:1][C:2](=[O:3])[NH:5][CH2:6][CH2:7][OH:8]";

pub const GRADCHECK_STEP: f64 = 1e-5;
/// Denominator floor of the relative error; entries whose gradient is
/// smaller are compared by absolute error `floor * tolerance`. The fixture
/// loss is around 1e2, so central differences with the step above carry
/// about 3e-9 of rounding error.
pub const GRADCHECK_FLOOR: f64 = 1e-4;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// The fixture record and a replay trace that makes both gold edits and
/// then stops, with two pairs forced into each top-K set.
pub fn gradcheck_fixture() -> (ReactionRecord, Trace) {
    let record = read_format_a(GRADCHECK_REACTION)
        .expect("fixture parses")
        .0
        .remove(0);
    let gold: Vec<_> = record.gold.iter().copied().collect();
    let decoy = (0, 2);
    let mut steps: Vec<TraceStep> = gold
        .iter()
        .map(|t| TraceStep {
            topk: vec![decoy, t.pair()],
            signal: true,
            pair: Some(t.pair()),
            bond: Some(t.new_bond),
        })
        .collect();
    steps.push(TraceStep {
        topk: vec![decoy, (5, 7)],
        signal: false,
        pair: None,
        bond: None,
    });
    (record, Trace { steps })
}

/// Compares the gradient of the total loss on the fixture with central
/// differences for every parameter of a model with `config`.
///
/// Zero-initialized entries (biases, the initial recurrent state) are first
/// filled with small random values: with zero biases a ReLU whose input row
/// is zero sits exactly on its kink, where differences are meaningless.
pub fn run_gradcheck(config: PolicyConfig, seed: u64) -> Result<GradCheckReport, DiffError> {
    let (record, trace) = gradcheck_fixture();
    let mut model = Model::new(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    for id in model.store.ids().collect::<Vec<_>>() {
        for v in model.store.value_mut(id).values_mut() {
            if *v == 0.0 {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
    }
    let policy = model.policy.clone();
    let rewards = RewardConfig::default();
    let weights = LossWeights::default();
    let replay = |cx: Ctx| {
        rollout_supervised(&policy, cx, &record, &rewards, ActionSource::Replay(&trace))
            .expect("fixture elements are in the vocabulary")
    };
    let adv = {
        let tape = crate::diffcore::Tape::new();
        advantages(&replay(Ctx::new(&tape, &model.store)))
    };
    let ids: Vec<_> = model.store.ids().collect();
    check_gradients(&mut model.store, &ids, GRADCHECK_STEP, GRADCHECK_FLOOR, |tape, store| {
        let ep = replay(Ctx::new(tape, store));
        total_loss_with(tape, &ep, &weights, &adv).total
    })
}

/// Training observer that validates on held-out records, writes JSON-lines
/// logs and saves checkpoints.
pub struct RunObserver {
    pub valid: Vec<ReactionRecord>,
    pub beam_width: usize,
    pub log: Option<Box<dyn Write>>,
    pub checkpoint_dir: Option<PathBuf>,
    pub extra: serde_json::Value,
    pub errors: Vec<String>,
    pub echo: bool,
}

impl FitObserver for RunObserver {
    fn validate(&mut self, model: &Model) -> Option<f64> {
        if self.valid.is_empty() {
            return None;
        }
        match precision_at_1(model, &self.valid, self.beam_width) {
            Ok(p) => Some(p),
            Err(e) => {
                self.errors.push(e.to_string());
                None
            }
        }
    }

    fn log(&mut self, entry: &LogEntry) {
        let line = serde_json::to_string(entry).expect("log entry serializes");
        if self.echo && entry.validation.is_some() {
            eprintln!("{line}");
        }
        if let Some(w) = self.log.as_mut() {
            if let Err(e) = writeln!(w, "{line}") {
                self.errors.push(format!("log write failed: {e}"));
            }
        }
    }

    fn checkpoint(&mut self, iteration: usize, model: &Model) {
        let Some(dir) = &self.checkpoint_dir else { return };
        let path = dir.join(format!("checkpoint-{iteration:08}.json"));
        let text = model.checkpoint(self.extra.clone()).to_json();
        if let Err(e) = std::fs::write(&path, text) {
            self.errors.push(format!("cannot write {}: {e}", path.display()));
        }
    }
}
