//! Losses over supervised episodes and the mini-batch training loop.

mod fit;
mod losses;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{Checkpoint, DiffError, ParamStore};
use crate::policy::{Policy, PolicyConfig};

pub use fit::{fit, train_batch, BatchStats, FitObserver, FitSummary, LogEntry, TrainConfig, TrainError};
pub use losses::{
    a2c_loss, a2c_loss_with, advantages, atom_pair_loss, in_topk_loss, over_length_loss, returns, total_loss,
    total_loss_with,
    value_loss, LossTerms, LossValues, LossWeights,
};

/// A policy together with the parameters it reads.
#[derive(Clone, Debug)]
pub struct Model {
    pub store: ParamStore,
    pub policy: Policy,
}

impl Model {
    /// Fresh parameters drawn from `seed`.
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self, DiffError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let policy = Policy::new(&mut store, config, &mut rng)?;
        Ok(Self { store, policy })
    }

    pub fn config(&self) -> PolicyConfig {
        self.policy.config
    }

    /// Checkpoint whose config section holds the policy config under
    /// `"model"` plus whatever `extra` carries.
    pub fn checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        let mut cfg = serde_json::Map::new();
        cfg.insert(
            "model".into(),
            serde_json::to_value(self.policy.config).expect("config serializes"),
        );
        if !extra.is_null() {
            cfg.insert("extra".into(), extra);
        }
        Checkpoint::capture(serde_json::Value::Object(cfg), &self.store)
    }

    /// Rebuilds the model described by a checkpoint and loads its state.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, DiffError> {
        let cfg = ck
            .config
            .get("model")
            .ok_or_else(|| DiffError::Checkpoint("checkpoint has no model config".into()))?;
        let config: PolicyConfig = serde_json::from_value(cfg.clone())
            .map_err(|e| DiffError::Checkpoint(format!("model config: {e}")))?;
        let mut model = Model::new(config, 0)?;
        model.store.load_state(&ck.state)?;
        Ok(model)
    }
}
