//! Flat key-value run configuration.
//!
//! Every key is optional in a file; missing keys take the defaults below,
//! which are the full-scale hyperparameters. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{AdamConfig, PlateauConfig};
use crate::gnn::GnnConfig;
use crate::pairnet::{PairConfig, PairNetwork};
use crate::policy::{PolicyConfig, RewardConfig};
use crate::training::{LossWeights, TrainConfig};

use super::toy::ToySpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("override {0:?} is not of the form key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,

    pub gnn_steps: usize,
    pub atom_embed: usize,
    pub bond_embed: usize,
    pub state: usize,
    pub pair_network: PairNetwork,
    pub pair_hidden: usize,
    pub score_hidden: usize,
    pub top_k: usize,
    pub recurrent: usize,
    pub head_hidden: usize,
    pub value_hidden: usize,
    pub bond_types: usize,
    pub max_steps: usize,

    pub reward_immediate: f64,
    pub reward_delayed: f64,
    pub lambda_a2c: f64,
    pub lambda_value: f64,
    pub lambda_atom_pair: f64,
    pub lambda_over_length: f64,
    pub lambda_in_topk: f64,

    pub batch_size: usize,
    pub iterations: usize,
    pub eval_interval: usize,
    pub checkpoint_interval: usize,
    /// Validation records used for the schedule; 0 means all.
    pub eval_limit: usize,
    pub lr_initial: f64,
    pub lr_factor: f64,
    /// Iterations without validation improvement before decaying.
    pub lr_patience: usize,
    pub lr_min: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Stop once validation precision@1 reaches this; 0 disables.
    pub target_p1: f64,
    /// Wall-clock limit in seconds; 0 disables.
    pub time_budget: f64,

    pub beam_width: usize,

    pub toy_nodes_min: usize,
    pub toy_nodes_max: usize,
    pub toy_changes_min: usize,
    pub toy_changes_max: usize,
    pub toy_threshold: u32,
    pub toy_reagent_prob: f64,
    pub toy_train: usize,
    pub toy_valid: usize,
    pub toy_test: usize,
}

impl Default for Config {
    fn default() -> Self {
        let toy = ToySpec::default();
        Self {
            seed: 0,
            gnn_steps: 6,
            atom_embed: 51,
            bond_embed: 21,
            state: 99,
            pair_network: PairNetwork::Global,
            pair_hidden: 71,
            score_hidden: 51,
            top_k: 10,
            recurrent: 101,
            head_hidden: 81,
            value_hidden: 99,
            bond_types: 5,
            max_steps: 8,
            reward_immediate: 1.0,
            reward_delayed: 2.0,
            lambda_a2c: 1.0,
            lambda_value: 0.5,
            lambda_atom_pair: 1.0,
            lambda_over_length: 0.2,
            lambda_in_topk: 0.2,
            batch_size: 20,
            iterations: 1_000_000,
            eval_interval: 1000,
            checkpoint_interval: 10_000,
            eval_limit: 0,
            lr_initial: 1e-3,
            lr_factor: 0.5,
            lr_patience: 1000,
            lr_min: 5e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            target_p1: 0.0,
            time_budget: 0.0,
            beam_width: 20,
            toy_nodes_min: toy.nodes_min,
            toy_nodes_max: toy.nodes_max,
            toy_changes_min: toy.changes_min,
            toy_changes_max: toy.changes_max,
            toy_threshold: toy.threshold,
            toy_reagent_prob: toy.reagent_prob,
            toy_train: toy.train,
            toy_valid: toy.valid,
            toy_test: toy.test,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `key=value` overrides. Values are read as TOML, falling back
    /// to a plain string.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table =
            toml::from_str(&self.to_toml()).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| ConfigError::Override(o.clone()))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Override(o.clone()));
            }
            let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(v.to_string()));
            table.insert(k.to_string(), value);
        }
        let text = toml::to_string(&table).expect("table serializes");
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.state == 0 || self.pair_hidden == 0 || self.recurrent == 0 {
            return bad("layer widths must be positive");
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        if !(2..=5).contains(&self.bond_types) {
            return bad("bond_types must be between 2 and 5");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.beam_width == 0 {
            return bad("beam_width must be at least 1");
        }
        if !(self.lr_initial > 0.0 && self.lr_min > 0.0 && self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return bad("learning rates must be positive and lr_factor in (0, 1]");
        }
        self.toy_spec().check().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn policy(&self) -> PolicyConfig {
        PolicyConfig {
            gnn: GnnConfig {
                steps: self.gnn_steps,
                atom_embed: self.atom_embed,
                bond_embed: self.bond_embed,
                state: self.state,
            },
            pair: PairConfig {
                network: self.pair_network,
                hidden: self.pair_hidden,
                score_hidden: self.score_hidden,
                top_k: self.top_k,
            },
            recurrent: self.recurrent,
            head_hidden: self.head_hidden,
            value_hidden: self.value_hidden,
            bond_types: self.bond_types,
            max_steps: self.max_steps,
        }
    }

    pub fn train(&self) -> TrainConfig {
        let eval = self.eval_interval.max(1);
        TrainConfig {
            batch_size: self.batch_size,
            iterations: self.iterations,
            eval_interval: self.eval_interval,
            checkpoint_interval: self.checkpoint_interval,
            schedule: PlateauConfig {
                initial_lr: self.lr_initial,
                factor: self.lr_factor,
                patience: self.lr_patience.div_ceil(eval).max(1),
                min_lr: self.lr_min,
            },
            adam: AdamConfig {
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                epsilon: self.adam_epsilon,
            },
            weights: LossWeights {
                a2c: self.lambda_a2c,
                value: self.lambda_value,
                atom_pair: self.lambda_atom_pair,
                over_length: self.lambda_over_length,
                in_topk: self.lambda_in_topk,
            },
            rewards: RewardConfig {
                immediate: self.reward_immediate,
                delayed: self.reward_delayed,
            },
            target_metric: (self.target_p1 > 0.0).then_some(self.target_p1),
            time_budget_secs: (self.time_budget > 0.0).then_some(self.time_budget),
        }
    }

    pub fn toy_spec(&self) -> ToySpec {
        ToySpec {
            nodes_min: self.toy_nodes_min,
            nodes_max: self.toy_nodes_max,
            changes_min: self.toy_changes_min,
            changes_max: self.toy_changes_max,
            threshold: self.toy_threshold,
            reagent_prob: self.toy_reagent_prob,
            train: self.toy_train,
            valid: self.toy_valid,
            test: self.toy_test,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(Config::from_toml("").unwrap(), c);
    }

    #[test]
    fn defaults_are_the_full_scale_dimensions() {
        let p = Config::default().policy();
        assert_eq!(p.gnn.feature_width(), 56);
        assert_eq!((p.gnn.state, p.pair.hidden, p.pair.score_hidden), (99, 71, 51));
        assert_eq!((p.recurrent, p.value_hidden, p.head_hidden), (101, 99, 81));
        assert_eq!((p.gnn.steps, p.pair.top_k), (6, 10));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::from_toml("stat = 3").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)), "{err}");
        let err = Config::default().with_overrides(&["nope=1".into()]).unwrap_err();
        assert!(err.to_string().contains("nope"), "{err}");
    }

    #[test]
    fn overrides_apply_typed_values() {
        let c = Config::default()
            .with_overrides(&["state=7".into(), "pair_network=local".into(), "lr_min = 1e-6".into()])
            .unwrap();
        assert_eq!(c.state, 7);
        assert_eq!(c.pair_network, PairNetwork::Local);
        assert_eq!(c.lr_min, 1e-6);
        assert!(matches!(
            Config::default().with_overrides(&["state".into()]),
            Err(ConfigError::Override(_))
        ));
        assert!(matches!(
            Config::default().with_overrides(&["state=\"x\"".into()]),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn invalid_values_are_reported() {
        assert!(matches!(Config::from_toml("top_k = 0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(Config::from_toml("bond_types = 9"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn patience_is_counted_in_evaluations() {
        let c = Config::from_toml("eval_interval = 100\nlr_patience = 1000").unwrap();
        assert_eq!(c.train().schedule.patience, 10);
    }
}
