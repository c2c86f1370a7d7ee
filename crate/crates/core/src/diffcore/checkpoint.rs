//! Versioned JSON checkpoint: named tensors, Adam state and the model config.
//!
//! ```text
//! {
//!   "format": "gtpn-checkpoint",
//!   "version": 1,
//!   "config_hash": "<sha256 hex of the config JSON>",
//!   "config": { ... },
//!   "state": {
//!     "params": { "<name>": { "shape": [r, c], "values": [...] }, ... },
//!     "optimizer": { "step": n, "first_moment": {...}, "second_moment": {...} }
//!   }
//! }
//! ```
//!
//! Maps are ordered by name and floats use shortest round-trip formatting,
//! so save → load → save is byte-identical.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::{ParamStore, StoreState};
use super::DiffError;

pub const FORMAT: &str = "gtpn-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub state: StoreState,
}

impl Checkpoint {
    pub fn capture(config: serde_json::Value, store: &ParamStore) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            config_hash: config_hash(&config),
            config,
            state: store.to_state(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, DiffError> {
        let ck: Self =
            serde_json::from_str(text).map_err(|e| DiffError::Checkpoint(e.to_string()))?;
        if ck.format != FORMAT {
            return Err(DiffError::Checkpoint(format!(
                "unknown format {:?}",
                ck.format
            )));
        }
        if ck.version != VERSION {
            return Err(DiffError::Checkpoint(format!(
                "unsupported version {}",
                ck.version
            )));
        }
        if ck.config_hash != config_hash(&ck.config) {
            return Err(DiffError::Checkpoint("config hash mismatch".into()));
        }
        Ok(ck)
    }
}

pub fn config_hash(config: &serde_json::Value) -> String {
    let text = serde_json::to_string(config).expect("json value serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{AdamConfig, Tensor};
    use rand::SeedableRng;

    #[test]
    fn save_load_save_is_byte_identical() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let a = store.insert_glorot("layer.w", 3, 4, &mut rng).unwrap();
        store.insert_zeros("layer.b", 1, 4).unwrap();
        store.accumulate_grad(a, &Tensor::filled(3, 4, 0.1));
        store.adam_step(1e-3, &AdamConfig::default());
        let cfg = serde_json::json!({"d": 4, "name": "x"});
        let first = Checkpoint::capture(cfg, &store).to_json();

        let loaded = Checkpoint::from_json(&first).unwrap();
        let mut other = ParamStore::new();
        other.insert_zeros("layer.w", 3, 4).unwrap();
        other.insert_zeros("layer.b", 1, 4).unwrap();
        other.load_state(&loaded.state).unwrap();
        let second = Checkpoint::capture(loaded.config, &other).to_json();
        assert_eq!(first, second);
    }

    #[test]
    fn tampered_config_is_rejected() {
        let store = ParamStore::new();
        let text = Checkpoint::capture(serde_json::json!({"d": 4}), &store)
            .to_json()
            .replace("\"d\":4", "\"d\":5");
        assert!(Checkpoint::from_json(&text).is_err());
    }
}
