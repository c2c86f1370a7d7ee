use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::DiffError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named learnable tensors with gradient accumulators and Adam moments.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    index: BTreeMap<String, ParamId>,
    values: Vec<Arc<Tensor>>,
    grads: Vec<Tensor>,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Registers a parameter. Names must be unique.
    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId, DiffError> {
        if self.index.contains_key(name) {
            return Err(DiffError::DuplicateParam(name.to_string()));
        }
        let id = ParamId(self.values.len());
        let [r, c] = value.shape();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.values.push(Arc::new(value));
        self.grads.push(Tensor::zeros(r, c));
        self.first_moment.push(Tensor::zeros(r, c));
        self.second_moment.push(Tensor::zeros(r, c));
        Ok(id)
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    pub fn insert_glorot<R: Rng>(
        &mut self,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<ParamId, DiffError> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let values = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        self.insert(name, Tensor::new(fan_in, fan_out, values))
    }

    pub fn insert_zeros(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
    ) -> Result<ParamId, DiffError> {
        self.insert(name, Tensor::zeros(rows, cols))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub(crate) fn value_arc(&self, id: ParamId) -> Arc<Tensor> {
        Arc::clone(&self.values[id.0])
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &Tensor) {
        self.grads[id.0].add_assign(g);
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Largest absolute gradient entry across all parameters.
    pub fn grad_max_abs(&self) -> f64 {
        self.grads.iter().map(Tensor::max_abs).fold(0.0, f64::max)
    }

    /// One Adam update using the accumulated gradients, which are then zeroed.
    pub fn adam_step(&mut self, lr: f64, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..self.values.len() {
            let g = &self.grads[i];
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            let p = Arc::make_mut(&mut self.values[i]);
            for k in 0..g.len() {
                let gk = g.values()[k];
                let mk = cfg.beta1 * m.values()[k] + (1.0 - cfg.beta1) * gk;
                let vk = cfg.beta2 * v.values()[k] + (1.0 - cfg.beta2) * gk * gk;
                m.values_mut()[k] = mk;
                v.values_mut()[k] = vk;
                let m_hat = mk / bias1;
                let v_hat = vk / bias2;
                p.values_mut()[k] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        self.zero_grads();
    }

    /// Serializable snapshot of values and optimizer state.
    pub fn to_state(&self) -> StoreState {
        let mut params = BTreeMap::new();
        let mut first = BTreeMap::new();
        let mut second = BTreeMap::new();
        for (i, name) in self.names.iter().enumerate() {
            params.insert(name.clone(), (*self.values[i]).clone());
            first.insert(name.clone(), self.first_moment[i].clone());
            second.insert(name.clone(), self.second_moment[i].clone());
        }
        StoreState {
            params,
            optimizer: OptimizerState {
                step: self.step,
                first_moment: first,
                second_moment: second,
            },
        }
    }

    /// Overwrites values and optimizer state of every registered parameter.
    ///
    /// The snapshot must hold exactly the registered names with matching shapes.
    pub fn load_state(&mut self, state: &StoreState) -> Result<(), DiffError> {
        if state.params.len() != self.names.len() {
            return Err(DiffError::Checkpoint(format!(
                "checkpoint has {} parameters, model has {}",
                state.params.len(),
                self.names.len()
            )));
        }
        for (i, name) in self.names.iter().enumerate() {
            let lookup =
                |map: &BTreeMap<String, Tensor>, what: &str| -> Result<Tensor, DiffError> {
                    let t = map.get(name).ok_or_else(|| {
                        DiffError::Checkpoint(format!("missing {what} for {name}"))
                    })?;
                    if t.shape() != self.values[i].shape() {
                        return Err(DiffError::Checkpoint(format!(
                            "{what} {name} has shape {:?}, expected {:?}",
                            t.shape(),
                            self.values[i].shape()
                        )));
                    }
                    Ok(t.clone())
                };
            let value = lookup(&state.params, "parameter")?;
            let m = lookup(&state.optimizer.first_moment, "first moment")?;
            let v = lookup(&state.optimizer.second_moment, "second moment")?;
            self.values[i] = Arc::new(value);
            self.first_moment[i] = m;
            self.second_moment[i] = v;
        }
        self.step = state.optimizer.step;
        self.zero_grads();
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: BTreeMap<String, Tensor>,
    pub second_moment: BTreeMap<String, Tensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreState {
    pub params: BTreeMap<String, Tensor>,
    pub optimizer: OptimizerState,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tape;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut store = ParamStore::new();
        store.insert_zeros("w", 1, 1).unwrap();
        assert!(matches!(
            store.insert_zeros("w", 2, 2),
            Err(DiffError::DuplicateParam(_))
        ));
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut store = ParamStore::new();
        let w = store
            .insert("w", Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]))
            .unwrap();
        let tape = Tape::new();
        let wv = tape.param(&store, w);
        let loss = tape.sum(wv);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(w).values(), &[1.0; 4]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::row(vec![0.3, -0.7])).unwrap();
        let tape = Tape::new();
        let wv = tape.param(&store, w);
        let sq = tape.mul(wv, wv);
        let loss = tape.sum(sq);
        tape.backward(loss, &mut store).unwrap();
        let once = store.grad(w).clone();
        tape.backward(loss, &mut store).unwrap();
        for (a, b) in store.grad(w).values().iter().zip(once.values()) {
            assert_eq!(*a, 2.0 * b);
        }
        store.zero_grads();
        assert_eq!(store.grad(w).values(), &[0.0, 0.0]);
    }

    #[test]
    fn adam_with_zero_gradient_keeps_parameters() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::row(vec![0.25, -1.5])).unwrap();
        store.adam_step(1e-3, &AdamConfig::default());
        assert_eq!(store.value(w).values(), &[0.25, -1.5]);
    }

    #[test]
    fn adam_single_step_matches_hand_formula() {
        let cfg = AdamConfig::default();
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::row(vec![1.0, -2.0])).unwrap();
        store.accumulate_grad(w, &Tensor::row(vec![0.5, -4.0]));
        store.adam_step(0.01, &cfg);
        // t = 1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let expected = [
            1.0 - 0.01 * 0.5 / (0.5 + 1e-8),
            -2.0 - 0.01 * -4.0 / (4.0 + 1e-8),
        ];
        for (a, b) in store.value(w).values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert_eq!(store.grad(w).values(), &[0.0, 0.0]);
    }

    #[test]
    fn adam_constant_gradient_moves_by_lr_per_step() {
        let cfg = AdamConfig::default();
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::row(vec![0.0, 0.0])).unwrap();
        let lr = 1e-3;
        let mut prev = store.value(w).clone();
        for _ in 0..500 {
            store.accumulate_grad(w, &Tensor::row(vec![3.0, -0.2]));
            store.adam_step(lr, &cfg);
            let now = store.value(w).clone();
            let d0 = now.values()[0] - prev.values()[0];
            let d1 = now.values()[1] - prev.values()[1];
            assert!((d0 + lr).abs() < 1e-9);
            assert!((d1 - lr).abs() < 1e-9);
            prev = now;
        }
    }
}
