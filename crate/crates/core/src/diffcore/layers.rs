//! Parameterized building blocks shared by the model components.

use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::DiffError;

/// A tape paired with the parameters it reads.
#[derive(Clone, Copy)]
pub struct Ctx<'a> {
    pub tape: &'a Tape,
    pub store: &'a ParamStore,
}

impl<'a> Ctx<'a> {
    pub fn new(tape: &'a Tape, store: &'a ParamStore) -> Self {
        Self { tape, store }
    }

    pub fn p(&self, id: ParamId) -> Var {
        self.tape.param(self.store, id)
    }
}

/// Registers a weight block drawn uniformly from ±sqrt(6 / (fan_in + fan_out)).
///
/// Blocks of one logical matrix that is applied to a concatenation share the
/// full `fan_in`.
pub fn insert_block<R: Rng>(
    store: &mut ParamStore,
    name: &str,
    rows: usize,
    cols: usize,
    fan_in: usize,
    rng: &mut R,
) -> Result<ParamId, DiffError> {
    let limit = (6.0 / (fan_in + cols) as f64).sqrt();
    let values = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
    store.insert(name, Tensor::new(rows, cols, values))
}

/// `x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        let w = store.insert_glorot(&format!("{name}.w"), input, output, rng)?;
        let b = if bias {
            Some(store.insert_zeros(&format!("{name}.b"), 1, output)?)
        } else {
            None
        };
        Ok(Self { w, b })
    }

    pub fn forward(&self, cx: Ctx, x: Var) -> Var {
        let y = cx.tape.matmul(x, cx.p(self.w));
        match self.b {
            Some(b) => cx.tape.add_row(y, cx.p(b)),
            None => y,
        }
    }
}

/// Two ReLU layers of equal width with a residual connection around the
/// second, followed by a linear read-out.
#[derive(Clone, Debug)]
pub struct Mlp2 {
    pub first: Linear,
    pub second: Linear,
    pub out: Linear,
}

impl Mlp2 {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        Ok(Self {
            first: Linear::new(store, &format!("{name}.l1"), input, hidden, true, rng)?,
            second: Linear::new(store, &format!("{name}.l2"), hidden, hidden, true, rng)?,
            out: Linear::new(store, &format!("{name}.out"), hidden, output, true, rng)?,
        })
    }

    pub fn forward(&self, cx: Ctx, x: Var) -> Var {
        let t = cx.tape;
        let h1 = t.relu(self.first.forward(cx, x));
        let h2 = t.relu(self.second.forward(cx, h1));
        let h = t.add(h1, h2);
        self.out.forward(cx, h)
    }
}

/// Gated recurrent unit in the reset-before-candidate form.
#[derive(Clone, Debug)]
pub struct Gru {
    pub input_gates: Linear,
    pub hidden_gates: Linear,
    pub input_candidate: Linear,
    pub hidden_candidate: Linear,
    pub hidden: usize,
}

impl Gru {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        Ok(Self {
            input_gates: Linear::new(store, &format!("{name}.wx_gates"), input, 2 * hidden, true, rng)?,
            hidden_gates: Linear::new(store, &format!("{name}.wh_gates"), hidden, 2 * hidden, false, rng)?,
            input_candidate: Linear::new(store, &format!("{name}.wx_cand"), input, hidden, true, rng)?,
            hidden_candidate: Linear::new(store, &format!("{name}.wh_cand"), hidden, hidden, false, rng)?,
            hidden,
        })
    }

    /// `h' = u * h + (1 - u) * tanh(Wx + U(r * h) + b)` with update gate `u`
    /// and reset gate `r`.
    pub fn forward(&self, cx: Ctx, h: Var, x: Var) -> Var {
        let t = cx.tape;
        let gx = self.input_gates.forward(cx, x);
        let gh = self.hidden_gates.forward(cx, h);
        let gates = t.sigmoid(t.add(gx, gh));
        let reset = t.slice_cols(gates, 0, self.hidden);
        let update = t.slice_cols(gates, self.hidden, 2 * self.hidden);
        let cand_h = self.hidden_candidate.forward(cx, t.mul(reset, h));
        let cand = t.tanh(t.add(self.input_candidate.forward(cx, x), cand_h));
        let keep = t.mul(update, h);
        let fresh = t.mul(t.affine(update, -1.0, 1.0), cand);
        t.add(keep, fresh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_bias_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let mlp = Mlp2::new(&mut store, "f", 3, 4, 1, &mut rng).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).fill(0.0);
        }
        store.value_mut(mlp.out.b.unwrap()).fill(0.25);
        let tape = Tape::new();
        let cx = Ctx::new(&tape, &store);
        let x = tape.constant(Tensor::row(vec![1.0, -2.0, 3.0]));
        let y = mlp.forward(cx, x);
        assert_eq!(tape.scalar(y), 0.25);
    }

    #[test]
    fn gru_with_saturated_update_gate_keeps_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let gru = Gru::new(&mut store, "g", 2, 3, &mut rng).unwrap();
        let b = gru.input_gates.b.unwrap();
        for c in 3..6 {
            store.value_mut(b).set(0, c, 60.0);
        }
        let tape = Tape::new();
        let cx = Ctx::new(&tape, &store);
        let h = tape.constant(Tensor::row(vec![0.1, -0.4, 0.7]));
        let x = tape.constant(Tensor::row(vec![0.3, 0.2]));
        let h2 = gru.forward(cx, h, x);
        for (a, b) in tape.value(h2).values().iter().zip([0.1, -0.4, 0.7]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_moves_state_for_nonzero_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let gru = Gru::new(&mut store, "g", 2, 3, &mut rng).unwrap();
        let tape = Tape::new();
        let cx = Ctx::new(&tape, &store);
        let h = tape.constant(Tensor::row(vec![0.1, -0.4, 0.7]));
        let x = tape.constant(Tensor::row(vec![0.3, 0.2]));
        let h2 = gru.forward(cx, h, x);
        assert_ne!(tape.value(h2).values(), tape.value(h).values());
    }
}
