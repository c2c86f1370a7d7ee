//! Message-passing encoder for molecular graphs.
//!
//! Every node starts from `x = relu(W v + b)`, where `v` is the learned
//! element embedding followed by the normalized atom attributes. One
//! message-passing step computes `m_ij = relu(W [x_i, x_j, e_ij] + b)` for
//! every directed edge, averages the messages per node (zero for isolated
//! nodes) and applies a highway update. All nodes update synchronously.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{insert_block, Ctx, DiffError, Linear, ParamId, ParamStore, Tensor, Var};
use crate::molgraph::{attribute_matrix, symbol, vocab_index, BondType, MolGraph, ATTRIBUTE_COUNT, VOCABULARY_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub steps: usize,
    pub atom_embed: usize,
    pub bond_embed: usize,
    pub state: usize,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            steps: 6,
            atom_embed: 51,
            bond_embed: 21,
            state: 99,
        }
    }
}

impl GnnConfig {
    pub fn feature_width(&self) -> usize {
        self.atom_embed + ATTRIBUTE_COUNT
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("atom {atom} has element {element} outside the embedding vocabulary")]
    UnknownElement { atom: usize, element: String },
}

/// Checks that every atom has an embedding row.
pub fn check_vocabulary(g: &MolGraph) -> Result<(), EncodeError> {
    for (i, a) in g.atoms().iter().enumerate() {
        if vocab_index(a.element).is_none() {
            return Err(EncodeError::UnknownElement {
                atom: i,
                element: symbol(a.element)
                    .map(str::to_string)
                    .unwrap_or_else(|| format!("Z={}", a.element)),
            });
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Gnn {
    pub config: GnnConfig,
    pub atom_embed: ParamId,
    /// One row per bond type, `NULL` included. Shared with the pair scorer
    /// and the bond head.
    pub bond_embed: ParamId,
    init: Linear,
    msg_src: ParamId,
    msg_dst: ParamId,
    msg_bond: ParamId,
    msg_bias: ParamId,
    transform: Linear,
    gate: Linear,
}

impl Gnn {
    pub fn new<R: Rng>(store: &mut ParamStore, config: GnnConfig, rng: &mut R) -> Result<Self, DiffError> {
        let d = config.state;
        let f = config.feature_width();
        let de = config.bond_embed;
        let atom_embed = store.insert_glorot("gnn.atom_embed", VOCABULARY_SIZE, config.atom_embed, rng)?;
        let bond_embed = store.insert_glorot("gnn.bond_embed", BondType::ALL.len(), de, rng)?;
        let init = Linear::new(store, "gnn.init", f, d, true, rng)?;
        let fan = 2 * d + de;
        let msg_src = insert_block(store, "gnn.message.w_src", d, d, fan, rng)?;
        let msg_dst = insert_block(store, "gnn.message.w_dst", d, d, fan, rng)?;
        let msg_bond = insert_block(store, "gnn.message.w_bond", de, d, fan, rng)?;
        let msg_bias = store.insert_zeros("gnn.message.b", 1, d)?;
        let transform = Linear::new(store, "gnn.highway.transform", 2 * d + f, d, true, rng)?;
        let gate = Linear::new(store, "gnn.highway.gate", 2 * d + f, d, true, rng)?;
        Ok(Self {
            config,
            atom_embed,
            bond_embed,
            init,
            msg_src,
            msg_dst,
            msg_bond,
            msg_bias,
            transform,
            gate,
        })
    }

    /// Fixed node features `v`: element embedding then atom attributes.
    ///
    /// Panics on elements outside the vocabulary; see [`check_vocabulary`].
    pub fn features(&self, cx: Ctx, g: &MolGraph) -> Var {
        let t = cx.tape;
        let rows: Vec<usize> = g
            .atoms()
            .iter()
            .map(|a| vocab_index(a.element).expect("element checked against vocabulary"))
            .collect();
        let embed = t.gather_rows(cx.p(self.atom_embed), &rows);
        let attrs = t.constant(attribute_matrix(g));
        t.concat(&[embed, attrs])
    }

    /// Feature vector of atom `i` as a `1 x feature_width` row.
    pub fn atom_feature_vector(&self, cx: Ctx, g: &MolGraph, i: usize) -> Result<Var, EncodeError> {
        check_vocabulary(g)?;
        let v = self.features(cx, g);
        Ok(cx.tape.gather_rows(v, &[i]))
    }

    pub fn init_states(&self, cx: Ctx, v: Var) -> Var {
        cx.tape.relu(self.init.forward(cx, v))
    }

    /// Message-passing step for `targets` (all nodes when `None`). Returns
    /// the full state matrix with only the target rows replaced.
    pub fn step(&self, cx: Ctx, g: &MolGraph, x: Var, v: Var, targets: Option<&[usize]>) -> Var {
        let t = cx.tape;
        let n = g.len();
        let all: Vec<usize>;
        let targets = match targets {
            Some(ts) => ts,
            None => {
                all = (0..n).collect();
                &all
            }
        };
        if targets.is_empty() {
            return x;
        }
        let messages = self.aggregate(cx, g, x, targets);
        let whole = targets.len() == n && targets.iter().enumerate().all(|(k, &i)| k == i);
        let (xs, vs) = if whole {
            (x, v)
        } else {
            (t.gather_rows(x, targets), t.gather_rows(v, targets))
        };
        let updated = self.highway(cx, xs, messages, vs);
        if whole {
            return updated;
        }
        let mut index: Vec<usize> = (0..n).collect();
        for (k, &i) in targets.iter().enumerate() {
            index[i] = n + k;
        }
        t.gather_rows(t.concat_rows(&[x, updated]), &index)
    }

    /// `m_ij = relu(W [x_i, x_j, e_ij] + b)` for single rows `x_i`, `x_j`.
    pub fn message(&self, cx: Ctx, xi: Var, xj: Var, bond: BondType) -> Var {
        let t = cx.tape;
        let e = t.gather_rows(cx.p(self.bond_embed), &[bond.index()]);
        let pre = t.add(
            t.add(t.matmul(xi, cx.p(self.msg_src)), t.matmul(xj, cx.p(self.msg_dst))),
            t.matmul(e, cx.p(self.msg_bond)),
        );
        t.relu(t.add_row(pre, cx.p(self.msg_bias)))
    }

    /// Mean incoming message for each target, in target order. Neighbors are
    /// visited in ascending index order; isolated targets get a zero row.
    pub fn aggregate(&self, cx: Ctx, g: &MolGraph, x: Var, targets: &[usize]) -> Var {
        let t = cx.tape;
        let mut seg = Vec::new();
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut bond = Vec::new();
        for (k, &i) in targets.iter().enumerate() {
            for (j, b) in g.neighbors(i) {
                seg.push(k);
                src.push(i);
                dst.push(j);
                bond.push(b.index());
            }
        }
        if seg.is_empty() {
            return t.constant(Tensor::zeros(targets.len(), self.config.state));
        }
        let ps = t.gather_rows(t.matmul(x, cx.p(self.msg_src)), &src);
        let pd = t.gather_rows(t.matmul(x, cx.p(self.msg_dst)), &dst);
        let eb = t.matmul(cx.p(self.bond_embed), cx.p(self.msg_bond));
        let pe = t.gather_rows(eb, &bond);
        let pre = t.add_row(t.add(t.add(ps, pd), pe), cx.p(self.msg_bias));
        t.segment_mean(t.relu(pre), &seg, targets.len())
    }

    /// `x + a * (relu(W1 [x, m, v] + b1) - x)` with gate `a = sigmoid(W2 [x, m, v] + b2)`.
    pub fn highway(&self, cx: Ctx, x: Var, m: Var, v: Var) -> Var {
        let t = cx.tape;
        let input = t.concat(&[x, m, v]);
        let candidate = t.relu(self.transform.forward(cx, input));
        let alpha = t.sigmoid(self.gate.forward(cx, input));
        t.add(x, t.mul(alpha, t.sub(candidate, x)))
    }

    /// Applies `steps` synchronous message-passing steps.
    pub fn encode(&self, cx: Ctx, g: &MolGraph, mut x: Var, v: Var, steps: usize) -> Var {
        for _ in 0..steps {
            x = self.step(cx, g, x, v, None);
        }
        x
    }

    /// Initial features and the fully encoded states of `g`.
    pub fn run(&self, cx: Ctx, g: &MolGraph) -> (Var, Var) {
        let v = self.features(cx, g);
        let x0 = self.init_states(cx, v);
        (self.encode(cx, g, x0, v, self.config.steps), v)
    }

    /// Update after the bond `(u, w)` of `g` changed: `u` and `w` are updated
    /// against their new neighbor sets, then every node takes one step.
    pub fn refresh_after_edit(&self, cx: Ctx, g: &MolGraph, x: Var, u: usize, w: usize) -> Var {
        let v = self.features(cx, g);
        let local = self.step(cx, g, x, v, Some(&[u, w]));
        self.step(cx, g, local, v, None)
    }

    #[cfg(test)]
    pub(crate) fn gate_bias(&self) -> ParamId {
        self.gate.b.expect("gate has a bias")
    }
}

#[cfg(test)]
mod tests;
