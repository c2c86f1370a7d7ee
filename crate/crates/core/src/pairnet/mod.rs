//! Atom-pair scoring and top-K selection.
//!
//! Node states are extended with a reagent bit before scoring. The global
//! network attends over all atoms:
//!
//! ```text
//! r_ij = relu(V1 [x_i + x_j, e_ij] + c1)
//! a_ij = softmax_j(V2 r_ij + c2)
//! c_i  = sum_j a_ij x_j
//! z_ij = relu(W1 [h, x_i + x_j, c_i + c_j, e_ij] + b1)
//! s_ij = f(z_ij)
//! ```
//!
//! The local network drops the context term. Candidates are the unordered
//! pairs `i < j` of non-reagent atoms that have not been edited yet; pairs
//! without a bond use the `NULL` bond embedding.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{insert_block, Ctx, DiffError, Mlp2, ParamId, ParamStore, Tensor, Var};
use crate::molgraph::MolGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairNetwork {
    Local,
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairConfig {
    pub network: PairNetwork,
    /// Width of `z_ij` and of the attention hidden layer.
    pub hidden: usize,
    pub score_hidden: usize,
    pub top_k: usize,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            network: PairNetwork::Global,
            hidden: 71,
            score_hidden: 51,
            top_k: 10,
        }
    }
}

#[derive(Clone, Debug)]
struct Attention {
    v1_x: ParamId,
    v1_e: ParamId,
    c1: ParamId,
    v2: ParamId,
    c2: ParamId,
    w1_c: ParamId,
}

#[derive(Clone, Debug)]
pub struct PairNet {
    pub config: PairConfig,
    bond_embed: ParamId,
    attention: Option<Attention>,
    w1_h: ParamId,
    w1_x: ParamId,
    w1_e: ParamId,
    b1: ParamId,
    score: Mlp2,
}

/// Scores of the candidate pairs at one step.
#[derive(Clone, Debug)]
pub struct PairScores {
    pub pairs: Vec<(usize, usize)>,
    /// `P x hidden` pair representations, absent when there are no candidates.
    pub z: Option<Var>,
    /// `P x 1` scores.
    pub s: Option<Var>,
    pub values: Vec<f64>,
}

/// The selected pairs, best first.
#[derive(Clone, Debug)]
pub struct TopKSet {
    /// Positions into [`PairScores::pairs`].
    pub positions: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
    pub scores: Vec<f64>,
    /// `K x hidden`.
    pub z: Option<Var>,
    /// `K x 1`.
    pub s: Option<Var>,
}

impl TopKSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Unordered non-reagent pairs `i < j` not in `consumed`, in lexicographic order.
pub fn candidate_pairs(g: &MolGraph, consumed: &BTreeSet<(usize, usize)>) -> Vec<(usize, usize)> {
    let active: Vec<usize> = (0..g.len()).filter(|&i| !g.atom(i).is_reagent).collect();
    let mut out = Vec::new();
    for (a, &i) in active.iter().enumerate() {
        for &j in &active[a + 1..] {
            if !consumed.contains(&(i, j)) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Indices of the `k` best scores; ties go to the lexicographically smaller pair.
pub fn select_top_k(pairs: &[(usize, usize)], scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(pairs[a].cmp(&pairs[b])));
    order.truncate(k);
    order
}

impl PairNet {
    /// `state` is the encoder state width, without the reagent bit.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        config: PairConfig,
        state: usize,
        recurrent: usize,
        bond_embed: ParamId,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        let dx = state + 1;
        let de = store.value(bond_embed).cols();
        let hz = config.hidden;
        let attention = match config.network {
            PairNetwork::Local => None,
            PairNetwork::Global => {
                let fan = dx + de;
                Some(Attention {
                    v1_x: insert_block(store, "pair.attn.v1_x", dx, hz, fan, rng)?,
                    v1_e: insert_block(store, "pair.attn.v1_e", de, hz, fan, rng)?,
                    c1: store.insert_zeros("pair.attn.c1", 1, hz)?,
                    v2: store.insert_glorot("pair.attn.v2", hz, 1, rng)?,
                    c2: store.insert_zeros("pair.attn.c2", 1, 1)?,
                    w1_c: insert_block(store, "pair.w1_c", dx, hz, recurrent + 2 * dx + de, rng)?,
                })
            }
        };
        let fan = recurrent + dx + de + if attention.is_some() { dx } else { 0 };
        Ok(Self {
            config,
            bond_embed,
            attention,
            w1_h: insert_block(store, "pair.w1_h", recurrent, hz, fan, rng)?,
            w1_x: insert_block(store, "pair.w1_x", dx, hz, fan, rng)?,
            w1_e: insert_block(store, "pair.w1_e", de, hz, fan, rng)?,
            b1: store.insert_zeros("pair.b1", 1, hz)?,
            score: Mlp2::new(store, "pair.score", hz, config.score_hidden, 1, rng)?,
        })
    }

    /// Appends the reagent bit to each node state.
    pub fn augment(&self, cx: Ctx, g: &MolGraph, x: Var) -> Var {
        let bits = g
            .atoms()
            .iter()
            .map(|a| if a.is_reagent { 1.0 } else { 0.0 })
            .collect();
        cx.tape.concat(&[x, cx.tape.constant(Tensor::column(bits))])
    }

    /// Attention weights `a` (`n x n`, rows sum to one) and contexts `c`.
    pub fn attention(&self, cx: Ctx, g: &MolGraph, xa: Var) -> Option<(Var, Var)> {
        let at = self.attention.as_ref()?;
        let t = cx.tape;
        let n = g.len();
        let mut rows = Vec::with_capacity(n * n);
        let mut cols = Vec::with_capacity(n * n);
        let mut bonds = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                rows.push(i);
                cols.push(j);
                bonds.push(g.bond(i, j).index());
            }
        }
        let px = t.matmul(xa, cx.p(at.v1_x));
        let pe = t.matmul(cx.p(self.bond_embed), cx.p(at.v1_e));
        let pre = t.add(
            t.add(t.gather_rows(px, &rows), t.gather_rows(px, &cols)),
            t.gather_rows(pe, &bonds),
        );
        let r = t.relu(t.add_row(pre, cx.p(at.c1)));
        let logits = t.add_row(t.matmul(r, cx.p(at.v2)), cx.p(at.c2));
        let a = t.softmax(t.reshape(logits, n, n), 1);
        let c = t.matmul(a, xa);
        Some((a, c))
    }

    /// Scores `pairs` given node states `x` (`n x state`) and recurrent state `h`.
    pub fn score(&self, cx: Ctx, g: &MolGraph, x: Var, h: Var, pairs: Vec<(usize, usize)>) -> PairScores {
        if pairs.is_empty() {
            return PairScores {
                pairs,
                z: None,
                s: None,
                values: Vec::new(),
            };
        }
        let t = cx.tape;
        let xa = self.augment(cx, g, x);
        let left: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let right: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let bonds: Vec<usize> = pairs.iter().map(|&(i, j)| g.bond(i, j).index()).collect();
        let qx = t.matmul(xa, cx.p(self.w1_x));
        let mut pre = t.add(t.gather_rows(qx, &left), t.gather_rows(qx, &right));
        let qe = t.matmul(cx.p(self.bond_embed), cx.p(self.w1_e));
        pre = t.add(pre, t.gather_rows(qe, &bonds));
        if let Some((_, c)) = self.attention(cx, g, xa) {
            let w1_c = self.attention.as_ref().map(|a| a.w1_c).expect("global network");
            let qc = t.matmul(c, cx.p(w1_c));
            pre = t.add(pre, t.add(t.gather_rows(qc, &left), t.gather_rows(qc, &right)));
        }
        let bias = t.add(t.matmul(h, cx.p(self.w1_h)), cx.p(self.b1));
        let z = t.relu(t.add_row(pre, bias));
        let s = self.score.forward(cx, z);
        let values = t.value(s).values().to_vec();
        PairScores {
            pairs,
            z: Some(z),
            s: Some(s),
            values,
        }
    }

    /// Top-K of `scores`, or exactly `forced` (which must be candidates) when given.
    pub fn top_k(&self, cx: Ctx, scores: &PairScores, forced: Option<&[(usize, usize)]>) -> TopKSet {
        let positions = match forced {
            Some(pairs) => pairs
                .iter()
                .map(|p| {
                    scores
                        .pairs
                        .iter()
                        .position(|q| q == p)
                        .expect("forced pair is a candidate")
                })
                .collect(),
            None => select_top_k(&scores.pairs, &scores.values, self.config.top_k),
        };
        let (z, s) = match (scores.z, scores.s) {
            (Some(z), Some(s)) if !positions.is_empty() => (
                Some(cx.tape.gather_rows(z, &positions)),
                Some(cx.tape.gather_rows(s, &positions)),
            ),
            _ => (None, None),
        };
        TopKSet {
            pairs: positions.iter().map(|&p| scores.pairs[p]).collect(),
            scores: positions.iter().map(|&p| scores.values[p]).collect(),
            positions,
            z,
            s,
        }
    }
}

#[cfg(test)]
mod tests;
