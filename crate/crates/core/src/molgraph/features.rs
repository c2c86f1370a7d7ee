//! Fixed numeric atom attributes. The learned element embedding is added by
//! the encoder.

use super::graph::MolGraph;
use crate::diffcore::Tensor;

pub const ATTRIBUTE_COUNT: usize = 5;

/// Degree, explicit valence, explicit H count, charge and ring membership,
/// each scaled into [0, 1].
pub fn atom_attributes(g: &MolGraph, i: usize) -> [f64; ATTRIBUTE_COUNT] {
    let a = g.atom(i);
    let clamp = |x: f64| x.clamp(0.0, 1.0);
    [
        clamp(a.degree as f64 / 6.0),
        clamp(a.explicit_valence as f64 / 6.0),
        clamp(a.explicit_h_count as f64 / 4.0),
        clamp((a.charge as f64 + 3.0) / 6.0),
        if a.in_ring { 1.0 } else { 0.0 },
    ]
}

/// One row of attributes per atom.
pub fn attribute_matrix(g: &MolGraph) -> Tensor {
    let mut values = Vec::with_capacity(g.len() * ATTRIBUTE_COUNT);
    for i in 0..g.len() {
        values.extend_from_slice(&atom_attributes(g, i));
    }
    Tensor::new(g.len(), ATTRIBUTE_COUNT, values)
}
