//! Central finite-difference comparison of tape gradients.

use serde::Serialize;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::DiffError;

/// Worst disagreement found by [`check_gradients`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
///
/// The floor keeps entries whose true gradient is zero, such as embedding
/// rows of absent elements, from dividing rounding noise by zero.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the tape gradient of `loss` with central differences of step `h`
/// for every entry of every parameter in `ids`.
///
/// `loss` must build a scalar on the given tape from the given store and be
/// a deterministic function of the parameter values.
pub fn check_gradients(
    store: &mut ParamStore,
    ids: &[ParamId],
    h: f64,
    floor: f64,
    loss: impl Fn(&Tape, &ParamStore) -> Var,
) -> Result<GradCheckReport, DiffError> {
    store.zero_grads();
    let tape = Tape::new();
    let l = loss(&tape, store);
    tape.backward(l, store)?;
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| store.grad(id).values().to_vec()).collect();
    store.zero_grads();

    let eval = |s: &ParamStore| -> Result<f64, DiffError> {
        let tape = Tape::new();
        let l = loss(&tape, s);
        tape.check()?;
        Ok(tape.scalar(l))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (k, &id) in ids.iter().enumerate() {
        for e in 0..store.value(id).len() {
            let orig = store.value(id).values()[e];
            store.value_mut(id).values_mut()[e] = orig + h;
            let plus = eval(store)?;
            store.value_mut(id).values_mut()[e] = orig - h;
            let minus = eval(store)?;
            store.value_mut(id).values_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[k][e];
            let err = relative_error(a, numeric, floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = store.name(id).to_string();
                report.worst_index = e;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
