//! Central-difference gradient checking.
//!
//! Runs in f64: the comparison tolerances used across the test suite
//! (1e-4 relative) are unreachable at 32-bit precision.

use super::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Check analytic gradients of a scalar-valued map against central
/// finite differences.
///
/// `f` receives a fresh tape plus one leaf per entry of `inputs` (every
/// leaf requires grad) and must return the scalar loss node. Returns the
/// max over all coordinates of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Config(format!(
            "grad_check eps must lie in [1e-7, 1e-3], got {eps}"
        )));
    }

    let eval = |tensors: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_, f64>> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&tape, &vars)?;
        if let Some(id) = tape.poisoned_node() {
            return Err(Error::Contract(format!(
                "non-finite value produced at node {id}"
            )));
        }
        if !loss.value().is_scalar() {
            return Err(Error::Contract(
                "grad_check requires a scalar-valued map".into(),
            ));
        }
        Ok(loss.item())
    };

    // analytic gradients
    let tape = Tape::new();
    let vars: Vec<Var<'_, f64>> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_grad()))
        .collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|v| grads.grad(*v)).collect();

    // numeric, coordinate by coordinate
    let mut work: Vec<Tensor<f64>> = inputs.iter().map(|t| t.clone().with_grad()).collect();
    let mut max_rel = 0.0f64;
    for (ti, t) in inputs.iter().enumerate() {
        for ci in 0..t.numel() {
            let orig = t.data()[ci];
            work[ti].data_mut()[ci] = orig + eps;
            let plus = eval(&work)?;
            work[ti].data_mut()[ci] = orig - eps;
            let minus = eval(&work)?;
            work[ti].data_mut()[ci] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[ti][ci];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
