//! Central finite-difference verification of the analytic gradients.
//!
//! Perturbs every parameter element by ±step, re-evaluates the loss (same
//! dropout seed, so the very same function), and compares the numeric
//! derivative against the tape's gradient.

use crate::error::Result;

use super::{loss_and_grad, loss_only, Batch, Mode, ModelSpec, ParameterSet};

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// Parameter name and flat element index of the worst mismatch.
    pub worst: (String, usize),
    pub checked: usize,
}

/// Relative error with a floor on the denominator so near-zero gradient
/// pairs are compared absolutely at the same tolerance.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-4)
}

pub fn check_gradients(
    spec: &ModelSpec,
    params: &ParameterSet,
    batch: &Batch,
    targets: &[f64],
    mode: Mode,
    step: f64,
) -> Result<GradCheck> {
    let (_, analytic) = loss_and_grad(spec, params, batch, targets, mode)?;
    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst: (String::new(), 0),
        checked: 0,
    };
    for (pi, (name, tensor)) in params.iter().enumerate() {
        for e in 0..tensor.len() {
            let plus = loss_only(spec, &params.perturbed(pi, e, step), batch, targets, mode)?;
            let minus = loss_only(spec, &params.perturbed(pi, e, -step), batch, targets, mode)?;
            let numeric = (plus - minus) / (2.0 * step);
            let rel = relative_error(analytic[pi].data[e], numeric);
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (name.clone(), e);
            }
        }
    }
    Ok(report)
}
