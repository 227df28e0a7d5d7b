use super::ops::Scalar;
use super::params::Model;
use super::transformer::loss_and_grad;
use crate::error::Result;
use crate::sampler::Batch;

/// Central-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-3;
/// Denominator floor for the relative error, so parameters whose true
/// gradient is ~0 are judged on absolute error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub checked: usize,
}

/// Compare every analytic gradient with central finite differences, in f64
/// and without dropout.
pub fn grad_check<T: Scalar>(model: &Model<T>, batch: &Batch) -> Result<GradCheckReport> {
    let mut m: Model<f64> = model.cast();
    let (_, grad) = loss_and_grad(&m, batch, None, true)?;
    let grad = grad.expect("gradient requested");
    let h = GRAD_CHECK_STEP;
    let mut worst = (0.0f64, 0usize);
    for i in 0..m.params.len() {
        let orig = m.params[i];
        m.params[i] = orig + h;
        let up = loss_and_grad(&m, batch, None, false)?.0.loss;
        m.params[i] = orig - h;
        let down = loss_and_grad(&m, batch, None, false)?.0.loss;
        m.params[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = grad[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    let name = m
        .layout
        .tensors
        .iter()
        .find(|t| t.range().contains(&worst.1))
        .map(|t| format!("{}[{}]", t.name, worst.1 - t.offset))
        .unwrap_or_default();
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_param: name,
        checked: m.params.len(),
    })
}
