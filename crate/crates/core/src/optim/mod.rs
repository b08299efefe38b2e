//! Losses, first-order optimizers, L-BFGS, and finite-difference gradient checks.

mod adagrad;
mod gradcheck;
mod lbfgs;

use crate::error::{Error, Result};
use crate::models::Grads;
use crate::tensor::Tensor;

pub use adagrad::AdagradState;
pub use gradcheck::{grad_check, model_grad_check, relative_error};
pub use lbfgs::{lbfgs_minimize, lbfgs_minimize_with, IterInfo, LbfgsOptions, LbfgsReport, LbfgsStatus};

/// Probabilities are clamped here before taking the log.
pub const PROB_FLOOR: f64 = 1e-15;

/// Negative log-probability of the true class.
pub fn cross_entropy(probs: &Tensor, label: usize) -> Result<f64> {
    let k = probs.len();
    if label >= k {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    let p = probs.data()[label];
    if p.is_nan() {
        // Propagate so that divergence is visible to the caller.
        return Ok(f64::NAN);
    }
    Ok(-p.max(PROB_FLOOR).ln())
}

/// `param -= lr * grad` for every tensor.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &Grads, lr: f64) -> Result<()> {
    check_aligned(params, grads)?;
    for (p, g) in params.iter_mut().zip(&grads.0) {
        p.add_scaled(-lr, g)?;
    }
    Ok(())
}

pub(crate) fn check_aligned(params: &[&mut Tensor], grads: &Grads) -> Result<()> {
    if params.len() != grads.0.len() {
        return Err(Error::shape("optimizer", &[params.len()], &[grads.0.len()]));
    }
    for (p, g) in params.iter().zip(&grads.0) {
        if !p.same_shape(g) {
            return Err(Error::shape("optimizer", p.shape(), g.shape()));
        }
    }
    Ok(())
}

/// Concatenates tensors into one flat vector.
pub fn flatten(tensors: &[&Tensor]) -> Vec<f64> {
    tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
}

/// Inverse of [`flatten`].
pub fn unflatten(flat: &[f64], tensors: &mut [&mut Tensor]) {
    let mut offset = 0;
    for t in tensors.iter_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    debug_assert_eq!(offset, flat.len());
}
