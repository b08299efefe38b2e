use crate::error::Result;
use crate::models::{Grads, Input, ModelParams};
use crate::tensor::Rng;

use super::cross_entropy;

/// Coordinate-wise relative error `|a - n| / max(|a| + |n|, 1e-6)`. The floor
/// keeps coordinates with negligible gradient from amplifying round-off.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Compares `analytic` with central differences of `loss` at step `eps` and
/// returns the largest relative error. When the model has more than
/// `max_coords` coordinates, a seeded random subset of that size is checked.
pub fn grad_check<L>(
    params: &ModelParams,
    loss: L,
    analytic: &Grads,
    eps: f64,
    max_coords: usize,
    seed: u64,
) -> Result<f64>
where
    L: Fn(&ModelParams) -> Result<f64>,
{
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut coords: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(ti, &n)| (0..n).map(move |k| (ti, k)))
        .collect();
    if total > max_coords {
        let mut rng = Rng::new(seed);
        rng.shuffle(&mut coords);
        coords.truncate(max_coords);
        coords.sort_unstable();
    }

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (ti, k) in coords {
        let orig = probe.tensors()[ti].data()[k];
        probe.tensors_mut()[ti].data_mut()[k] = orig + eps;
        let plus = loss(&probe)?;
        probe.tensors_mut()[ti].data_mut()[k] = orig - eps;
        let minus = loss(&probe)?;
        probe.tensors_mut()[ti].data_mut()[k] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.0[ti].data()[k], numeric));
    }
    Ok(worst)
}

/// Gradient check of one example's cross-entropy. With `dropout_seed` the
/// forward pass runs in training mode with the same mask on every evaluation.
pub fn model_grad_check(
    params: &ModelParams,
    input: &Input,
    label: usize,
    eps: f64,
    dropout_seed: Option<u64>,
) -> Result<f64> {
    let run = |p: &ModelParams| {
        let mut rng = Rng::new(dropout_seed.unwrap_or(0));
        p.forward(input, dropout_seed.is_some(), &mut rng)
    };
    let (_, trace) = run(params)?;
    let analytic = params.backward(&trace, label)?;
    let loss = |p: &ModelParams| cross_entropy(&run(p)?.0, label);
    grad_check(params, loss, &analytic, eps, 1_000, 0x6c0c)
}
