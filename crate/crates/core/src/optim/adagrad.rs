use crate::error::Result;
use crate::models::Grads;
use crate::tensor::Tensor;

use super::check_aligned;

/// Adagrad with a `lr / (1 + decay * step)` learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct AdagradState {
    pub accum: Vec<Tensor>,
    pub lr: f64,
    pub decay: f64,
    pub step: u64,
    pub eps: f64,
}

impl AdagradState {
    pub fn new(shapes: &[&Tensor], lr: f64, decay: f64) -> Self {
        AdagradState {
            accum: shapes.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            lr,
            decay,
            step: 0,
            eps: 1e-8,
        }
    }

    pub fn effective_rate(&self) -> f64 {
        self.lr / (1.0 + self.decay * self.step as f64)
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &Grads) -> Result<()> {
        check_aligned(params, grads)?;
        let rate = self.effective_rate();
        let eps = self.eps;
        for ((p, g), acc) in params.iter_mut().zip(&grads.0).zip(self.accum.iter_mut()) {
            let iter = p.data_mut().iter_mut().zip(g.data()).zip(acc.data_mut());
            for ((pv, &gv), av) in iter {
                if gv == 0.0 {
                    continue;
                }
                *av += gv * gv;
                *pv -= rate * gv / (*av + eps).sqrt();
            }
        }
        self.step += 1;
        Ok(())
    }
}
