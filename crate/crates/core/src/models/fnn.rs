use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, sigmoid_scalar, softmax_slice, Rng, Tensor};

use super::{glorot, logit_grad};

/// Feed-forward network `y(x) = f_l(... f_1(w_1^T x + b_1) ...)` with
/// logistic hidden layers and a softmax output. `weights[l]` is `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct FnnParams {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct FnnTrace {
    /// Layer inputs: the example itself, then each hidden activation.
    pub layer_inputs: Vec<Vec<f64>>,
    pub probs: Tensor,
}

impl FnnParams {
    pub fn init(input: usize, hidden: &[usize], classes: usize, rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(classes);
        if sizes.contains(&0) {
            return Err(Error::Param(format!("FNN layer sizes must be >= 1, got {sizes:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            weights.push(glorot(&[pair[0], pair[1]], pair[0], pair[1], rng));
            biases.push(Tensor::zeros(&[pair[1]]));
        }
        Ok(FnnParams { weights, biases })
    }

    /// Builds from explicit layers, checking that the shapes chain.
    pub fn from_layers(weights: Vec<Tensor>, biases: Vec<Tensor>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Param("FNN needs one bias per weight matrix".into()));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rank() != 2 || b.shape() != [w.shape()[1]] {
                return Err(Error::shape("FnnParams layer", w.shape(), b.shape()));
            }
            if l > 0 && weights[l - 1].shape()[1] != w.shape()[0] {
                return Err(Error::shape("FnnParams chain", weights[l - 1].shape(), w.shape()));
            }
        }
        Ok(FnnParams { weights, biases })
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].shape()[0]
    }

    pub fn classes(&self) -> usize {
        self.biases.last().expect("at least one layer").len()
    }

    pub(crate) fn tensors(&self) -> Vec<&Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub(crate) fn tensor_names(&self) -> Vec<String> {
        (0..self.weights.len())
            .flat_map(|l| [format!("w{}", l + 1), format!("b{}", l + 1)])
            .collect()
    }

    pub fn forward(&self, x: &Tensor) -> Result<FnnTrace> {
        if x.rank() != 1 || x.len() != self.input_dim() {
            return Err(Error::shape("fnn_forward", x.shape(), self.weights[0].shape()));
        }
        let last = self.weights.len() - 1;
        let mut layer_inputs = vec![x.data().to_vec()];
        let mut probs = Vec::new();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let a = layer_inputs.last().expect("input present");
            // z = w^T a + b, skipping zero inputs (count vectors are sparse).
            let mut z = b.data().to_vec();
            for (j, &aj) in a.iter().enumerate() {
                if aj != 0.0 {
                    axpy(aj, w.row(j), &mut z);
                }
            }
            if l == last {
                probs = softmax_slice(&z);
            } else {
                z.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
                layer_inputs.push(z);
            }
        }
        Ok(FnnTrace {
            layer_inputs,
            probs: Tensor::vector(probs),
        })
    }

    pub(crate) fn backward(&self, trace: &FnnTrace, label: usize, scale: f64, grads: &mut [&mut Tensor]) -> Result<()> {
        if trace.layer_inputs.len() != self.weights.len() || trace.probs.len() != self.classes() {
            return Err(Error::TraceMismatch("fnn"));
        }
        let mut delta = logit_grad(&trace.probs, label)?;
        delta.iter_mut().for_each(|v| *v *= scale);
        for l in (0..self.weights.len()).rev() {
            let a = &trace.layer_inputs[l];
            let w = &self.weights[l];
            {
                let gw = &mut *grads[2 * l];
                for (j, &aj) in a.iter().enumerate() {
                    if aj != 0.0 {
                        axpy(aj, &delta, gw.row_mut(j));
                    }
                }
            }
            axpy(1.0, &delta, grads[2 * l + 1].data_mut());
            if l > 0 {
                delta = a
                    .iter()
                    .enumerate()
                    .map(|(j, &aj)| dot(w.row(j), &delta) * aj * (1.0 - aj))
                    .collect();
            }
        }
        Ok(())
    }
}
