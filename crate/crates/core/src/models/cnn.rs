use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, dropout_mask, softmax_slice, Rng, Tensor};

use super::rows::{scatter_rows, Rows};
use super::{check_dropout, glorot, logit_grad, SeqInput};

/// Convolution over w-grams, ReLU, max-over-time pooling, a ReLU fully
/// connected layer with dropout, and a softmax output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    /// `o x d x w`.
    pub filters: Tensor,
    /// `o`.
    pub conv_b: Tensor,
    /// `o x h`.
    pub fc_w: Tensor,
    pub fc_b: Tensor,
    /// `h x K`.
    pub out_w: Tensor,
    pub out_b: Tensor,
    pub dropout: f64,
    /// Optional trainable lookup table (`vocab x d`).
    pub embedding: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct CnnTrace {
    pub(crate) rows: Rows,
    pub(crate) ids: Option<Vec<usize>>,
    /// Pooled ReLU features `z`.
    pub pooled: Vec<f64>,
    /// Time index of each filter's maximum (earliest on ties).
    pub argmax: Vec<usize>,
    /// Fully connected pre-activation.
    pub fc_pre: Vec<f64>,
    /// Post-ReLU, post-dropout fully connected output.
    pub fc_out: Vec<f64>,
    pub mask: Option<Vec<f64>>,
    pub probs: Tensor,
}

impl CnnParams {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        embed_dim: usize,
        window: usize,
        filters: usize,
        hidden: usize,
        classes: usize,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if [embed_dim, window, filters, hidden, classes].contains(&0) {
            return Err(Error::Param("CNN widths must be >= 1".into()));
        }
        check_dropout(dropout)?;
        Ok(CnnParams {
            filters: glorot(&[filters, embed_dim, window], embed_dim * window, filters, rng),
            conv_b: Tensor::zeros(&[filters]),
            fc_w: glorot(&[filters, hidden], filters, hidden, rng),
            fc_b: Tensor::zeros(&[hidden]),
            out_w: glorot(&[hidden, classes], hidden, classes, rng),
            out_b: Tensor::zeros(&[classes]),
            dropout,
            embedding: None,
        })
    }

    pub fn window(&self) -> usize {
        self.filters.shape()[2]
    }

    pub(crate) fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![
            &self.filters,
            &self.conv_b,
            &self.fc_w,
            &self.fc_b,
            &self.out_w,
            &self.out_b,
        ];
        v.extend(self.embedding.as_ref());
        v
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![
            &mut self.filters,
            &mut self.conv_b,
            &mut self.fc_w,
            &mut self.fc_b,
            &mut self.out_w,
            &mut self.out_b,
        ];
        v.extend(self.embedding.as_mut());
        v
    }

    pub(crate) fn tensor_names(&self) -> Vec<String> {
        let mut v: Vec<String> = ["filters", "conv_b", "fc_w", "fc_b", "out_w", "out_b"]
            .map(String::from)
            .to_vec();
        if self.embedding.is_some() {
            v.push("embedding".into());
        }
        v
    }

    pub fn forward(&self, input: &SeqInput, train: bool, rng: &mut Rng) -> Result<CnnTrace> {
        let rows = Rows::resolve(input, self.embedding.as_ref(), "cnn_forward")?;
        let (o, d, w) = (self.filters.shape()[0], self.filters.shape()[1], self.window());
        if rows.dim() != d {
            return Err(Error::shape("cnn_forward", &[rows.len(), rows.dim()], self.filters.shape()));
        }
        let n = rows.len();
        if n < w {
            return Err(Error::SentenceTooShort { len: n, window: w });
        }

        // Convolution + ReLU + max over time, fused. ReLU outputs are >= 0, so
        // starting the running max at 0 with argmax 0 matches pooling the
        // rectified map with earliest-index ties.
        let mut pooled = vec![0.0; o];
        let mut argmax = vec![0usize; o];
        for t in 0..=n - w {
            let win = rows.window(t, w);
            for i in 0..o {
                let y = (win.dot(self.filters.row(i)) + self.conv_b.data()[i]).max(0.0);
                if y > pooled[i] {
                    pooled[i] = y;
                    argmax[i] = t;
                }
            }
        }

        let mut fc_pre = self.fc_b.data().to_vec();
        for (i, &z) in pooled.iter().enumerate() {
            if z != 0.0 {
                axpy(z, self.fc_w.row(i), &mut fc_pre);
            }
        }
        let mut fc_out: Vec<f64> = fc_pre.iter().map(|v| v.max(0.0)).collect();
        let mask = if train && self.dropout > 0.0 {
            let m = dropout_mask(fc_out.len(), self.dropout, rng)?.into_data();
            fc_out.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
            Some(m)
        } else {
            None
        };

        let mut logits = self.out_b.data().to_vec();
        for (j, &r) in fc_out.iter().enumerate() {
            if r != 0.0 {
                axpy(r, self.out_w.row(j), &mut logits);
            }
        }
        let ids = match input {
            SeqInput::Indexed(ids) => Some(ids.clone()),
            _ => None,
        };
        Ok(CnnTrace {
            rows,
            ids,
            pooled,
            argmax,
            fc_pre,
            fc_out,
            mask,
            probs: Tensor::vector(softmax_slice(&logits)),
        })
    }

    pub(crate) fn backward(&self, trace: &CnnTrace, label: usize, scale: f64, grads: &mut [&mut Tensor]) -> Result<()> {
        let (o, d, w) = (self.filters.shape()[0], self.filters.shape()[1], self.window());
        let h = self.fc_b.len();
        if trace.pooled.len() != o || trace.fc_pre.len() != h || trace.rows.dim() != d {
            return Err(Error::TraceMismatch("cnn"));
        }
        let mut g = logit_grad(&trace.probs, label)?;
        g.iter_mut().for_each(|v| *v *= scale);

        // Output layer.
        for (j, &r) in trace.fc_out.iter().enumerate() {
            if r != 0.0 {
                axpy(r, &g, grads[4].row_mut(j));
            }
        }
        axpy(1.0, &g, grads[5].data_mut());

        // Fully connected layer: through dropout mask and ReLU.
        let d_fc: Vec<f64> = (0..h)
            .map(|j| {
                if trace.fc_pre[j] <= 0.0 {
                    return 0.0;
                }
                let keep = trace.mask.as_ref().map_or(1.0, |m| m[j]);
                keep * dot(self.out_w.row(j), &g)
            })
            .collect();
        for (i, &z) in trace.pooled.iter().enumerate() {
            if z != 0.0 {
                axpy(z, &d_fc, grads[2].row_mut(i));
            }
        }
        axpy(1.0, &d_fc, grads[3].data_mut());

        // Pool routes each filter's gradient to its argmax window, and only
        // where the rectifier was active there.
        let mut dx = trace.ids.as_ref().map(|_| vec![0.0; trace.rows.len() * d]);
        for i in 0..o {
            if trace.pooled[i] <= 0.0 {
                continue;
            }
            let dz = dot(self.fc_w.row(i), &d_fc);
            if dz == 0.0 {
                continue;
            }
            let t = trace.argmax[i];
            let win = trace.rows.window(t, w);
            win.axpy(dz, grads[0].row_mut(i));
            grads[1].data_mut()[i] += dz;
            if let Some(dx) = dx.as_mut() {
                let slab = self.filters.row(i);
                for k in 0..w {
                    let row = &mut dx[(t + k) * d..(t + k + 1) * d];
                    for (j, v) in row.iter_mut().enumerate() {
                        *v += dz * slab[j * w + k];
                    }
                }
            }
        }
        if let (Some(dx), Some(ids)) = (dx, trace.ids.as_ref()) {
            scatter_rows(ids, &dx, d, grads[6]);
        }
        Ok(())
    }
}
