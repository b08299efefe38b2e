use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, dropout_mask, sigmoid_scalar, softmax_slice, Rng, Tensor};

use super::rows::{scatter_rows, Rows};
use super::{check_dropout, glorot, logit_grad, SeqInput};

/// Elman recurrence `h_t = sigmoid(W x_t + U h_{t-1} + b)`; the last hidden
/// state goes through dropout into a softmax output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    /// `h x d`.
    pub w_in: Tensor,
    /// `h x h`.
    pub w_rec: Tensor,
    pub b: Tensor,
    /// `K x h`.
    pub out_w: Tensor,
    pub out_b: Tensor,
    pub dropout: f64,
    pub embedding: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct RnnTrace {
    pub(crate) rows: Rows,
    pub(crate) ids: Option<Vec<usize>>,
    /// `h_0 = 0` followed by `h_1 .. h_n`.
    pub hidden: Vec<Vec<f64>>,
    pub mask: Option<Vec<f64>>,
    pub probs: Tensor,
}

impl RnnParams {
    pub fn init(embed_dim: usize, hidden: usize, classes: usize, dropout: f64, rng: &mut Rng) -> Result<Self> {
        if [embed_dim, hidden, classes].contains(&0) {
            return Err(Error::Param("RNN widths must be >= 1".into()));
        }
        check_dropout(dropout)?;
        Ok(RnnParams {
            w_in: glorot(&[hidden, embed_dim], embed_dim, hidden, rng),
            w_rec: glorot(&[hidden, hidden], hidden, hidden, rng),
            b: Tensor::zeros(&[hidden]),
            out_w: glorot(&[classes, hidden], hidden, classes, rng),
            out_b: Tensor::zeros(&[classes]),
            dropout,
            embedding: None,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.b.len()
    }

    pub(crate) fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.w_in, &self.w_rec, &self.b, &self.out_w, &self.out_b];
        v.extend(self.embedding.as_ref());
        v
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![
            &mut self.w_in,
            &mut self.w_rec,
            &mut self.b,
            &mut self.out_w,
            &mut self.out_b,
        ];
        v.extend(self.embedding.as_mut());
        v
    }

    pub(crate) fn tensor_names(&self) -> Vec<String> {
        let mut v: Vec<String> = ["w_in", "w_rec", "b", "out_w", "out_b"].map(String::from).to_vec();
        if self.embedding.is_some() {
            v.push("embedding".into());
        }
        v
    }

    /// One recurrence step from `h_prev` on row `t`.
    pub(crate) fn step(&self, rows: &Rows, t: usize, h_prev: &[f64]) -> Vec<f64> {
        (0..self.hidden_size())
            .map(|a| {
                let pre = rows.dot_row(t, self.w_in.row(a)) + dot(self.w_rec.row(a), h_prev) + self.b.data()[a];
                sigmoid_scalar(pre)
            })
            .collect()
    }

    pub fn forward(&self, input: &SeqInput, train: bool, rng: &mut Rng) -> Result<RnnTrace> {
        let rows = Rows::resolve(input, self.embedding.as_ref(), "rnn_forward")?;
        if rows.dim() != self.w_in.shape()[1] {
            return Err(Error::shape("rnn_forward", &[rows.len(), rows.dim()], self.w_in.shape()));
        }
        let h = self.hidden_size();
        let mut hidden = Vec::with_capacity(rows.len() + 1);
        hidden.push(vec![0.0; h]);
        for t in 0..rows.len() {
            let next = self.step(&rows, t, hidden.last().expect("h_0"));
            hidden.push(next);
        }

        let mut last = hidden.last().expect("h_n").clone();
        let mask = if train && self.dropout > 0.0 {
            let m = dropout_mask(h, self.dropout, rng)?.into_data();
            last.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
            Some(m)
        } else {
            None
        };
        let logits: Vec<f64> = (0..self.out_b.len())
            .map(|c| dot(self.out_w.row(c), &last) + self.out_b.data()[c])
            .collect();
        let ids = match input {
            SeqInput::Indexed(ids) => Some(ids.clone()),
            _ => None,
        };
        Ok(RnnTrace {
            rows,
            ids,
            hidden,
            mask,
            probs: Tensor::vector(softmax_slice(&logits)),
        })
    }

    pub(crate) fn backward(&self, trace: &RnnTrace, label: usize, scale: f64, grads: &mut [&mut Tensor]) -> Result<()> {
        let h = self.hidden_size();
        let d = self.w_in.shape()[1];
        let n = trace.rows.len();
        if trace.hidden.len() != n + 1 || trace.hidden[0].len() != h || trace.rows.dim() != d {
            return Err(Error::TraceMismatch("rnn"));
        }
        let mut g = logit_grad(&trace.probs, label)?;
        g.iter_mut().for_each(|v| *v *= scale);

        let h_n = &trace.hidden[n];
        let keep = |a: usize| trace.mask.as_ref().map_or(1.0, |m| m[a]);
        for (c, &gc) in g.iter().enumerate() {
            let row = grads[3].row_mut(c);
            for a in 0..h {
                row[a] += gc * h_n[a] * keep(a);
            }
        }
        axpy(1.0, &g, grads[4].data_mut());

        let mut dh: Vec<f64> = (0..h)
            .map(|a| keep(a) * (0..g.len()).map(|c| self.out_w.at2(c, a) * g[c]).sum::<f64>())
            .collect();
        let mut dx = trace.ids.as_ref().map(|_| vec![0.0; n * d]);
        let mut dpre = vec![0.0; h];
        for t in (0..n).rev() {
            let (h_t, h_prev) = (&trace.hidden[t + 1], &trace.hidden[t]);
            for a in 0..h {
                dpre[a] = dh[a] * h_t[a] * (1.0 - h_t[a]);
            }
            for (a, &da) in dpre.iter().enumerate() {
                if da == 0.0 {
                    continue;
                }
                trace.rows.axpy_row(t, da, grads[0].row_mut(a));
                axpy(da, h_prev, grads[1].row_mut(a));
                grads[2].data_mut()[a] += da;
                if let Some(dx) = dx.as_mut() {
                    axpy(da, self.w_in.row(a), &mut dx[t * d..(t + 1) * d]);
                }
            }
            dh.fill(0.0);
            for (a, &da) in dpre.iter().enumerate() {
                axpy(da, self.w_rec.row(a), &mut dh);
            }
        }
        if let (Some(dx), Some(ids)) = (dx, trace.ids.as_ref()) {
            scatter_rows(ids, &dx, d, grads[5]);
        }
        Ok(())
    }
}
