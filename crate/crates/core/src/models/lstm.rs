use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, dropout_mask, sigmoid_scalar, softmax_slice, Rng, Tensor};

use super::rows::{scatter_rows, Rows};
use super::{check_dropout, glorot, logit_grad, SeqInput};

/// Gate order used by every per-gate array.
pub const GATES: [&str; 4] = ["i", "f", "o", "u"];
const I: usize = 0;
const F: usize = 1;
const O: usize = 2;
const U: usize = 3;

/// LSTM with input, forget and output gates and a tanh candidate:
///
/// ```text
/// i_t = sigmoid(W^i x_t + U^i h_{t-1} + b^i)
/// f_t = sigmoid(W^f x_t + U^f h_{t-1} + b^f)
/// o_t = sigmoid(W^o x_t + U^o h_{t-1} + b^o)
/// u_t = tanh(W^u x_t + U^u h_{t-1} + b^u)
/// c_t = i_t * u_t + f_t * c_{t-1}
/// h_t = o_t * tanh(c_t)
/// ```
///
/// The classification head matches [`super::RnnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Input weights per gate, each `h x d`.
    pub w: [Tensor; 4],
    /// Recurrent weights per gate, each `h x h`.
    pub u: [Tensor; 4],
    pub b: [Tensor; 4],
    /// `K x h`.
    pub out_w: Tensor,
    pub out_b: Tensor,
    pub dropout: f64,
    pub embedding: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct LstmStep {
    pub gates: [Vec<f64>; 4],
    pub cell: Vec<f64>,
    pub tanh_cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub(crate) rows: Rows,
    pub(crate) ids: Option<Vec<usize>>,
    pub steps: Vec<LstmStep>,
    pub mask: Option<Vec<f64>>,
    pub probs: Tensor,
}

impl LstmParams {
    pub fn init(embed_dim: usize, hidden: usize, classes: usize, dropout: f64, rng: &mut Rng) -> Result<Self> {
        if [embed_dim, hidden, classes].contains(&0) {
            return Err(Error::Param("LSTM widths must be >= 1".into()));
        }
        check_dropout(dropout)?;
        let w = std::array::from_fn(|_| glorot(&[hidden, embed_dim], embed_dim, hidden, rng));
        let u = std::array::from_fn(|_| glorot(&[hidden, hidden], hidden, hidden, rng));
        let b = std::array::from_fn(|g| Tensor::filled(&[hidden], if g == F { 1.0 } else { 0.0 }));
        Ok(LstmParams {
            w,
            u,
            b,
            out_w: glorot(&[classes, hidden], hidden, classes, rng),
            out_b: Tensor::zeros(&[classes]),
            dropout,
            embedding: None,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.b[0].len()
    }

    pub(crate) fn tensors(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.w.iter().chain(&self.u).chain(&self.b).collect();
        v.push(&self.out_w);
        v.push(&self.out_b);
        v.extend(self.embedding.as_ref());
        v
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self
            .w
            .iter_mut()
            .chain(self.u.iter_mut())
            .chain(self.b.iter_mut())
            .collect();
        v.push(&mut self.out_w);
        v.push(&mut self.out_b);
        v.extend(self.embedding.as_mut());
        v
    }

    pub(crate) fn tensor_names(&self) -> Vec<String> {
        let mut v: Vec<String> = ["w", "u", "b"]
            .iter()
            .flat_map(|p| GATES.iter().map(move |g| format!("{p}_{g}")))
            .collect();
        v.push("out_w".into());
        v.push("out_b".into());
        if self.embedding.is_some() {
            v.push("embedding".into());
        }
        v
    }

    /// One cell application.
    pub fn cell(&self, x_dot: impl Fn(&[f64]) -> f64, h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
        let h = self.hidden_size();
        let gates: [Vec<f64>; 4] = std::array::from_fn(|g| {
            (0..h)
                .map(|a| {
                    let pre = x_dot(self.w[g].row(a)) + dot(self.u[g].row(a), h_prev) + self.b[g].data()[a];
                    if g == U {
                        pre.tanh()
                    } else {
                        sigmoid_scalar(pre)
                    }
                })
                .collect()
        });
        let cell: Vec<f64> = (0..h)
            .map(|a| gates[I][a] * gates[U][a] + gates[F][a] * c_prev[a])
            .collect();
        let tanh_cell: Vec<f64> = cell.iter().map(|c| c.tanh()).collect();
        let hidden = (0..h).map(|a| gates[O][a] * tanh_cell[a]).collect();
        LstmStep {
            gates,
            cell,
            tanh_cell,
            hidden,
        }
    }

    pub fn forward(&self, input: &SeqInput, train: bool, rng: &mut Rng) -> Result<LstmTrace> {
        let rows = Rows::resolve(input, self.embedding.as_ref(), "lstm_forward")?;
        if rows.dim() != self.w[0].shape()[1] {
            return Err(Error::shape("lstm_forward", &[rows.len(), rows.dim()], self.w[0].shape()));
        }
        let h = self.hidden_size();
        let zeros = vec![0.0; h];
        let mut steps: Vec<LstmStep> = Vec::with_capacity(rows.len());
        for t in 0..rows.len() {
            let (h_prev, c_prev) = match steps.last() {
                Some(s) => (&s.hidden, &s.cell),
                None => (&zeros, &zeros),
            };
            let step = self.cell(|w| rows.dot_row(t, w), h_prev, c_prev);
            steps.push(step);
        }

        let mut last = steps.last().expect("n >= 1").hidden.clone();
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
        Ok(LstmTrace {
            rows,
            ids,
            steps,
            mask,
            probs: Tensor::vector(softmax_slice(&logits)),
        })
    }

    pub(crate) fn backward(&self, trace: &LstmTrace, label: usize, scale: f64, grads: &mut [&mut Tensor]) -> Result<()> {
        let h = self.hidden_size();
        let d = self.w[0].shape()[1];
        let n = trace.rows.len();
        if trace.steps.len() != n || trace.steps[0].hidden.len() != h || trace.rows.dim() != d {
            return Err(Error::TraceMismatch("lstm"));
        }
        // Slot layout: w[0..4], u[4..8], b[8..12], out_w 12, out_b 13, embedding 14.
        let mut g = logit_grad(&trace.probs, label)?;
        g.iter_mut().for_each(|v| *v *= scale);

        let h_n = &trace.steps[n - 1].hidden;
        let keep = |a: usize| trace.mask.as_ref().map_or(1.0, |m| m[a]);
        for (c, &gc) in g.iter().enumerate() {
            let row = grads[12].row_mut(c);
            for a in 0..h {
                row[a] += gc * h_n[a] * keep(a);
            }
        }
        axpy(1.0, &g, grads[13].data_mut());

        let mut dh: Vec<f64> = (0..h)
            .map(|a| keep(a) * (0..g.len()).map(|c| self.out_w.at2(c, a) * g[c]).sum::<f64>())
            .collect();
        let mut dc = vec![0.0; h];
        let zeros = vec![0.0; h];
        let mut dx = trace.ids.as_ref().map(|_| vec![0.0; n * d]);
        let mut dpre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h]);

        for t in (0..n).rev() {
            let s = &trace.steps[t];
            let (h_prev, c_prev) = if t == 0 {
                (&zeros, &zeros)
            } else {
                (&trace.steps[t - 1].hidden, &trace.steps[t - 1].cell)
            };
            let [gi, gf, go, gu] = &s.gates;
            for a in 0..h {
                let d_o = dh[a] * s.tanh_cell[a];
                dc[a] += dh[a] * go[a] * (1.0 - s.tanh_cell[a] * s.tanh_cell[a]);
                let d_i = dc[a] * gu[a];
                let d_u = dc[a] * gi[a];
                let d_f = dc[a] * c_prev[a];
                dpre[I][a] = d_i * gi[a] * (1.0 - gi[a]);
                dpre[F][a] = d_f * gf[a] * (1.0 - gf[a]);
                dpre[O][a] = d_o * go[a] * (1.0 - go[a]);
                dpre[U][a] = d_u * (1.0 - gu[a] * gu[a]);
                // Carry to c_{t-1}.
                dc[a] *= gf[a];
            }
            dh.fill(0.0);
            for gate in 0..4 {
                for (a, &da) in dpre[gate].iter().enumerate() {
                    if da == 0.0 {
                        continue;
                    }
                    trace.rows.axpy_row(t, da, grads[gate].row_mut(a));
                    axpy(da, h_prev, grads[4 + gate].row_mut(a));
                    grads[8 + gate].data_mut()[a] += da;
                    axpy(da, self.u[gate].row(a), &mut dh);
                    if let Some(dx) = dx.as_mut() {
                        axpy(da, self.w[gate].row(a), &mut dx[t * d..(t + 1) * d]);
                    }
                }
            }
        }
        if let (Some(dx), Some(ids)) = (dx, trace.ids.as_ref()) {
            scatter_rows(ids, &dx, d, grads[14]);
        }
        Ok(())
    }
}
