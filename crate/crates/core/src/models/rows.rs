//! Sentence matrices as seen by the sequence models: either dense rows or
//! hashed one-hot rows stored as indices.

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, gather_window, Tensor};

use super::SeqInput;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Rows {
    Dense(Tensor),
    /// `None` marks a padding row (all zeros).
    OneHot { ids: Vec<Option<usize>>, dim: usize },
}

/// Positions touched by one convolution window, flattened as `j * w + k`.
pub(crate) enum Window {
    Dense(Vec<f64>),
    Sparse(Vec<usize>),
}

impl Window {
    #[inline]
    pub fn dot(&self, slab: &[f64]) -> f64 {
        match self {
            Window::Dense(buf) => dot(slab, buf),
            Window::Sparse(offsets) => offsets.iter().map(|&o| slab[o]).sum(),
        }
    }

    #[inline]
    pub fn axpy(&self, alpha: f64, slab: &mut [f64]) {
        match self {
            Window::Dense(buf) => axpy(alpha, buf, slab),
            Window::Sparse(offsets) => offsets.iter().for_each(|&o| slab[o] += alpha),
        }
    }
}

impl Rows {
    /// Resolves an input against an optional trainable lookup table.
    pub fn resolve(input: &SeqInput, embedding: Option<&Tensor>, op: &'static str) -> Result<Rows> {
        Ok(match (input, embedding) {
            (SeqInput::Dense(x), _) if x.rank() == 2 => Rows::Dense(x.clone()),
            (SeqInput::Dense(x), _) => return Err(Error::shape(op, x.shape(), &[])),
            (SeqInput::OneHot { ids, dim }, _) => {
                if ids.is_empty() {
                    return Err(Error::EmptySentence);
                }
                if let Some(&bad) = ids.iter().flatten().find(|&&i| i >= *dim) {
                    return Err(Error::shape(op, &[*dim], &[bad]));
                }
                Rows::OneHot {
                    ids: ids.clone(),
                    dim: *dim,
                }
            }
            (SeqInput::Indexed(ids), Some(table)) => {
                if ids.is_empty() {
                    return Err(Error::EmptySentence);
                }
                let (vocab, d) = (table.shape()[0], table.shape()[1]);
                let mut x = Tensor::zeros(&[ids.len(), d]);
                for (t, &id) in ids.iter().enumerate() {
                    if id >= vocab {
                        return Err(Error::shape(op, table.shape(), &[id]));
                    }
                    if id != 0 {
                        x.row_mut(t).copy_from_slice(table.row(id));
                    }
                }
                Rows::Dense(x)
            }
            (SeqInput::Indexed(_), None) => {
                return Err(Error::Param(format!("{op}: indexed input needs a trainable embedding table")))
            }
        })
    }

    pub fn len(&self) -> usize {
        match self {
            Rows::Dense(x) => x.shape()[0],
            Rows::OneHot { ids, .. } => ids.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Rows::Dense(x) => x.shape()[1],
            Rows::OneHot { dim, .. } => *dim,
        }
    }

    /// `x_t . v` for a length-`d` vector `v`.
    #[inline]
    pub fn dot_row(&self, t: usize, v: &[f64]) -> f64 {
        match self {
            Rows::Dense(x) => dot(x.row(t), v),
            Rows::OneHot { ids, .. } => ids[t].map_or(0.0, |j| v[j]),
        }
    }

    /// `out += alpha * x_t`.
    #[inline]
    pub fn axpy_row(&self, t: usize, alpha: f64, out: &mut [f64]) {
        match self {
            Rows::Dense(x) => axpy(alpha, x.row(t), out),
            Rows::OneHot { ids, .. } => {
                if let Some(j) = ids[t] {
                    out[j] += alpha;
                }
            }
        }
    }

    pub fn window(&self, t: usize, w: usize) -> Window {
        match self {
            Rows::Dense(x) => {
                let mut buf = vec![0.0; x.shape()[1] * w];
                gather_window(x, t, w, &mut buf);
                Window::Dense(buf)
            }
            Rows::OneHot { ids, .. } => Window::Sparse(
                (0..w)
                    .filter_map(|k| ids[t + k].map(|j| j * w + k))
                    .collect(),
            ),
        }
    }
}

/// Adds the row gradients `dx` (`n x d`) into the lookup-table gradient,
/// skipping the padding row.
pub(crate) fn scatter_rows(ids: &[usize], dx: &[f64], d: usize, grad_table: &mut Tensor) {
    for (t, &id) in ids.iter().enumerate() {
        if id != 0 {
            axpy(1.0, &dx[t * d..(t + 1) * d], grad_table.row_mut(id));
        }
    }
}
