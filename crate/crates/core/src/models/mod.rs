//! The four classifier families and a uniform interface over them.
//!
//! Every model maps an [`Input`] to a class distribution through `forward`,
//! which also returns a trace for `backward`. Gradients are those of the
//! cross-entropy loss and are laid out like [`ModelParams::tensors`].

mod checkpoint;
mod cnn;
mod fnn;
mod lstm;
mod rnn;
pub(crate) mod rows;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use cnn::{CnnParams, CnnTrace};
pub use fnn::{FnnParams, FnnTrace};
pub use lstm::{LstmParams, LstmTrace};
pub use rnn::{RnnParams, RnnTrace};

/// Sentence matrix fed to CNN/RNN/LSTM models.
#[derive(Debug, Clone, PartialEq)]
pub enum SeqInput {
    /// `n x d` rows, e.g. looked-up static embeddings.
    Dense(Tensor),
    /// Hashed one-hot rows of width `dim`; `None` is a padding row.
    OneHot { ids: Vec<Option<usize>>, dim: usize },
    /// Rows of the model's own trainable embedding table; id 0 is padding.
    Indexed(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    /// Fixed-size feature vector (FNN).
    Vector(Tensor),
    Sequence(SeqInput),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Fnn,
    Cnn,
    Rnn,
    Lstm,
}

impl ArchKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Fnn => "fnn",
            ArchKind::Cnn => "cnn",
            ArchKind::Rnn => "rnn",
            ArchKind::Lstm => "lstm",
        }
    }
}

impl std::str::FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fnn" => Ok(ArchKind::Fnn),
            "cnn" => Ok(ArchKind::Cnn),
            "rnn" => Ok(ArchKind::Rnn),
            "lstm" => Ok(ArchKind::Lstm),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Shape hyperparameters needed to initialize a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum ArchSpec {
    Fnn {
        input: usize,
        hidden: Vec<usize>,
        classes: usize,
    },
    Cnn {
        embed_dim: usize,
        window: usize,
        filters: usize,
        hidden: usize,
        classes: usize,
        dropout: f64,
    },
    Rnn {
        embed_dim: usize,
        hidden: usize,
        classes: usize,
        dropout: f64,
    },
    Lstm {
        embed_dim: usize,
        hidden: usize,
        classes: usize,
        dropout: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Fnn(FnnParams),
    Cnn(CnnParams),
    Rnn(RnnParams),
    Lstm(LstmParams),
}

#[derive(Debug, Clone)]
pub enum Trace {
    Fnn(FnnTrace),
    Cnn(CnnTrace),
    Rnn(RnnTrace),
    Lstm(LstmTrace),
}

impl Trace {
    pub fn probs(&self) -> &Tensor {
        match self {
            Trace::Fnn(t) => &t.probs,
            Trace::Cnn(t) => &t.probs,
            Trace::Rnn(t) => &t.probs,
            Trace::Lstm(t) => &t.probs,
        }
    }
}

/// Gradients, one tensor per parameter tensor in [`ModelParams::tensors`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Tensor>);

impl Grads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Grads(params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect())
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_scaled(1.0, b).expect("matching gradient shapes");
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.0.iter_mut().for_each(|t| t.scale(alpha));
    }

    pub fn zero(&mut self) {
        self.0.iter_mut().for_each(|t| t.fill(0.0));
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|t| t.data())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Symmetric uniform initializer `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.uniform(-a, a)).collect()).expect("valid shape")
}

pub(crate) fn check_dropout(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Param(format!("dropout probability {p} not in [0, 1)")))
    }
}

/// Softmax cross-entropy gradient at the logits: `probs - onehot(label)`.
pub(crate) fn logit_grad(probs: &Tensor, label: usize) -> Result<Vec<f64>> {
    let k = probs.len();
    if label >= k {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    let mut g = probs.data().to_vec();
    g[label] -= 1.0;
    Ok(g)
}

/// Builds parameters for `spec`; deterministic per `seed`. Weights are
/// symmetric-uniform fan-scaled, biases zero except LSTM forget gates (1.0).
pub fn init_params(spec: &ArchSpec, seed: u64) -> Result<ModelParams> {
    let mut rng = Rng::new(seed);
    Ok(match spec {
        ArchSpec::Fnn {
            input,
            hidden,
            classes,
        } => ModelParams::Fnn(FnnParams::init(*input, hidden, *classes, &mut rng)?),
        &ArchSpec::Cnn {
            embed_dim,
            window,
            filters,
            hidden,
            classes,
            dropout,
        } => ModelParams::Cnn(CnnParams::init(
            embed_dim, window, filters, hidden, classes, dropout, &mut rng,
        )?),
        &ArchSpec::Rnn {
            embed_dim,
            hidden,
            classes,
            dropout,
        } => ModelParams::Rnn(RnnParams::init(embed_dim, hidden, classes, dropout, &mut rng)?),
        &ArchSpec::Lstm {
            embed_dim,
            hidden,
            classes,
            dropout,
        } => ModelParams::Lstm(LstmParams::init(embed_dim, hidden, classes, dropout, &mut rng)?),
    })
}

impl ModelParams {
    pub fn kind(&self) -> ArchKind {
        match self {
            ModelParams::Fnn(_) => ArchKind::Fnn,
            ModelParams::Cnn(_) => ArchKind::Cnn,
            ModelParams::Rnn(_) => ArchKind::Rnn,
            ModelParams::Lstm(_) => ArchKind::Lstm,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            ModelParams::Fnn(p) => p.classes(),
            ModelParams::Cnn(p) => p.out_b.len(),
            ModelParams::Rnn(p) => p.out_b.len(),
            ModelParams::Lstm(p) => p.out_b.len(),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        match self {
            ModelParams::Fnn(p) => p.tensors(),
            ModelParams::Cnn(p) => p.tensors(),
            ModelParams::Rnn(p) => p.tensors(),
            ModelParams::Lstm(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            ModelParams::Fnn(p) => p.tensors_mut(),
            ModelParams::Cnn(p) => p.tensors_mut(),
            ModelParams::Rnn(p) => p.tensors_mut(),
            ModelParams::Lstm(p) => p.tensors_mut(),
        }
    }

    /// Names parallel to [`ModelParams::tensors`]; used by checkpoints.
    pub fn tensor_names(&self) -> Vec<String> {
        match self {
            ModelParams::Fnn(p) => p.tensor_names(),
            ModelParams::Cnn(p) => p.tensor_names(),
            ModelParams::Rnn(p) => p.tensor_names(),
            ModelParams::Lstm(p) => p.tensor_names(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn dropout(&self) -> f64 {
        match self {
            ModelParams::Fnn(_) => 0.0,
            ModelParams::Cnn(p) => p.dropout,
            ModelParams::Rnn(p) => p.dropout,
            ModelParams::Lstm(p) => p.dropout,
        }
    }

    /// Attaches a trainable lookup table (`vocab x d`, row 0 is padding) to a
    /// sequence model; inputs must then be [`SeqInput::Indexed`].
    pub fn with_embedding(mut self, table: Tensor) -> Result<Self> {
        let expect_d = match &self {
            ModelParams::Fnn(_) => {
                return Err(Error::Param("FNN models take vector input, not embeddings".into()))
            }
            ModelParams::Cnn(p) => p.filters.shape()[1],
            ModelParams::Rnn(p) => p.w_in.shape()[1],
            ModelParams::Lstm(p) => p.w[0].shape()[1],
        };
        if table.rank() != 2 || table.shape()[1] != expect_d {
            return Err(Error::shape("with_embedding", table.shape(), &[expect_d]));
        }
        let mut table = table;
        table.row_mut(0).fill(0.0);
        match &mut self {
            ModelParams::Cnn(p) => p.embedding = Some(table),
            ModelParams::Rnn(p) => p.embedding = Some(table),
            ModelParams::Lstm(p) => p.embedding = Some(table),
            ModelParams::Fnn(_) => unreachable!(),
        }
        Ok(self)
    }

    /// Forward pass. `train` enables dropout drawn from `rng`.
    pub fn forward(&self, input: &Input, train: bool, rng: &mut Rng) -> Result<(Tensor, Trace)> {
        let (probs, trace) = match (self, input) {
            (ModelParams::Fnn(p), Input::Vector(x)) => {
                let t = p.forward(x)?;
                (t.probs.clone(), Trace::Fnn(t))
            }
            (ModelParams::Cnn(p), Input::Sequence(x)) => {
                let t = p.forward(x, train, rng)?;
                (t.probs.clone(), Trace::Cnn(t))
            }
            (ModelParams::Rnn(p), Input::Sequence(x)) => {
                let t = p.forward(x, train, rng)?;
                (t.probs.clone(), Trace::Rnn(t))
            }
            (ModelParams::Lstm(p), Input::Sequence(x)) => {
                let t = p.forward(x, train, rng)?;
                (t.probs.clone(), Trace::Lstm(t))
            }
            (p, _) => {
                return Err(Error::Param(format!(
                    "input kind does not match a {} model",
                    p.kind().name()
                )))
            }
        };
        Ok((probs, trace))
    }

    /// Cross-entropy gradients for one example.
    pub fn backward(&self, trace: &Trace, label: usize) -> Result<Grads> {
        let mut grads = Grads::zeros_like(self);
        self.accumulate_backward(trace, label, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale` times the example's gradients into `grads`.
    pub fn accumulate_backward(&self, trace: &Trace, label: usize, scale: f64, grads: &mut Grads) -> Result<()> {
        let mut slots: Vec<&mut Tensor> = grads.0.iter_mut().collect();
        match (self, trace) {
            (ModelParams::Fnn(p), Trace::Fnn(t)) => p.backward(t, label, scale, &mut slots),
            (ModelParams::Cnn(p), Trace::Cnn(t)) => p.backward(t, label, scale, &mut slots),
            (ModelParams::Rnn(p), Trace::Rnn(t)) => p.backward(t, label, scale, &mut slots),
            (ModelParams::Lstm(p), Trace::Lstm(t)) => p.backward(t, label, scale, &mut slots),
            (p, _) => Err(Error::TraceMismatch(p.kind().name())),
        }
    }

    /// Eval-mode class probabilities.
    pub fn probabilities(&self, input: &Input) -> Result<Tensor> {
        // Eval mode draws nothing from the generator.
        Ok(self.forward(input, false, &mut Rng::new(0))?.0)
    }

    /// Arg-max class of the eval-mode distribution; ties go to the smallest index.
    pub fn predict(&self, input: &Input) -> Result<usize> {
        Ok(argmax(self.probabilities(input)?.data()))
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
