//! The training loop, evaluation, and learning curves.

use std::ops::ControlFlow;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::models::{init_params, read_checkpoint, write_checkpoint, Checkpoint, Grads, Input, ModelParams};
use crate::optim::{
    cross_entropy, flatten, lbfgs_minimize_with, sgd_step, unflatten, AdagradState, LbfgsOptions, LbfgsStatus,
};
use crate::tensor::Rng;
use crate::text::{tokenize, TokenSeq};

use super::config::{OptimizerKind, RunConfig};
use super::data::{segment_words, Dataset, Segmentation};
use super::encode::{load_table, Encoder};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRecord {
    /// 1-based pass number.
    pub iteration: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
    /// Wall time since training started.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub records: Vec<CurveRecord>,
}

impl LearningCurve {
    /// Highest test accuracy; the earliest such record on ties.
    pub fn best(&self) -> Option<&CurveRecord> {
        self.records
            .iter()
            .fold(None, |best: Option<&CurveRecord>, r| match best {
                Some(b) if b.test_accuracy >= r.test_accuracy => Some(b),
                _ => Some(r),
            })
    }

    pub fn last(&self) -> Option<&CurveRecord> {
        self.records.last()
    }
}

/// A trained model together with its input encoder.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub params: ModelParams,
    pub encoder: Encoder,
}

impl Classifier {
    pub fn labels(&self) -> &[String] {
        &self.encoder.labels
    }

    pub fn predict_tokens(&self, tokens: &TokenSeq) -> Result<usize> {
        self.params.predict(&self.encoder.encode(tokens)?)
    }

    /// Label name for one raw sentence, tokenized like the training data.
    pub fn predict_text(&self, text: &str) -> Result<&str> {
        let ds = match self.encoder.segmentation {
            Segmentation::Plain => tokenize(text)?,
            Segmentation::Vietnamese => segment_words(text)?,
        };
        Ok(&self.encoder.labels[self.predict_tokens(&ds)?])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_checkpoint(
            &Checkpoint {
                params: self.params.clone(),
                meta: self.encoder.to_json(),
            },
            path,
        )
    }

    /// Loads a checkpoint. Static embeddings are read from `embeddings` when
    /// given, otherwise from the path recorded at training time.
    pub fn load(path: impl AsRef<Path>, embeddings: Option<&Path>) -> Result<Self> {
        let ckpt = read_checkpoint(path)?;
        let table = match embeddings {
            Some(p) => Some(Arc::new(load_table(Encoder::peek_encoding(&ckpt.meta)?, p)?)),
            None => None,
        };
        Ok(Classifier {
            encoder: Encoder::from_json(&ckpt.meta, table)?,
            params: ckpt.params,
        })
    }
}

/// Fraction of `inputs` whose prediction equals the gold label.
pub fn accuracy(params: &ModelParams, inputs: &[Input], labels: &[usize]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = inputs
        .par_iter()
        .zip(labels)
        .map(|(x, &y)| params.predict(x).map(|p| usize::from(p == y)))
        .collect::<Result<Vec<_>>>()?;
    Ok(correct.iter().sum::<usize>() as f64 / inputs.len() as f64)
}

/// Test accuracy of `model` on `test`, whose catalog must equal the model's.
pub fn evaluate(model: &Classifier, test: &Dataset) -> Result<f64> {
    if test.labels != model.encoder.labels {
        return Err(Error::CatalogMismatch);
    }
    let inputs = model.encoder.encode_all(test)?;
    let labels: Vec<usize> = test.examples.iter().map(|(l, _)| *l).collect();
    accuracy(&model.params, &inputs, &labels)
}

/// Minibatches are split into this many fixed slices whose gradients are
/// summed in slice order, so results do not depend on the thread count.
const SLICES: usize = 4;
const DROPOUT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

struct Batch<'a> {
    params: &'a ModelParams,
    inputs: &'a [Input],
    labels: &'a [usize],
    seed: u64,
    epoch: usize,
    train: bool,
}

impl Batch<'_> {
    /// Summed loss over `idx`; the summed gradients end up in `bufs[0]`.
    /// `bufs` holds one reusable accumulator per slice.
    fn gradient(&self, idx: &[usize], bufs: &mut [Grads]) -> Result<f64> {
        let slice = idx.len().div_ceil(SLICES).max(1);
        let losses = idx
            .par_chunks(slice)
            .zip(bufs.par_iter_mut())
            .map(|(part, grads)| {
                grads.zero();
                let mut loss = 0.0;
                for &i in part {
                    let mut rng = Rng::derived(self.seed, &[DROPOUT_STREAM, self.epoch as u64, i as u64]);
                    let (probs, trace) = self.params.forward(&self.inputs[i], self.train, &mut rng)?;
                    loss += cross_entropy(&probs, self.labels[i])?;
                    self.params.accumulate_backward(&trace, self.labels[i], 1.0, grads)?;
                }
                Ok(loss)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (first, rest) = bufs.split_first_mut().expect("at least one buffer");
        for g in &rest[..losses.len() - 1] {
            first.add_assign(g);
        }
        Ok(losses.iter().sum())
    }
}

fn slice_buffers(params: &ModelParams) -> Vec<Grads> {
    (0..SLICES).map(|_| Grads::zeros_like(params)).collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Classifier,
    pub curve: LearningCurve,
    /// Set when L-BFGS stopped before the epoch budget.
    pub lbfgs_status: Option<LbfgsStatus>,
}

/// Trains with `cfg` on `train`, recording train loss and test accuracy after
/// every pass. `table` overrides loading the configured embedding file.
pub fn train_run(
    cfg: &RunConfig,
    train: &Dataset,
    test: &Dataset,
    table: Option<Arc<EmbeddingTable>>,
) -> Result<TrainOutcome> {
    let test = if test.labels == train.labels {
        test.clone()
    } else {
        test.with_catalog(&train.labels)?
    };
    let mut encoder = Encoder::fit(cfg, train, table)?;
    let spec = cfg.arch_spec(encoder.input_dim(), train.num_classes());
    let mut params = init_params(&spec, cfg.seed)?;
    if let Some(t) = encoder.initial_table() {
        params = params.with_embedding(t)?;
    }
    let train_x = encoder.encode_all(train)?;
    let test_x = encoder.encode_all(&test)?;
    encoder.drop_table_if_fine_tuned();
    let train_y: Vec<usize> = train.examples.iter().map(|(l, _)| *l).collect();
    let test_y: Vec<usize> = test.examples.iter().map(|(l, _)| *l).collect();

    let start = Instant::now();
    let mut curve = LearningCurve::default();
    let record = |curve: &mut LearningCurve, iteration: usize, loss: f64, params: &ModelParams| -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        let acc = accuracy(params, &test_x, &test_y)?;
        log::info!("iteration {iteration}: train loss {loss:.6}, test accuracy {acc:.4}");
        curve.records.push(CurveRecord {
            iteration,
            train_loss: loss,
            test_accuracy: acc,
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(())
    };

    let n = train_x.len();
    let mut lbfgs_status = None;
    match cfg.optimizer {
        OptimizerKind::Adagrad | OptimizerKind::Sgd => {
            let mut adagrad = AdagradState::new(&params.tensors(), cfg.lr, cfg.decay);
            let mut steps = 0u64;
            let mut bufs = slice_buffers(&params);
            for epoch in 1..=cfg.epochs {
                let mut order: Vec<usize> = (0..n).collect();
                Rng::derived(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]).shuffle(&mut order);
                let mut total = 0.0;
                for idx in order.chunks(cfg.batch) {
                    let batch = Batch {
                        params: &params,
                        inputs: &train_x,
                        labels: &train_y,
                        seed: cfg.seed,
                        epoch,
                        train: true,
                    };
                    let loss = batch.gradient(idx, &mut bufs)?;
                    let grads = &mut bufs[0];
                    if !loss.is_finite() {
                        return Err(Error::Diverged { iteration: epoch });
                    }
                    total += loss;
                    grads.scale(1.0 / idx.len() as f64);
                    let mut slots = params.tensors_mut();
                    match cfg.optimizer {
                        OptimizerKind::Adagrad => adagrad.step(&mut slots, grads)?,
                        _ => {
                            // Same 1 / (1 + decay * step) schedule as Adagrad.
                            let rate = cfg.lr / (1.0 + cfg.decay * steps as f64);
                            sgd_step(&mut slots, grads, rate)?;
                        }
                    }
                    steps += 1;
                }
                record(&mut curve, epoch, total / n as f64, &params)?;
            }
        }
        OptimizerKind::Lbfgs => {
            // Full-batch objective without dropout, so it is deterministic.
            let all: Vec<usize> = (0..n).collect();
            let template = params.clone();
            let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
                let mut p = template.clone();
                unflatten(x, &mut p.tensors_mut());
                let batch = Batch {
                    params: &p,
                    inputs: &train_x,
                    labels: &train_y,
                    seed: cfg.seed,
                    epoch: 0,
                    train: false,
                };
                let mut bufs = slice_buffers(&p);
                let loss = batch.gradient(&all, &mut bufs)?;
                let scale = 1.0 / n as f64;
                Ok((loss * scale, bufs[0].0.iter().flat_map(|t| t.data().iter().map(|g| g * scale)).collect()))
            };
            let opts = LbfgsOptions {
                max_iter: cfg.epochs,
                tol: 1e-10,
                ..LbfgsOptions::default()
            };
            let x0 = flatten(&params.tensors());
            if !objective(&x0)?.0.is_finite() {
                return Err(Error::Diverged { iteration: 1 });
            }
            let mut scratch = params.clone();
            let mut failure = None;
            let report = lbfgs_minimize_with(objective, x0, &opts, |info| {
                unflatten(info.x, &mut scratch.tensors_mut());
                match record(&mut curve, info.iteration, info.f, &scratch) {
                    Ok(()) => ControlFlow::Continue(()),
                    Err(e) => {
                        failure = Some(e);
                        ControlFlow::Break(())
                    }
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            if report.status != LbfgsStatus::MaxIterations {
                log::info!("L-BFGS stopped after {} iterations: {:?}", report.iterations, report.status);
            }
            lbfgs_status = Some(report.status);
            unflatten(&report.x, &mut params.tensors_mut());
        }
    }
    Ok(TrainOutcome {
        model: Classifier { params, encoder },
        curve,
        lbfgs_status,
    })
}
