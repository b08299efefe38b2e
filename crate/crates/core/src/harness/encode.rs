//! Turns token sequences into model inputs according to a run's encoding.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embeddings::{load_binary_vectors, load_text_vectors, EmbeddingTable, OovPolicy};
use crate::error::{Error, Result};
use crate::models::{ArchKind, Input, SeqInput};
use crate::tensor::Tensor;
use crate::text::{build_vocabulary, hash_index, pad_or_truncate, TokenSeq, Vocabulary, PAD};

use super::config::{DataFormat, Encoding, RunConfig};
use super::data::{Dataset, Segmentation};

/// Everything needed to encode new sentences for a trained model. It is
/// stored as JSON in checkpoint metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Encoder {
    pub labels: Vec<String>,
    pub arch: ArchKind,
    pub encoding: Encoding,
    /// Hashed width, or the embedding dimension.
    pub dim: usize,
    pub max_len: usize,
    pub format: DataFormat,
    pub segmentation: Segmentation,
    /// Count-vector cutoff vocabulary, or the fine-tuned table's rows.
    pub vocab: Option<Vocabulary>,
    pub embeddings: Option<PathBuf>,
    pub oov: OovPolicy,
    pub oov_seed: u64,
    pub fine_tune: bool,
    #[serde(skip)]
    table: Option<Arc<EmbeddingTable>>,
}

pub(crate) fn load_table(encoding: Encoding, path: &std::path::Path) -> Result<EmbeddingTable> {
    match encoding {
        Encoding::Word2vec => load_binary_vectors(path),
        _ => load_text_vectors(path, None),
    }
}

impl Encoder {
    /// Builds the encoder from training data. `table` overrides loading the
    /// configured embedding file.
    pub fn fit(cfg: &RunConfig, train: &Dataset, table: Option<Arc<EmbeddingTable>>) -> Result<Self> {
        let mut enc = Encoder {
            labels: train.labels.clone(),
            arch: cfg.arch,
            encoding: cfg.encoding,
            dim: cfg.dim,
            max_len: cfg.max_len,
            format: cfg.format,
            segmentation: cfg.segmentation,
            vocab: None,
            embeddings: cfg.embeddings.clone(),
            oov: cfg.oov,
            oov_seed: cfg.seed,
            fine_tune: cfg.fine_tune,
            table: None,
        };
        match cfg.encoding {
            Encoding::Counts => {
                enc.vocab = Some(build_vocabulary(train.examples.iter().map(|(_, t)| t), cfg.min_count)?);
            }
            Encoding::Onehot => {}
            Encoding::Glove | Encoding::Word2vec => {
                let table = match table {
                    Some(t) => t,
                    None => {
                        let path = cfg
                            .embeddings
                            .as_ref()
                            .ok_or_else(|| Error::Config("no embeddings file".into()))?;
                        Arc::new(load_table(cfg.encoding, path)?)
                    }
                };
                enc.dim = table.dim();
                enc.table = Some(Arc::new((*table).clone().with_oov_policy(cfg.oov, cfg.seed)));
                if cfg.fine_tune {
                    enc.vocab = Some(build_vocabulary(train.examples.iter().map(|(_, t)| t), 1)?);
                }
            }
        }
        Ok(enc)
    }

    /// Restores an encoder from checkpoint metadata, reloading static
    /// embeddings from their recorded path unless `table` is given.
    pub fn from_json(meta: &str, table: Option<Arc<EmbeddingTable>>) -> Result<Self> {
        let mut enc: Encoder =
            serde_json::from_str(meta).map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))?;
        if let Some(v) = enc.vocab.as_mut() {
            v.reindex();
        }
        if matches!(enc.encoding, Encoding::Glove | Encoding::Word2vec) && !enc.fine_tune {
            let table = match table {
                Some(t) => t,
                None => {
                    let path = enc
                        .embeddings
                        .as_ref()
                        .ok_or_else(|| Error::Checkpoint("metadata lacks the embeddings path".into()))?;
                    Arc::new(load_table(enc.encoding, path)?)
                }
            };
            enc.table = Some(Arc::new((*table).clone().with_oov_policy(enc.oov, enc.oov_seed)));
        }
        Ok(enc)
    }

    /// The encoding recorded in checkpoint metadata.
    pub fn peek_encoding(meta: &str) -> Result<Encoding> {
        #[derive(Deserialize)]
        struct Peek {
            encoding: Encoding,
        }
        serde_json::from_str::<Peek>(meta)
            .map(|p| p.encoding)
            .map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("encoder metadata serializes")
    }

    /// Width of one input row (sequence models) or of the input vector (FNN).
    pub fn input_dim(&self) -> usize {
        self.dim
    }

    /// Initial lookup table for fine-tuning: one row per vocabulary entry,
    /// filled from the pre-trained vectors.
    pub fn initial_table(&self) -> Option<Tensor> {
        if !self.fine_tune {
            return None;
        }
        let (vocab, table) = (self.vocab.as_ref()?, self.table.as_ref()?);
        let mut t = Tensor::zeros(&[vocab.len(), self.dim]);
        for i in 1..vocab.len() {
            table.resolve_into(vocab.token(i), t.row_mut(i));
        }
        Some(t)
    }

    /// Static embeddings are not needed after a fine-tuned model is built.
    pub(crate) fn drop_table_if_fine_tuned(&mut self) {
        if self.fine_tune {
            self.table = None;
        }
    }

    fn shape(&self, tokens: &TokenSeq) -> Result<TokenSeq> {
        match self.arch {
            ArchKind::Cnn => Ok(pad_or_truncate(tokens, self.max_len)),
            _ if tokens.len() > self.max_len => TokenSeq::new(tokens.tokens()[..self.max_len].to_vec()),
            _ => Ok(tokens.clone()),
        }
    }

    pub fn encode(&self, tokens: &TokenSeq) -> Result<Input> {
        match self.encoding {
            Encoding::Counts => {
                let vocab = self.vocab.as_ref().expect("counts encoder has a vocabulary");
                let mut v = vec![0.0; self.dim];
                for t in tokens.iter().filter(|t| vocab.contains(t)) {
                    v[hash_index(t, self.dim)] += 1.0;
                }
                Ok(Input::Vector(Tensor::vector(v)))
            }
            Encoding::Onehot => {
                let seq = self.shape(tokens)?;
                let ids = seq.iter().map(|t| (t != PAD).then(|| hash_index(t, self.dim))).collect();
                Ok(Input::Sequence(SeqInput::OneHot { ids, dim: self.dim }))
            }
            Encoding::Glove | Encoding::Word2vec if self.fine_tune => {
                let vocab = self.vocab.as_ref().expect("fine-tuned encoder has a vocabulary");
                let seq = self.shape(tokens)?;
                Ok(Input::Sequence(SeqInput::Indexed(seq.iter().map(|t| vocab.index_of(t)).collect())))
            }
            Encoding::Glove | Encoding::Word2vec => {
                let table = self.table.as_ref().expect("static encoder has a table");
                Ok(Input::Sequence(SeqInput::Dense(table.lookup_matrix(&self.shape(tokens)?))))
            }
        }
    }

    pub fn encode_all(&self, data: &Dataset) -> Result<Vec<Input>> {
        use rayon::prelude::*;
        data.examples.par_iter().map(|(_, t)| self.encode(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> Dataset {
        let ex = [("a", "x y x z"), ("b", "y q"), ("a", "x")]
            .iter()
            .map(|(l, s)| (usize::from(*l == "b"), crate::text::tokenize(s).unwrap()))
            .collect();
        Dataset::new(ex, vec!["a".into(), "b".into()], "t").unwrap()
    }

    #[test]
    fn counts_apply_cutoff() {
        let cfg = RunConfig {
            arch: ArchKind::Fnn,
            encoding: Encoding::Counts,
            dim: 64,
            ..RunConfig::default()
        };
        let enc = Encoder::fit(&cfg, &data(), None).unwrap();
        let Input::Vector(v) = enc.encode(&crate::text::tokenize("x x z q y").unwrap()).unwrap() else {
            panic!()
        };
        // x (3 occurrences) and y (2) survive the cutoff of 2; z and q do not.
        assert_eq!(v.data().iter().sum::<f64>(), 3.0);
        assert_eq!(v.data()[hash_index("x", 64)], 2.0);
    }

    #[test]
    fn onehot_shapes() {
        let mut cfg = RunConfig {
            encoding: Encoding::Onehot,
            dim: 32,
            max_len: 5,
            ..RunConfig::default()
        };
        let enc = Encoder::fit(&cfg, &data(), None).unwrap();
        let toks = crate::text::tokenize("a b c d e f g").unwrap();
        let Input::Sequence(SeqInput::OneHot { ids, .. }) = enc.encode(&crate::text::tokenize("a b").unwrap()).unwrap()
        else {
            panic!()
        };
        assert_eq!(ids.len(), 5);
        assert_eq!(ids[2..], [None, None, None]);
        cfg.arch = ArchKind::Rnn;
        let enc = Encoder::fit(&cfg, &data(), None).unwrap();
        let Input::Sequence(SeqInput::OneHot { ids, .. }) = enc.encode(&toks).unwrap() else { panic!() };
        assert_eq!(ids.len(), 5);
        let Input::Sequence(SeqInput::OneHot { ids, .. }) = enc.encode(&crate::text::tokenize("a b").unwrap()).unwrap()
        else {
            panic!()
        };
        assert_eq!(ids.len(), 2);
    }

    #[test]
    fn static_and_fine_tuned_tables() {
        let mut table = EmbeddingTable::new(2).unwrap();
        table.insert("x", &[1.0, 2.0]).unwrap();
        table.insert("y", &[3.0, 4.0]).unwrap();
        let table = Arc::new(table);
        let mut cfg = RunConfig {
            encoding: Encoding::Glove,
            max_len: 4,
            ..RunConfig::default()
        };
        let enc = Encoder::fit(&cfg, &data(), Some(table.clone())).unwrap();
        let Input::Sequence(SeqInput::Dense(m)) = enc.encode(&crate::text::tokenize("y w").unwrap()).unwrap() else {
            panic!()
        };
        assert_eq!(m.data(), &[3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        cfg.fine_tune = true;
        let enc = Encoder::fit(&cfg, &data(), Some(table.clone())).unwrap();
        let init = enc.initial_table().unwrap();
        let vocab = enc.vocab.as_ref().unwrap();
        assert_eq!(init.row(vocab.index_of("y")), &[3.0, 4.0]);
        assert_eq!(init.row(0), &[0.0, 0.0]);
        let Input::Sequence(SeqInput::Indexed(ids)) = enc.encode(&crate::text::tokenize("x unseen").unwrap()).unwrap()
        else {
            panic!()
        };
        assert_eq!(ids, vec![vocab.index_of("x"), Vocabulary::UNK_INDEX, 0, 0]);

        let back = Encoder::from_json(&enc.to_json(), None).unwrap();
        assert_eq!(back.vocab.as_ref().unwrap().index_of("x"), vocab.index_of("x"));
    }
}
