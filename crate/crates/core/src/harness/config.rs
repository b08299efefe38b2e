//! Run configuration and its flat `key = value` text form.
//!
//! Precedence, lowest first: built-in defaults, config file, command-line
//! flags. Later assignments overwrite earlier ones.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embeddings::OovPolicy;
use crate::error::{Error, Result};
use crate::models::{ArchKind, ArchSpec};

use super::data::Segmentation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// Text-format pre-trained vectors.
    Glove,
    /// Binary-format pre-trained vectors.
    Word2vec,
    /// Hashed one-hot rows.
    Onehot,
    /// Hashed bag-of-words count vector (FNN only).
    Counts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adagrad,
    Sgd,
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Uiuc,
    Tsv,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, $($text:literal => $var:expr),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($text => Ok($var),)+
                    _ => Err(Error::Config(format!(concat!("unknown ", $what, " `{}`"), s))),
                }
            }
        }

        impl $ty {
            pub fn name(self) -> &'static str {
                $(if self == $var { return $text; })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(Encoding, "encoding", "glove" => Encoding::Glove, "word2vec" => Encoding::Word2vec,
    "onehot" => Encoding::Onehot, "counts" => Encoding::Counts);
keyword_enum!(OptimizerKind, "optimizer", "adagrad" => OptimizerKind::Adagrad, "sgd" => OptimizerKind::Sgd,
    "lbfgs" => OptimizerKind::Lbfgs);
keyword_enum!(DataFormat, "data format", "uiuc" => DataFormat::Uiuc, "tsv" => DataFormat::Tsv);

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub arch: ArchKind,
    pub encoding: Encoding,
    pub embeddings: Option<PathBuf>,
    /// Width of hashed one-hot rows and count vectors.
    pub dim: usize,
    pub window: usize,
    pub filters: usize,
    /// CNN fully-connected width, RNN/LSTM state size, FNN hidden width
    /// (0 means no hidden layer). `None` picks the per-architecture default.
    pub hidden: Option<usize>,
    pub dropout: f64,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub decay: f64,
    pub batch: usize,
    pub epochs: usize,
    pub max_len: usize,
    pub seed: u64,
    pub split_ratio: f64,
    pub train: Option<PathBuf>,
    /// Without a test file the training file is split by `split_ratio`.
    pub test: Option<PathBuf>,
    pub format: DataFormat,
    pub segmentation: Segmentation,
    /// Frequency cutoff applied before hashing count vectors.
    pub min_count: usize,
    pub oov: OovPolicy,
    pub fine_tune: bool,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            arch: ArchKind::Cnn,
            encoding: Encoding::Glove,
            embeddings: None,
            dim: 1024,
            window: 3,
            filters: 256,
            hidden: None,
            dropout: 0.1,
            optimizer: OptimizerKind::Adagrad,
            lr: 1e-2,
            decay: 1e-3,
            batch: 128,
            epochs: 100,
            max_len: 20,
            seed: 1,
            split_ratio: 0.8,
            train: None,
            test: None,
            format: DataFormat::Uiuc,
            segmentation: Segmentation::Plain,
            min_count: 2,
            oov: OovPolicy::Zero,
            fine_tune: false,
            out: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{value}` for `{key}`"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

/// Splits `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_assignments(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected key = value, found `{line}`"),
            });
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Assigns one setting. Keys match the long command-line flags; `-` and
    /// `_` are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let k = key.as_str();
        match k {
            "arch" => self.arch = value.parse()?,
            "encoding" => self.encoding = value.parse()?,
            "embeddings" => self.embeddings = opt_path(value),
            "dim" => self.dim = parse_num(k, value)?,
            "window" => self.window = parse_num(k, value)?,
            "filters" => self.filters = parse_num(k, value)?,
            "hidden" => {
                self.hidden = match value {
                    "" | "auto" => None,
                    v => Some(parse_num(k, v)?),
                }
            }
            "dropout" => self.dropout = parse_num(k, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "lr" => self.lr = parse_num(k, value)?,
            "decay" => self.decay = parse_num(k, value)?,
            "batch" => self.batch = parse_num(k, value)?,
            "epochs" => self.epochs = parse_num(k, value)?,
            "max-len" => self.max_len = parse_num(k, value)?,
            "seed" => self.seed = parse_num(k, value)?,
            "split-ratio" => self.split_ratio = parse_num(k, value)?,
            "train" => self.train = opt_path(value),
            "test" => self.test = opt_path(value),
            "format" => self.format = value.parse()?,
            "segmentation" => {
                self.segmentation = match value {
                    "plain" => Segmentation::Plain,
                    "vietnamese" => Segmentation::Vietnamese,
                    _ => return Err(Error::Config(format!("unknown segmentation `{value}`"))),
                }
            }
            "min-count" => self.min_count = parse_num(k, value)?,
            "oov" => {
                self.oov = match value {
                    "zero" => OovPolicy::Zero,
                    "random-fixed" => OovPolicy::RandomFixed,
                    _ => return Err(Error::Config(format!("unknown oov policy `{value}`"))),
                }
            }
            "fine-tune" => self.fine_tune = parse_bool(k, value)?,
            "out" => self.out = opt_path(value),
            _ => return Err(Error::Config(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }

    pub fn apply(&mut self, assignments: &[(String, String)]) -> Result<()> {
        assignments.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply(&parse_assignments(text)?)?;
        Ok(cfg)
    }

    /// Every setting as `key = value` lines; [`RunConfig::from_text`] reads
    /// it back to an equal config.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut s = String::new();
        let mut put = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("write to String");
        put("arch", self.arch.name().into());
        put("encoding", self.encoding.name().into());
        put("embeddings", path(&self.embeddings));
        put("dim", self.dim.to_string());
        put("window", self.window.to_string());
        put("filters", self.filters.to_string());
        put("hidden", self.hidden.map_or("auto".into(), |h| h.to_string()));
        put("dropout", self.dropout.to_string());
        put("optimizer", self.optimizer.name().into());
        put("lr", self.lr.to_string());
        put("decay", self.decay.to_string());
        put("batch", self.batch.to_string());
        put("epochs", self.epochs.to_string());
        put("max-len", self.max_len.to_string());
        put("seed", self.seed.to_string());
        put("split-ratio", self.split_ratio.to_string());
        put("train", path(&self.train));
        put("test", path(&self.test));
        put("format", self.format.name().into());
        let seg = match self.segmentation {
            Segmentation::Plain => "plain",
            Segmentation::Vietnamese => "vietnamese",
        };
        put("segmentation", seg.into());
        put("min-count", self.min_count.to_string());
        let oov = match self.oov {
            OovPolicy::Zero => "zero",
            OovPolicy::RandomFixed => "random-fixed",
        };
        put("oov", oov.into());
        put("fine-tune", self.fine_tune.to_string());
        put("out", path(&self.out));
        s
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden.unwrap_or(match self.arch {
            ArchKind::Cnn => 128,
            _ => 256,
        })
    }

    fn uses_pretrained(&self) -> bool {
        matches!(self.encoding, Encoding::Glove | Encoding::Word2vec)
    }

    /// Checks ranges, file existence and encoding/architecture compatibility.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch == 0 {
            return bad("batch must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return bad(format!("decay must be non-negative, got {}", self.decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split-ratio must lie in (0, 1), got {}", self.split_ratio));
        }
        if self.min_count == 0 {
            return bad("min-count must be >= 1".into());
        }
        if self.max_len == 0 {
            return bad("max-len must be >= 1".into());
        }
        if matches!(self.encoding, Encoding::Onehot | Encoding::Counts) && self.dim < 2 {
            return bad("dim must be >= 2".into());
        }
        if self.arch != ArchKind::Fnn && self.hidden_size() == 0 {
            return bad("hidden must be >= 1".into());
        }
        if self.arch == ArchKind::Cnn {
            if self.window == 0 || self.filters == 0 {
                return bad("window and filters must be >= 1".into());
            }
            if self.max_len < self.window {
                return bad(format!("max-len {} is shorter than window {}", self.max_len, self.window));
            }
        }
        match (self.arch, self.encoding) {
            (ArchKind::Fnn, Encoding::Counts) => {}
            (ArchKind::Fnn, e) => return bad(format!("fnn needs counts encoding, not {}", e.name())),
            (a, Encoding::Counts) => return bad(format!("{} needs a sequence encoding, not counts", a.name())),
            _ => {}
        }
        if self.fine_tune && !self.uses_pretrained() {
            return bad("fine-tune needs glove or word2vec embeddings".into());
        }
        if self.uses_pretrained() && self.embeddings.is_none() {
            return bad(format!("{} encoding needs --embeddings", self.encoding.name()));
        }
        for p in [&self.train, &self.test, &self.embeddings].into_iter().flatten() {
            if !p.is_file() {
                return bad(format!("file not found: {}", p.display()));
            }
        }
        if self.train.is_none() {
            return bad("no training data given".into());
        }
        Ok(())
    }

    /// Architecture for `input_dim`-wide rows (or vectors) and `classes` labels.
    pub fn arch_spec(&self, input_dim: usize, classes: usize) -> ArchSpec {
        let h = self.hidden_size();
        match self.arch {
            ArchKind::Fnn => ArchSpec::Fnn {
                input: input_dim,
                hidden: if h == 0 { vec![] } else { vec![h] },
                classes,
            },
            ArchKind::Cnn => ArchSpec::Cnn {
                embed_dim: input_dim,
                window: self.window,
                filters: self.filters,
                hidden: h,
                classes,
                dropout: self.dropout,
            },
            ArchKind::Rnn => ArchSpec::Rnn {
                embed_dim: input_dim,
                hidden: h,
                classes,
                dropout: self.dropout,
            },
            ArchKind::Lstm => ArchSpec::Lstm {
                embed_dim: input_dim,
                hidden: h,
                classes,
                dropout: self.dropout,
            },
        }
    }
}
