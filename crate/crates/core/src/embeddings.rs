//! Pre-trained word vectors: text (GloVe-style) and binary (word2vec-style)
//! loaders, and token-to-matrix resolution.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, ErrorKind as IoErrorKind, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};
use crate::text::{hash_index, murmur3_32, TokenSeq, PAD};

/// What [`EmbeddingTable::lookup_matrix`] does with tokens missing from the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OovPolicy {
    #[default]
    Zero,
    /// A vector drawn once per unseen token from uniform(-0.25, 0.25), keyed by
    /// the table's seed and the token bytes.
    RandomFixed,
}

#[derive(Debug)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
    oov_policy: OovPolicy,
    oov_seed: u64,
    oov_cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl Clone for EmbeddingTable {
    fn clone(&self) -> Self {
        EmbeddingTable {
            dim: self.dim,
            tokens: self.tokens.clone(),
            index: self.index.clone(),
            vectors: self.vectors.clone(),
            oov_policy: self.oov_policy,
            oov_seed: self.oov_seed,
            oov_cache: Mutex::new(self.oov_cache.lock().expect("oov cache").clone()),
        }
    }
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Param("embedding dimension must be >= 1".into()));
        }
        Ok(EmbeddingTable {
            dim,
            tokens: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            oov_policy: OovPolicy::Zero,
            oov_seed: 0,
            oov_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Adds an entry; returns `false` (and keeps the old vector) for duplicates.
    pub fn insert(&mut self, token: &str, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::shape("EmbeddingTable::insert", &[self.dim], &[vector.len()]));
        }
        if self.index.contains_key(token) {
            return Ok(false);
        }
        self.index.insert(token.to_string(), self.tokens.len());
        self.tokens.push(token.to_string());
        self.vectors.extend_from_slice(vector);
        Ok(true)
    }

    pub fn with_oov_policy(mut self, policy: OovPolicy, seed: u64) -> Self {
        self.oov_policy = policy;
        self.oov_seed = seed;
        self.oov_cache.lock().expect("oov cache").clear();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov_policy
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.tokens
            .iter()
            .zip(self.vectors.chunks_exact(self.dim))
            .map(|(t, v)| (t.as_str(), v))
    }

    /// Writes `token`'s vector (or its OOV substitute) into `out`.
    pub fn resolve_into(&self, token: &str, out: &mut [f64]) {
        if token == PAD {
            out.fill(0.0);
        } else if let Some(v) = self.get(token) {
            out.copy_from_slice(v);
        } else {
            match self.oov_policy {
                OovPolicy::Zero => out.fill(0.0),
                OovPolicy::RandomFixed => {
                    let mut cache = self.oov_cache.lock().expect("oov cache");
                    let v = cache.entry(token.to_string()).or_insert_with(|| {
                        let key = murmur3_32(token.as_bytes(), 0x5eed) as u64;
                        let mut rng = Rng::derived(self.oov_seed, &[key, token.len() as u64]);
                        (0..self.dim).map(|_| rng.uniform(-0.25, 0.25)).collect()
                    });
                    out.copy_from_slice(v);
                }
            }
        }
    }

    /// `n x d` matrix whose row `i` embeds token `i`; padding rows are zero.
    pub fn lookup_matrix(&self, tokens: &TokenSeq) -> Tensor {
        let mut m = Tensor::zeros(&[tokens.len(), self.dim]);
        for (i, tok) in tokens.iter().enumerate() {
            self.resolve_into(tok, m.row_mut(i));
        }
        m
    }
}

/// `n x dim` one-hot rows at each token's hashed index; padding rows are zero.
pub fn onehot_matrix(tokens: &TokenSeq, dim: usize) -> Tensor {
    let mut m = Tensor::zeros(&[tokens.len(), dim]);
    for (i, tok) in tokens.iter().enumerate() {
        if tok != PAD {
            m.row_mut(i)[hash_index(tok, dim)] = 1.0;
        }
    }
    m
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Loads whitespace-separated `token v1 .. vd` lines. A leading `count dim`
/// header line is skipped when present.
pub fn load_text_vectors(path: impl AsRef<Path>, expect_dim: Option<usize>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    read_text_vectors(open(path)?, expect_dim).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        e => e,
    })
}

pub fn read_text_vectors<R: BufRead>(reader: R, expect_dim: Option<usize>) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    let mut values = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.map_err(|e| Error::io("<text vectors>", e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let rest: Vec<&str> = fields.collect();
        if table.is_none() && line_no == 1 && rest.len() == 1 {
            if let (Ok(_), Ok(dim)) = (token.parse::<usize>(), rest[0].parse::<usize>()) {
                if let Some(expect) = expect_dim.filter(|&e| e != dim) {
                    return Err(Error::Header(format!("dimension {dim}, expected {expect}")));
                }
                table = Some(EmbeddingTable::new(dim)?);
                continue;
            }
        }
        values.clear();
        for field in &rest {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("cannot parse `{field}` as a number"),
            })?;
            values.push(v);
        }
        let table = match &mut table {
            Some(t) => t,
            None => {
                let dim = values.len();
                if let Some(expect) = expect_dim.filter(|&e| e != dim) {
                    return Err(Error::MalformedLine {
                        line: line_no,
                        msg: format!("{dim} values, expected {expect}"),
                    });
                }
                table.insert(EmbeddingTable::new(dim).map_err(|_| Error::MalformedLine {
                    line: line_no,
                    msg: "token without values".into(),
                })?)
            }
        };
        if values.len() != table.dim {
            return Err(Error::MalformedLine {
                line: line_no,
                msg: format!("{} values, expected {}", values.len(), table.dim),
            });
        }
        table.insert(token, &values)?;
    }
    table.ok_or(Error::EmptyDataset)
}

pub fn write_text_vectors(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    for (token, v) in table.iter() {
        write!(w, "{token}").map_err(io)?;
        for x in v {
            write!(w, " {x}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Loads the binary format: ASCII header `count dim\n`, then per record the
/// token bytes, one space, and `dim` little-endian `f32` values, optionally
/// followed by a newline.
pub fn load_binary_vectors(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    read_binary_vectors(open(path)?).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        e => e,
    })
}

pub fn read_binary_vectors<R: BufRead>(mut reader: R) -> Result<EmbeddingTable> {
    let mut header = Vec::new();
    reader
        .read_until(b'\n', &mut header)
        .map_err(|e| Error::io("<binary vectors>", e))?;
    let header = String::from_utf8_lossy(&header);
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Header(header.trim().to_string()))?;
    let [count, dim] = nums[..] else {
        return Err(Error::Header(header.trim().to_string()));
    };
    let mut table = EmbeddingTable::new(dim).map_err(|_| Error::Header("dimension 0".into()))?;

    let mut raw = vec![0u8; dim * 4];
    let mut values = vec![0.0; dim];
    let mut token = Vec::new();
    for record in 0..count {
        token.clear();
        // Skip the optional newline that terminates the previous record.
        loop {
            let buf = reader.fill_buf().map_err(|e| Error::io("<binary vectors>", e))?;
            match buf.first() {
                None => return Err(Error::UnexpectedEof { record }),
                Some(b'\n') => reader.consume(1),
                Some(_) => break,
            }
        }
        reader
            .read_until(b' ', &mut token)
            .map_err(|e| Error::io("<binary vectors>", e))?;
        if token.pop() != Some(b' ') {
            return Err(Error::UnexpectedEof { record });
        }
        reader.read_exact(&mut raw).map_err(|e| match e.kind() {
            IoErrorKind::UnexpectedEof => Error::UnexpectedEof { record },
            _ => Error::io("<binary vectors>", e),
        })?;
        for (v, b) in values.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
        }
        table.insert(&String::from_utf8_lossy(&token), &values)?;
    }
    Ok(table)
}

pub fn write_binary_vectors(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(w, "{} {}", table.len(), table.dim()).map_err(io)?;
    for (token, v) in table.iter() {
        w.write_all(token.as_bytes()).map_err(io)?;
        w.write_all(b" ").map_err(io)?;
        for &x in v {
            w.write_all(&(x as f32).to_le_bytes()).map_err(io)?;
        }
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn seq(tokens: &[&str]) -> TokenSeq {
        TokenSeq::from_strs(tokens).unwrap()
    }

    #[test]
    fn one_line_text() {
        let t = read_text_vectors(Cursor::new("a 1.0 2.0\n"), None).unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.get("a"), Some(&[1.0, 2.0][..]));
    }

    #[test]
    fn ragged_text_reports_line() {
        let err = read_text_vectors(Cursor::new("a 1 2\nb 1 2\nc 1\n"), None).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 3, .. }), "{err}");
        let err = read_text_vectors(Cursor::new("a 1 2\nb 1 x\n"), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = read_text_vectors(Cursor::new("a 1 2\n"), Some(3)).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn text_fixture_round_trip() {
        let src = "the 0.5 -1.25 3\nof 1e-3 0 2.5\nthe 9 9 9\nand -0.75 0.125 1\n";
        let t = read_text_vectors(Cursor::new(src), Some(3)).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.get("the"), Some(&[0.5, -1.25, 3.0][..]));
        assert_eq!(t.get("of"), Some(&[0.001, 0.0, 2.5][..]));
        let m = t.lookup_matrix(&seq(&["and", "of"]));
        assert_eq!(m.row(0), &[-0.75, 0.125, 1.0]);
        assert_eq!(m.row(1), &[0.001, 0.0, 2.5]);
    }

    #[test]
    fn text_header_is_skipped() {
        let t = read_text_vectors(Cursor::new("2 2\na 1 2\nb 3 4\n"), None).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 2);
    }

    fn record(token: &str, values: &[f32]) -> Vec<u8> {
        let mut out = token.as_bytes().to_vec();
        out.push(b' ');
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    #[test]
    fn binary_single_record() {
        let mut bytes = b"1 2\n".to_vec();
        bytes.extend(record("hi", &[0.5, -2.0]));
        let t = read_binary_vectors(Cursor::new(bytes)).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.dim(), 2);
        assert_eq!(t.get("hi"), Some(&[0.5, -2.0][..]));
    }

    #[test]
    fn binary_optional_newlines() {
        let mut bytes = b"2 1\n".to_vec();
        bytes.extend(record("a", &[1.0]));
        bytes.push(b'\n');
        bytes.extend(record("b", &[2.0]));
        let t = read_binary_vectors(Cursor::new(bytes)).unwrap();
        assert_eq!(t.get("b"), Some(&[2.0][..]));
    }

    #[test]
    fn binary_degenerate_and_errors() {
        let t = read_binary_vectors(Cursor::new(b"0 7\n".to_vec())).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.dim(), 7);

        let mut bytes = b"2 2\n".to_vec();
        bytes.extend(record("a", &[1.0, 2.0]));
        bytes.extend(&record("b", &[1.0, 2.0])[..5]);
        let err = read_binary_vectors(Cursor::new(bytes)).unwrap_err();
        assert!(matches!(err, Error::UnexpectedEof { record: 1 }), "{err}");

        let err = read_binary_vectors(Cursor::new(b"2 2\n".to_vec())).unwrap_err();
        assert!(matches!(err, Error::UnexpectedEof { record: 0 }));

        assert!(matches!(read_binary_vectors(Cursor::new(b"x 2\n".to_vec())), Err(Error::Header(_))));
        assert!(matches!(read_binary_vectors(Cursor::new(b"1 2 3\n".to_vec())), Err(Error::Header(_))));
    }

    #[test]
    fn text_and_binary_agree() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = EmbeddingTable::new(3).unwrap();
        t.insert("x", &[0.1, 0.2, 0.3]).unwrap();
        t.insert("y", &[-1.5, 2.25, 1e-4]).unwrap();
        write_text_vectors(&t, dir.path().join("v.txt")).unwrap();
        write_binary_vectors(&t, dir.path().join("v.bin")).unwrap();
        let a = load_text_vectors(dir.path().join("v.txt"), Some(3)).unwrap();
        let b = load_binary_vectors(dir.path().join("v.bin")).unwrap();
        for tok in ["x", "y"] {
            for (u, v) in a.get(tok).unwrap().iter().zip(b.get(tok).unwrap()) {
                assert!((u - v).abs() <= f32::EPSILON as f64 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn lookup_policies() {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("a", &[1.0, 2.0]).unwrap();
        let m = t.lookup_matrix(&seq(&["zz", "qq"]));
        assert_eq!(m, Tensor::zeros(&[2, 2]));

        let t = t.with_oov_policy(OovPolicy::RandomFixed, 11);
        let s = seq(&["a", "zz", PAD, "zz", "qq"]);
        let m1 = t.lookup_matrix(&s);
        let m2 = t.lookup_matrix(&s);
        assert_eq!(m1, m2);
        assert_eq!(m1.shape(), &[5, 2]);
        assert_eq!(m1.row(0), &[1.0, 2.0]);
        assert_eq!(m1.row(2), &[0.0, 0.0]);
        assert_eq!(m1.row(1), m1.row(3));
        assert_ne!(m1.row(1), m1.row(4));
        assert!(m1.row(1).iter().all(|v| v.abs() <= 0.25));

        // A fresh table with the same seed draws the same OOV vectors.
        let mut fresh = EmbeddingTable::new(2).unwrap();
        fresh.insert("a", &[1.0, 2.0]).unwrap();
        let fresh = fresh.with_oov_policy(OovPolicy::RandomFixed, 11);
        assert_eq!(fresh.lookup_matrix(&seq(&["qq", "zz"])).row(1), m1.row(1));
    }

    #[test]
    fn onehot_rows() {
        let m = onehot_matrix(&seq(&["what", PAD]), 16);
        assert_eq!(m.row(0).iter().sum::<f64>(), 1.0);
        assert_eq!(m.row(0)[hash_index("what", 16)], 1.0);
        assert_eq!(m.row(1).iter().sum::<f64>(), 0.0);

        // mmh3: "a" -> 1009084850 (even), "c" -> 3778205279 (odd), "b" -> 2514386435 (odd).
        let m = onehot_matrix(&seq(&["b", "c", "a"]), 2);
        assert_eq!(m.row(0), m.row(1));
        assert_ne!(m.row(0), m.row(2));
    }
}
