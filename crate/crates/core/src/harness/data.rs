//! Labeled corpora: UIUC question files, TSV files, splitting, and a seeded
//! synthetic corpus generator.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::tensor::Rng;
use crate::text::{normalize_vietnamese, tokenize, TokenSeq};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<(usize, TokenSeq)>,
    pub labels: Vec<String>,
    /// Where the examples came from, e.g. a file path or `synthetic(seed=3)`.
    pub provenance: String,
}

impl Dataset {
    pub fn new(examples: Vec<(usize, TokenSeq)>, labels: Vec<String>, provenance: impl Into<String>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if labels.len() < 2 {
            return Err(Error::Config(format!("need at least 2 labels, found {}", labels.len())));
        }
        if let Some(&(label, _)) = examples.iter().find(|(l, _)| *l >= labels.len()) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: labels.len(),
            });
        }
        Ok(Dataset {
            examples,
            labels,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// Distinct `COARSE` prefixes of `COARSE:fine` labels, in catalog order.
    pub fn coarse_labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for l in &self.labels {
            let c = l.split(':').next().unwrap_or(l);
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    /// Re-expresses the labels against `catalog`, which must contain every
    /// label used by an example.
    pub fn with_catalog(&self, catalog: &[String]) -> Result<Dataset> {
        let map: HashMap<&str, usize> = catalog.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let examples = self
            .examples
            .iter()
            .map(|(l, toks)| {
                let name = &self.labels[*l];
                map.get(name.as_str())
                    .map(|&i| (i, toks.clone()))
                    .ok_or_else(|| Error::UnknownLabel(name.clone()))
            })
            .collect::<Result<_>>()?;
        Dataset::new(examples, catalog.to_vec(), self.provenance.clone())
    }
}

/// Reads a text file, falling back to Latin-1 when it is not valid UTF-8.
pub(crate) fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => e.into_bytes().iter().map(|&b| b as char).collect(),
    })
}

struct Catalog {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Catalog {
    fn new() -> Self {
        Catalog {
            labels: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn intern(&mut self, label: &str) -> usize {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), self.labels.len() - 1);
        self.labels.len() - 1
    }
}

fn parse_uiuc(text: &str) -> Result<Vec<(String, TokenSeq)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (label, rest) = line.split_once(' ').unwrap_or((line, ""));
        if label.matches(':').count() != 1 || label.starts_with(':') || label.ends_with(':') {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected a COARSE:fine label, found `{label}`"),
            });
        }
        let tokens = tokenize(rest).map_err(|_| Error::Parse {
            line: line_no,
            msg: "question text is empty".into(),
        })?;
        out.push((label.to_string(), tokens));
    }
    Ok(out)
}

/// Loads the UIUC question files. Labels are the full `COARSE:fine` strings,
/// cataloged in order of first appearance in the training file.
pub fn load_uiuc(train_path: impl AsRef<Path>, test_path: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let (train_path, test_path) = (train_path.as_ref(), test_path.as_ref());
    let train_rows = parse_uiuc(&read_text(train_path)?)?;
    let test_rows = parse_uiuc(&read_text(test_path)?)?;
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut catalog = Catalog::new();
    let train: Vec<_> = train_rows.into_iter().map(|(l, t)| (catalog.intern(&l), t)).collect();
    let test = test_rows
        .into_iter()
        .map(|(l, t)| {
            catalog
                .index
                .get(&l)
                .map(|&i| (i, t))
                .ok_or(Error::UnknownLabel(l))
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = catalog.labels;
    Ok((
        Dataset::new(train, labels.clone(), train_path.display().to_string())?,
        Dataset::new(test, labels, test_path.display().to_string())?,
    ))
}

/// How the sentence column of a TSV file is turned into tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Segmentation {
    /// The sentence is tokenized as running text.
    #[default]
    Plain,
    /// Every further TAB-separated field is one pre-segmented word whose
    /// syllables are joined with underscores.
    Vietnamese,
}

/// Tokens of TAB-separated pre-segmented words, syllables joined by `_`.
pub(crate) fn segment_words(text: &str) -> Result<TokenSeq> {
    let words = text
        .split('\t')
        .map(|w| w.trim().to_lowercase())
        .filter(|w| !w.is_empty())
        .collect();
    Ok(normalize_vietnamese(&TokenSeq::new(words)?))
}

/// Parses `label<TAB>sentence` lines. Labels are indexed in order of first
/// appearance.
pub fn parse_tsv(text: &str, seg: Segmentation, provenance: &str) -> Result<Dataset> {
    let mut catalog = Catalog::new();
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let Some((label, rest)) = line.split_once('\t') else {
            return Err(Error::Parse {
                line: line_no,
                msg: "missing TAB between label and sentence".into(),
            });
        };
        let label = label.trim();
        if label.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "empty label".into(),
            });
        }
        let empty = |_| Error::Parse {
            line: line_no,
            msg: "sentence is empty".into(),
        };
        let tokens = match seg {
            Segmentation::Plain => tokenize(rest).map_err(empty)?,
            Segmentation::Vietnamese => segment_words(rest).map_err(empty)?,
        };
        examples.push((catalog.intern(label), tokens));
    }
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(examples, catalog.labels, provenance)
}

pub fn load_tsv(path: impl AsRef<Path>) -> Result<Dataset> {
    load_tsv_with(path, Segmentation::Plain)
}

pub fn load_tsv_with(path: impl AsRef<Path>, seg: Segmentation) -> Result<Dataset> {
    let path = path.as_ref();
    parse_tsv(&read_text(path)?, seg, &path.display().to_string())
}

/// Writes `label<TAB>tokens joined by spaces`, one example per line.
pub fn write_tsv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (label, toks) in &data.examples {
        let words: Vec<&str> = toks.iter().collect();
        writeln!(out, "{}\t{}", data.labels[*label], words.join(" ")).expect("write to Vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Outcome of [`split`] beyond the two parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitStatus {
    Complete,
    /// These labels have no training example.
    MissingLabels(Vec<String>),
}

/// Seeded shuffle followed by a prefix split: the first `round(ratio * n)`
/// examples train. Both parts keep the full label catalog.
pub fn split(data: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset, SplitStatus)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut examples = data.examples.clone();
    Rng::new(seed).shuffle(&mut examples);
    let n_train = (ratio * examples.len() as f64).round() as usize;
    if n_train == 0 || n_train == examples.len() {
        return Err(Error::EmptyDataset);
    }
    let test = examples.split_off(n_train);
    let mut seen = vec![false; data.labels.len()];
    examples.iter().for_each(|(l, _)| seen[*l] = true);
    let missing: Vec<String> = data
        .labels
        .iter()
        .zip(&seen)
        .filter(|(_, &s)| !s)
        .map(|(l, _)| l.clone())
        .collect();
    let status = if missing.is_empty() {
        SplitStatus::Complete
    } else {
        log::warn!("labels absent from the training split: {}", missing.join(", "));
        SplitStatus::MissingLabels(missing)
    };
    Ok((
        Dataset::new(examples, data.labels.clone(), format!("{} (train split)", data.provenance))?,
        Dataset::new(test, data.labels.clone(), format!("{} (test split)", data.provenance))?,
        status,
    ))
}

/// Parameters of the synthetic keyword corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub sentences: usize,
    /// Keywords owned by each class.
    pub keywords_per_class: usize,
    /// Shared filler words.
    pub fillers: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Fraction of sentences whose class is carried only by the order of two
    /// adjacent marker words, which a bag of words cannot see.
    pub order_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 5,
            sentences: 20_000,
            keywords_per_class: 12,
            fillers: 300,
            min_len: 6,
            max_len: 16,
            order_fraction: 0.15,
            seed: 7,
        }
    }
}

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Pronounceable pseudo-word for `n`; distinct `n` give distinct words.
fn pseudo_word(prefix: &str, mut n: usize) -> String {
    let mut w = prefix.to_string();
    loop {
        w.push_str(ONSETS[n % ONSETS.len()]);
        n /= ONSETS.len();
        w.push_str(VOWELS[n % VOWELS.len()]);
        n /= VOWELS.len();
        if n == 0 {
            break;
        }
        n -= 1;
    }
    w
}

pub(crate) struct SyntheticLexicon {
    pub keywords: Vec<Vec<String>>,
    pub fillers: Vec<String>,
    pub markers: Vec<String>,
}

fn lexicon(spec: &SyntheticSpec) -> SyntheticLexicon {
    SyntheticLexicon {
        keywords: (0..spec.classes)
            .map(|c| {
                (0..spec.keywords_per_class)
                    .map(|j| pseudo_word("k", c * spec.keywords_per_class + j))
                    .collect()
            })
            .collect(),
        fillers: (0..spec.fillers).map(|j| pseudo_word("", j)).collect(),
        markers: (0..spec.classes).map(|j| pseudo_word("z", j)).collect(),
    }
}

/// Generates a seeded corpus over classes `c0..c{K-1}`.
///
/// A keyword sentence mixes fillers with one to three keywords of its class.
/// An order sentence holds no keywords; it contains markers `x` then `y`
/// side by side and belongs to class `(2x + y) mod K`.
pub fn synthetic_corpus(spec: &SyntheticSpec) -> Result<Dataset> {
    if !(2..=5).contains(&spec.classes) {
        return Err(Error::Config(format!("synthetic corpus supports 2 to 5 classes, got {}", spec.classes)));
    }
    if spec.min_len < 4 || spec.max_len < spec.min_len || spec.keywords_per_class == 0 || spec.fillers == 0 {
        return Err(Error::Config("synthetic sentence shape is degenerate".into()));
    }
    if spec.sentences == 0 {
        return Err(Error::EmptyDataset);
    }
    let lex = lexicon(spec);
    let k = spec.classes;
    let mut rng = Rng::new(spec.seed);
    let mut examples = Vec::with_capacity(spec.sentences);
    for _ in 0..spec.sentences {
        let len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
        let mut words: Vec<String> = (0..len).map(|_| lex.fillers[rng.below(lex.fillers.len())].clone()).collect();
        let label = if rng.next_f64() < spec.order_fraction {
            let (x, y) = (rng.below(k), rng.below(k));
            let at = rng.below(len - 1);
            words[at] = lex.markers[x].clone();
            words[at + 1] = lex.markers[y].clone();
            (2 * x + y) % k
        } else {
            let c = rng.below(k);
            let hits = 1 + rng.below(3);
            for _ in 0..hits {
                let at = rng.below(len);
                words[at] = lex.keywords[c][rng.below(spec.keywords_per_class)].clone();
            }
            c
        };
        examples.push((label, TokenSeq::new(words)?));
    }
    let labels = (0..k).map(|c| format!("c{c}")).collect();
    Dataset::new(examples, labels, format!("synthetic(seed={})", spec.seed))
}

/// Word vectors for the synthetic lexicon. Keywords of one class scatter
/// around a shared class direction; fillers and markers are independent.
pub fn synthetic_embeddings(spec: &SyntheticSpec, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let lex = lexicon(spec);
    let mut rng = Rng::new(seed);
    let mut table = EmbeddingTable::new(dim)?;
    let draw = |rng: &mut Rng| -> Vec<f64> { (0..dim).map(|_| rng.uniform(-0.5, 0.5)).collect() };
    for words in &lex.keywords {
        let centre = draw(&mut rng);
        for w in words {
            let v: Vec<f64> = centre.iter().map(|c| c + 0.5 * rng.uniform(-0.5, 0.5)).collect();
            table.insert(w, &v)?;
        }
    }
    for w in lex.fillers.iter().chain(&lex.markers) {
        let v = draw(&mut rng);
        table.insert(w, &v)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uiuc_line_format() {
        let rows = parse_uiuc("NUM:date When did X happen ?\n").unwrap();
        assert_eq!(rows[0].0, "NUM:date");
        assert_eq!(rows[0].1.tokens(), &["when", "did", "x", "happen", "?"]);
        let err = parse_uiuc("DESC:def:x What ?\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_uiuc("ok:fine a\nNOCOLON b\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn uiuc_files() {
        let dir = tempfile::tempdir().unwrap();
        let (tr, te) = (dir.path().join("train"), dir.path().join("test"));
        fs::write(&tr, "NUM:date When ?\nLOC:city Where is it ?\nNUM:date What year ?\n").unwrap();
        fs::write(&te, "LOC:city Which city ?\n").unwrap();
        let (train, test) = load_uiuc(&tr, &te).unwrap();
        assert_eq!(train.labels, vec!["NUM:date", "LOC:city"]);
        assert_eq!(train.len(), 3);
        assert_eq!(test.examples[0].0, 1);
        assert_eq!(train.coarse_labels(), vec!["NUM", "LOC"]);

        fs::write(&te, "HUM:ind Who ?\n").unwrap();
        assert!(matches!(load_uiuc(&tr, &te), Err(Error::UnknownLabel(l)) if l == "HUM:ind"));
        fs::write(&tr, "").unwrap();
        assert!(matches!(load_uiuc(&tr, &te), Err(Error::EmptyDataset)));
    }

    #[test]
    fn latin1_fallback() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, b"ENTY:food caf\xe9 ?\n").unwrap();
        assert_eq!(read_text(&p).unwrap(), "ENTY:food café ?\n");
    }

    #[test]
    fn tsv_cases() {
        let d = parse_tsv("pos\tgood film\nneg\tbad film\npos\tgood film\n", Segmentation::Plain, "t").unwrap();
        assert_eq!(d.num_classes(), 2);
        assert_eq!(d.len(), 3);
        assert_eq!(d.examples[0], d.examples[2]);
        let err = parse_tsv("pos\tok\nno tab here\n", Segmentation::Plain, "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let v = parse_tsv("a\thọc sinh\tđi\nb\tx\n", Segmentation::Vietnamese, "t").unwrap();
        assert_eq!(v.examples[0].1.tokens(), &["học_sinh", "đi"]);
    }

    #[test]
    fn tsv_fixture_round_trip() {
        let text = "sport\tThe match ended 2 - 1 .\n\
                    tech\tA new phone was released .\n\
                    sport\tShe won the final set .\n\
                    biz\tShares fell sharply today .\n\
                    tech\tThe chip runs cooler .\n\
                    biz\tProfits rose 4 % .\n\
                    sport\tHe scored twice .\n\
                    tech\tUpdates ship monthly .\n\
                    biz\tThe bank cut rates .\n\
                    sport\tThe team lost at home .\n";
        let d = parse_tsv(text, Segmentation::Plain, "fixture").unwrap();
        assert_eq!(d.labels, vec!["sport", "tech", "biz"]);
        let per: Vec<usize> = (0..3).map(|c| d.examples.iter().filter(|(l, _)| *l == c).count()).collect();
        assert_eq!(per, vec![4, 3, 3]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.tsv");
        write_tsv(&d, &p).unwrap();
        let back = load_tsv(&p).unwrap();
        assert_eq!(back.examples, d.examples);
        assert_eq!(back.labels, d.labels);
    }

    fn toy(n: usize) -> Dataset {
        let ex = (0..n)
            .map(|i| (i % 2, TokenSeq::new(vec![format!("w{i}")]).unwrap()))
            .collect();
        Dataset::new(ex, vec!["a".into(), "b".into()], "toy").unwrap()
    }

    #[test]
    fn split_cases() {
        let d = toy(10);
        let (tr, te, st) = split(&d, 0.8, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert_eq!(st, SplitStatus::Complete);
        assert_eq!(tr.labels, d.labels);
        let (tr2, _, _) = split(&d, 0.8, 3).unwrap();
        assert_eq!(tr.examples, tr2.examples);

        let mut all: Vec<_> = tr.examples.iter().chain(&te.examples).cloned().collect();
        let mut orig = d.examples.clone();
        all.sort_by(|a, b| a.1.tokens().cmp(b.1.tokens()));
        orig.sort_by(|a, b| a.1.tokens().cmp(b.1.tokens()));
        assert_eq!(all, orig);

        let (tr, te, _) = split(&toy(20_000), 0.8, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (16_000, 4_000));
        assert!(split(&d, 1.0, 0).is_err());
    }

    #[test]
    fn split_warns_on_missing_label() {
        let mut d = toy(10);
        d.labels.push("c".into());
        d.examples[9].0 = 2;
        let mut saw_missing = false;
        for seed in 0..20 {
            let (_, te, st) = split(&d, 0.8, seed).unwrap();
            if te.examples.iter().any(|(l, _)| *l == 2) {
                assert_eq!(st, SplitStatus::MissingLabels(vec!["c".into()]));
                saw_missing = true;
            }
        }
        assert!(saw_missing);
    }

    #[test]
    fn synthetic_corpus_is_seeded() {
        let spec = SyntheticSpec {
            sentences: 500,
            ..SyntheticSpec::default()
        };
        let a = synthetic_corpus(&spec).unwrap();
        assert_eq!(a, synthetic_corpus(&spec).unwrap());
        assert_eq!(a.num_classes(), 5);
        let b = synthetic_corpus(&SyntheticSpec { seed: 8, ..spec.clone() }).unwrap();
        assert_ne!(a.examples, b.examples);
        let table = synthetic_embeddings(&spec, 10, 1).unwrap();
        for (_, toks) in &a.examples {
            assert!(toks.iter().all(|t| table.get(t).is_some()));
        }
    }

    #[test]
    fn pseudo_words_are_distinct() {
        let words: std::collections::HashSet<String> = (0..2000).map(|n| pseudo_word("", n)).collect();
        assert_eq!(words.len(), 2000);
    }
}
