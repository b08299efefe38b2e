//! Text preprocessing: tokenization, vocabularies, hashed features.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Padding token. It cannot be produced by [`tokenize`] because `<` and `>`
/// are split off as punctuation.
pub const PAD: &str = "<pad>";
/// Placeholder for tokens outside a vocabulary.
pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        Ok(TokenSeq(tokens))
    }

    pub fn from_strs(tokens: &[&str]) -> Result<Self> {
        Self::new(tokens.iter().map(|s| s.to_string()).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// MurmurHash3, x86 32-bit variant.
pub fn murmur3_32(bytes: &[u8], seed: u32) -> u32 {
    const C1: u32 = 0xcc9e_2d51;
    const C2: u32 = 0x1b87_3593;

    let mut h = seed;
    let mut blocks = bytes.chunks_exact(4);
    for block in &mut blocks {
        let mut k = u32::from_le_bytes([block[0], block[1], block[2], block[3]]);
        k = k.wrapping_mul(C1).rotate_left(15).wrapping_mul(C2);
        h ^= k;
        h = h.rotate_left(13).wrapping_mul(5).wrapping_add(0xe654_6b64);
    }

    let tail = blocks.remainder();
    if !tail.is_empty() {
        let mut k = 0u32;
        for (i, &b) in tail.iter().enumerate() {
            k |= (b as u32) << (8 * i);
        }
        k = k.wrapping_mul(C1).rotate_left(15).wrapping_mul(C2);
        h ^= k;
    }

    h ^= bytes.len() as u32;
    h ^= h >> 16;
    h = h.wrapping_mul(0x85eb_ca6b);
    h ^= h >> 13;
    h = h.wrapping_mul(0xc2b2_ae35);
    h ^= h >> 16;
    h
}

/// Hashes the token's UTF-8 bytes (seed 0) into `[0, dim)`.
pub fn hash_index(token: &str, dim: usize) -> usize {
    debug_assert!(dim >= 2);
    (murmur3_32(token.as_bytes(), 0) as u64 % dim as u64) as usize
}

/// Lowercases ASCII, splits on whitespace, and peels leading and trailing
/// ASCII punctuation off each chunk as single-character tokens.
pub fn tokenize(text: &str) -> Result<TokenSeq> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chunk = chunk.to_ascii_lowercase();
        let start = chunk
            .find(|c: char| !c.is_ascii_punctuation())
            .unwrap_or(chunk.len());
        let end = chunk
            .char_indices()
            .rfind(|(_, c)| !c.is_ascii_punctuation())
            .map_or(start, |(i, c)| i + c.len_utf8());
        out.extend(chunk[..start].chars().map(String::from));
        if start < end {
            out.push(chunk[start..end].to_string());
        }
        if end > start {
            out.extend(chunk[end..].chars().map(String::from));
        }
    }
    TokenSeq::new(out)
}

/// Joins the syllables of each pre-segmented word with underscores so that a
/// multi-syllable word becomes a single token.
pub fn normalize_vietnamese(words: &TokenSeq) -> TokenSeq {
    TokenSeq(
        words
            .iter()
            .map(|w| w.split_whitespace().collect::<Vec<_>>().join("_"))
            .filter(|w| !w.is_empty())
            .collect(),
    )
}

/// Token/index bijection over training tokens. Index 0 is [`PAD`], index 1 is
/// [`UNK`]; kept tokens start at 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    min_count: usize,
}

impl Vocabulary {
    pub const PAD_INDEX: usize = 0;
    pub const UNK_INDEX: usize = 1;

    fn from_parts(tokens: Vec<String>, counts: Vec<usize>, min_count: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            counts,
            index,
            min_count,
        }
    }

    /// Restores the lookup map after deserialization.
    pub(crate) fn reindex(&mut self) {
        *self = Self::from_parts(
            std::mem::take(&mut self.tokens),
            std::mem::take(&mut self.counts),
            self.min_count,
        );
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.get(token).is_some_and(|i| i >= 2)
    }

    /// Index of `token`, or [`Vocabulary::UNK_INDEX`].
    pub fn index_of(&self, token: &str) -> usize {
        self.get(token).unwrap_or(Self::UNK_INDEX)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn count(&self, index: usize) -> usize {
        self.counts[index]
    }

    /// Kept tokens, in index order.
    pub fn kept(&self) -> impl Iterator<Item = &str> {
        self.tokens[2..].iter().map(String::as_str)
    }
}

/// Keeps tokens seen at least `min_count` times, ordered by descending
/// frequency with lexicographic tie-break.
pub fn build_vocabulary<'a, I>(corpus: I, min_count: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a TokenSeq>,
{
    if min_count == 0 {
        return Err(Error::Param("min_count must be >= 1".into()));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    let mut seen = false;
    for seq in corpus {
        seen = true;
        for tok in seq.iter().filter(|&t| t != PAD) {
            *freq.entry(tok).or_default() += 1;
        }
    }
    if !seen {
        return Err(Error::EmptyDataset);
    }
    let mut kept: Vec<(&str, usize)> = freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens = vec![PAD.to_string(), UNK.to_string()];
    let mut counts = vec![0, 0];
    for (t, c) in kept {
        tokens.push(t.to_string());
        counts.push(c);
    }
    Ok(Vocabulary::from_parts(tokens, counts, min_count))
}

/// Hashed unigram counts: each non-padding token increments slot
/// `hash_index(token, dim)`.
pub fn count_vector(tokens: &TokenSeq, dim: usize) -> Tensor {
    let mut v = vec![0.0; dim];
    for tok in tokens.iter().filter(|&t| t != PAD) {
        v[hash_index(tok, dim)] += 1.0;
    }
    Tensor::vector(v)
}

/// Keeps the first `max_len` tokens, right-padding shorter sequences with [`PAD`].
pub fn pad_or_truncate(tokens: &TokenSeq, max_len: usize) -> TokenSeq {
    let mut out: Vec<String> = tokens.0.iter().take(max_len).cloned().collect();
    out.resize(max_len, PAD.to_string());
    TokenSeq(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(tokens: &[&str]) -> TokenSeq {
        TokenSeq::from_strs(tokens).unwrap()
    }

    #[test]
    fn murmur_reference_vectors() {
        // Cross-checked against the Python `mmh3` package (seed 0, unsigned).
        let cases: &[(&str, u32)] = &[
            ("", 0),
            ("a", 1_009_084_850),
            ("abc", 3_017_643_002),
            ("hello", 613_153_351),
            ("1", 2_484_513_939),
            ("12", 4_191_350_549),
            ("123", 2_662_625_771),
            ("1234", 1_914_461_635),
            ("The quick brown fox jumps over the lazy dog", 776_992_547),
            ("caffeine", 663_968_757),
            ("hoc_sinh", 1_639_108_649),
        ];
        for &(s, h) in cases {
            assert_eq!(murmur3_32(s.as_bytes(), 0), h, "{s:?}");
        }
    }

    #[test]
    fn hash_index_cases() {
        assert_eq!(hash_index("", 16), 0);
        assert_eq!(hash_index("abc", 1024), (3_017_643_002u32 % 1024) as usize);
        assert_eq!(hash_index("what", 97), hash_index("what", 97));
    }

    #[test]
    fn hash_bucket_spread() {
        let dim = 1024;
        let mut buckets = vec![0usize; dim];
        for i in 0..10_000 {
            buckets[hash_index(&format!("tok{i}x"), dim)] += 1;
        }
        let mean = 10_000.0 / dim as f64;
        assert!(buckets.iter().all(|&b| (b as f64) <= 3.0 * mean));
    }

    #[test]
    fn tokenize_cases() {
        assert_eq!(tokenize("What is caffeine?").unwrap(), seq(&["what", "is", "caffeine", "?"]));
        assert_eq!(tokenize("  a  ").unwrap(), seq(&["a"]));
        assert!(matches!(tokenize(""), Err(Error::EmptySentence)));
        assert!(matches!(tokenize("   \t"), Err(Error::EmptySentence)));
        assert_eq!(tokenize("``Hi,'' ...").unwrap(), seq(&["`", "`", "hi", ",", "'", "'", ".", ".", "."]));
        assert_eq!(tokenize("café! naïve").unwrap(), seq(&["café", "!", "naïve"]));
        assert_eq!(tokenize("U.S. Ünïcode").unwrap(), seq(&["u.s", ".", "Ünïcode"]));
        assert_eq!(tokenize("<pad>").unwrap(), seq(&["<", "pad", ">"]));
    }

    #[test]
    fn vietnamese_normalization() {
        let words = seq(&["hoc sinh", "di", "hoc_tap"]);
        assert_eq!(normalize_vietnamese(&words), seq(&["hoc_sinh", "di", "hoc_tap"]));
        let n = normalize_vietnamese(&words);
        assert_eq!(normalize_vietnamese(&n), n);
    }

    #[test]
    fn vocabulary_cutoff_and_order() {
        let corpus = [seq(&["a", "a", "b"])];
        let v = build_vocabulary(&corpus, 2).unwrap();
        assert_eq!(v.kept().collect::<Vec<_>>(), vec!["a"]);
        assert_eq!(v.index_of("b"), Vocabulary::UNK_INDEX);

        let corpus = [seq(&["c", "b", "a", "b"]), seq(&["c"])];
        let v = build_vocabulary(&corpus, 1).unwrap();
        assert_eq!(v.kept().collect::<Vec<_>>(), vec!["b", "c", "a"]);
        assert_eq!(v.get(PAD), Some(0));
        assert_eq!(v.get(UNK), Some(1));
        assert_eq!(v, build_vocabulary(&corpus, 1).unwrap());
        assert!(build_vocabulary(&corpus, 0).is_err());
    }

    #[test]
    fn count_vector_cases() {
        let dim = 8;
        let v = count_vector(&seq(&["t"]), dim);
        assert_eq!(v.data()[hash_index("t", dim)], 1.0);
        assert_eq!(v.data().iter().sum::<f64>(), 1.0);
        let v = count_vector(&seq(&["t", "t", "t"]), dim);
        assert_eq!(v.data()[hash_index("t", dim)], 3.0);

        // Reference hashes of "a", "b", "c" from the Python `mmh3` package.
        let mut oracle = [0.0; 8];
        for h in [1_009_084_850u32, 2_514_386_435, 3_778_205_279] {
            oracle[(h % 8) as usize] += 1.0;
        }
        assert_eq!(count_vector(&seq(&["a", "b", "c"]), 8).data(), &oracle);

        let padded = pad_or_truncate(&seq(&["x"]), 4);
        assert_eq!(count_vector(&padded, 8).data().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn pad_truncate_cases() {
        let long: Vec<String> = (0..25).map(|i| format!("w{i}")).collect();
        let long = TokenSeq::new(long).unwrap();
        let t = pad_or_truncate(&long, 20);
        assert_eq!(t.tokens(), &long.tokens()[..20]);
        let exact = pad_or_truncate(&t, 20);
        assert_eq!(exact, t);
        let short = pad_or_truncate(&seq(&["a", "b", "c"]), 5);
        assert_eq!(short, seq(&["a", "b", "c", PAD, PAD]));
    }

    proptest! {
        #[test]
        fn pad_length_exact(len in 1usize..40, max_len in 1usize..30) {
            let s = TokenSeq::new((0..len).map(|i| i.to_string()).collect()).unwrap();
            prop_assert_eq!(pad_or_truncate(&s, max_len).len(), max_len);
        }

        #[test]
        fn count_sum_is_length(tokens in proptest::collection::vec("[a-z]{1,6}", 1..20), dim in 2usize..64) {
            let s = TokenSeq::new(tokens.clone()).unwrap();
            prop_assert_eq!(count_vector(&s, dim).data().iter().sum::<f64>(), tokens.len() as f64);
        }

        #[test]
        fn vocabulary_order_invariant(tokens in proptest::collection::vec("[a-e]", 1..30), seed in 0u64..100) {
            let corpus: Vec<TokenSeq> = tokens.chunks(3).map(|c| TokenSeq::new(c.to_vec()).unwrap()).collect();
            let mut shuffled = corpus.clone();
            crate::tensor::Rng::new(seed).shuffle(&mut shuffled);
            prop_assert_eq!(build_vocabulary(&corpus, 1).unwrap(), build_vocabulary(&shuffled, 1).unwrap());
        }
    }
}
