//! Round trips and invariants through the public API only.

use proptest::prelude::*;
use sentcls_core::embeddings::{
    load_binary_vectors, load_text_vectors, write_binary_vectors, write_text_vectors, EmbeddingTable,
};
use sentcls_core::harness::{
    curve_to_csv, parse_curve, split, synthetic_corpus, write_tsv, load_tsv, CurveRecord, LearningCurve, SplitStatus,
    SyntheticSpec,
};
use sentcls_core::models::{read_checkpoint, write_checkpoint, Checkpoint};
use sentcls_core::text::{count_vector, hash_index, pad_or_truncate, tokenize};
use sentcls_core::{init_params, ArchSpec, TokenSeq};

#[test]
fn vectors_survive_both_file_formats() {
    let dir = tempfile::tempdir().unwrap();
    let mut table = EmbeddingTable::new(3).unwrap();
    table.insert("the", &[0.25, -1.5, 3.0]).unwrap();
    table.insert("cat", &[1e-3, 0.0, -7.125]).unwrap();
    let bin = dir.path().join("v.bin");
    write_binary_vectors(&table, &bin).unwrap();
    let back = load_binary_vectors(&bin).unwrap();
    // The binary format stores 32-bit floats; these values are exact in f32
    // except 1e-3.
    assert_eq!(back.get("the").unwrap(), &[0.25, -1.5, 3.0]);
    assert!((back.get("cat").unwrap()[0] - 1e-3).abs() < 1e-9);
    let txt = dir.path().join("v.txt");
    write_text_vectors(&table, &txt).unwrap();
    let back = load_text_vectors(&txt, Some(3)).unwrap();
    assert_eq!(back.get("cat").unwrap(), table.get("cat").unwrap());
    assert!(load_text_vectors(&txt, Some(4)).is_err());
}

#[test]
fn tsv_and_split_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_corpus(&SyntheticSpec {
        classes: 3,
        sentences: 200,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let path = dir.path().join("d.tsv");
    write_tsv(&data, &path).unwrap();
    let back = load_tsv(&path).unwrap();
    assert_eq!(back.len(), data.len());
    assert_eq!(back.examples[17].1, data.examples[17].1);
    let (train, test, status) = split(&back, 0.8, 3).unwrap();
    assert_eq!((train.len(), test.len()), (160, 40));
    assert_eq!(status, SplitStatus::Complete);
    assert_eq!(train.labels, test.labels);
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ArchSpec::Lstm {
        embed_dim: 4,
        hidden: 3,
        classes: 2,
        dropout: 0.1,
    };
    let ckpt = Checkpoint {
        params: init_params(&spec, 9).unwrap(),
        meta: "{\"k\":1}".into(),
    };
    let path = dir.path().join("m.ckpt");
    write_checkpoint(&ckpt, &path).unwrap();
    assert_eq!(read_checkpoint(&path).unwrap(), ckpt);
}

proptest! {
    #[test]
    fn tokens_have_no_whitespace(s in "\\PC{0,60}") {
        if let Ok(t) = tokenize(&s) {
            prop_assert!(t.iter().all(|w| !w.is_empty() && !w.chars().any(char::is_whitespace)));
        }
    }

    #[test]
    fn count_vector_totals_token_count(words in prop::collection::vec("[a-z]{1,6}", 1..20), dim in 2usize..64) {
        let seq = TokenSeq::new(words.clone()).unwrap();
        let v = count_vector(&seq, dim);
        prop_assert_eq!(v.data().iter().sum::<f64>(), words.len() as f64);
        prop_assert!(words.iter().all(|w| hash_index(w, dim) < dim));
    }

    #[test]
    fn padding_gives_exact_length(words in prop::collection::vec("[a-z]{1,6}", 1..30), len in 1usize..25) {
        let seq = TokenSeq::new(words.clone()).unwrap();
        let out = pad_or_truncate(&seq, len);
        prop_assert_eq!(out.len(), len);
        let kept = words.len().min(len);
        prop_assert_eq!(&out.tokens()[..kept], &words[..kept]);
    }

    #[test]
    fn curve_csv_round_trips(rows in prop::collection::vec((0.0f64..50.0, 0.0f64..=1.0, 0.0f64..1e4), 1..10)) {
        let curve = LearningCurve {
            records: rows
                .iter()
                .enumerate()
                .map(|(i, &(l, a, s))| CurveRecord { iteration: i + 1, train_loss: l, test_accuracy: a, seconds: s })
                .collect(),
        };
        let back = parse_curve(&curve_to_csv(&curve)).unwrap();
        prop_assert_eq!(back.records.len(), curve.records.len());
        for (a, b) in back.records.iter().zip(&curve.records) {
            prop_assert_eq!(a.iteration, b.iteration);
            prop_assert_eq!(a.train_loss, b.train_loss);
            prop_assert_eq!(a.test_accuracy, b.test_accuracy);
            prop_assert!((a.seconds - b.seconds).abs() <= 5e-4);
        }
    }
}
