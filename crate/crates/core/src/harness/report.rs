//! Curve files and accuracy tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::train::{CurveRecord, LearningCurve};

pub const CURVE_HEADER: &str = "iteration,train_loss,test_accuracy,seconds";

/// Shortest round-trip decimal form with at least four fractional digits.
pub fn format_float(v: f64) -> String {
    let mut s = format!("{v}");
    if !v.is_finite() {
        return s;
    }
    let decimals = s.split_once('.').map_or(0, |(_, f)| f.len());
    if decimals == 0 {
        s.push('.');
    }
    for _ in decimals..4 {
        s.push('0');
    }
    s
}

pub fn curve_to_csv(curve: &LearningCurve) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for r in &curve.records {
        writeln!(
            s,
            "{},{},{},{:.3}",
            r.iteration,
            format_float(r.train_loss),
            format_float(r.test_accuracy),
            r.seconds
        )
        .expect("write to String");
    }
    s
}

pub fn emit_curve(curve: &LearningCurve, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, curve_to_csv(curve)).map_err(|e| Error::io(path, e))
}

pub fn parse_curve(text: &str) -> Result<LearningCurve> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CURVE_HEADER => {}
        _ => return Err(Error::Header(format!("curve files start with `{CURVE_HEADER}`"))),
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            line: i + 1,
            msg: msg.to_string(),
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        records.push(CurveRecord {
            iteration: cols[0].trim().parse().map_err(|_| bad("bad iteration"))?,
            train_loss: cols[1].trim().parse().map_err(|_| bad("bad train_loss"))?,
            test_accuracy: cols[2].trim().parse().map_err(|_| bad("bad test_accuracy"))?,
            seconds: cols[3].trim().parse().map_err(|_| bad("bad seconds"))?,
        });
    }
    Ok(LearningCurve { records })
}

pub fn load_curve(path: impl AsRef<Path>) -> Result<LearningCurve> {
    let path = path.as_ref();
    parse_curve(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Runs sorted by accuracy, highest first (stable on ties), with accuracies
/// as percentages to two decimals.
pub fn compare_table(runs: &[(String, f64)]) -> String {
    let mut rows: Vec<&(String, f64)> = runs.iter().collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1));
    let width = rows.iter().map(|(n, _)| n.len()).chain([3]).max().unwrap_or(3);
    let mut s = format!("{:<width$}  accuracy\n", "run");
    for (name, acc) in rows {
        writeln!(s, "{:<width$}  {:>7.2}%", name, acc * 100.0).expect("write to String");
    }
    s
}
