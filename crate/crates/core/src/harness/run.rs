//! Whole experiments: data loading, training, and persisted outputs.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::config::{parse_assignments, DataFormat, RunConfig};
use super::data::{load_tsv_with, load_uiuc, split, Dataset};
use super::report::emit_curve;
use super::train::{train_run, LearningCurve};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CURVE_FILE: &str = "curve.csv";
pub const CONFIG_FILE: &str = "config.txt";

/// Loads the train and test sets named by `cfg`, splitting the training file
/// when no test file is given.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let train_path = cfg
        .train
        .as_ref()
        .ok_or_else(|| Error::Config("no training data given".into()))?;
    match (cfg.format, &cfg.test) {
        (DataFormat::Uiuc, Some(test)) => load_uiuc(train_path, test),
        (DataFormat::Uiuc, None) => {
            // A UIUC file is also valid as its own "test" file.
            let (all, _) = load_uiuc(train_path, train_path)?;
            let (tr, te, _) = split(&all, cfg.split_ratio, cfg.seed)?;
            Ok((tr, te))
        }
        (DataFormat::Tsv, Some(test)) => {
            let train = load_tsv_with(train_path, cfg.segmentation)?;
            let test = load_tsv_with(test, cfg.segmentation)?.with_catalog(&train.labels)?;
            Ok((train, test))
        }
        (DataFormat::Tsv, None) => {
            let all = load_tsv_with(train_path, cfg.segmentation)?;
            let (tr, te, _) = split(&all, cfg.split_ratio, cfg.seed)?;
            Ok((tr, te))
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub curve: LearningCurve,
    pub best_accuracy: f64,
    pub best_iteration: usize,
    pub final_accuracy: f64,
    pub out: Option<PathBuf>,
}

/// Validates `cfg`, trains, and writes the checkpoint, curve and config echo
/// into `cfg.out` when set.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let (train, test) = load_data(cfg)?;
    log::info!(
        "{} train / {} test examples, {} labels",
        train.len(),
        test.len(),
        train.num_classes()
    );
    let outcome = train_run(cfg, &train, &test, None)?;
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        outcome.model.save(dir.join(CHECKPOINT_FILE))?;
        emit_curve(&outcome.curve, dir.join(CURVE_FILE))?;
        let cfg_path = dir.join(CONFIG_FILE);
        fs::write(&cfg_path, cfg.to_text()).map_err(|e| Error::io(&cfg_path, e))?;
    }
    let best = outcome.curve.best().copied();
    Ok(RunReport {
        best_accuracy: best.map_or(0.0, |r| r.test_accuracy),
        best_iteration: best.map_or(0, |r| r.iteration),
        final_accuracy: outcome.curve.last().map_or(0.0, |r| r.test_accuracy),
        curve: outcome.curve,
        out: cfg.out.clone(),
    })
}

/// One named run of a grid file.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub name: String,
    pub config: RunConfig,
}

/// Parses a grid file: leading `key = value` lines are shared defaults, and
/// each `[name]` section overrides them for one run. Relative paths are
/// resolved against `base_dir`.
pub fn parse_grid(text: &str, base: &RunConfig, base_dir: &Path) -> Result<Vec<GridRun>> {
    let mut shared = String::new();
    let mut sections: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let name = name.trim();
            if name.is_empty() || sections.iter().any(|(n, _)| n == name) {
                return Err(Error::Config(format!("bad or duplicate run name `{name}`")));
            }
            sections.push((name.to_string(), String::new()));
        } else {
            let target = sections.last_mut().map_or(&mut shared, |(_, body)| body);
            target.push_str(line);
            target.push('\n');
        }
    }
    if sections.is_empty() {
        return Err(Error::Config("grid file defines no [run] sections".into()));
    }
    let shared = parse_assignments(&shared)?;
    sections
        .into_iter()
        .map(|(name, body)| {
            let mut config = base.clone();
            config.apply(&shared)?;
            config.apply(&parse_assignments(&body)?)?;
            for p in [&mut config.train, &mut config.test, &mut config.embeddings, &mut config.out] {
                if let Some(path) = p.as_mut().filter(|p| p.is_relative()) {
                    *path = base_dir.join(&*path);
                }
            }
            Ok(GridRun { name, config })
        })
        .collect()
}

/// Runs every grid entry, concurrently, each writing to `out/<name>` unless
/// it names its own output directory. Results keep grid order.
pub fn run_grid(runs: &[GridRun], out: Option<&Path>) -> Vec<(String, Result<RunReport>)> {
    runs.par_iter()
        .map(|run| {
            let mut cfg = run.config.clone();
            if cfg.out.is_none() {
                cfg.out = out.map(|o| o.join(&run.name));
            }
            (run.name.clone(), run_experiment(&cfg))
        })
        .collect()
}
