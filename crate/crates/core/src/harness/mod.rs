//! Dataset ingestion, run configuration, training, evaluation, and reports.

mod config;
mod data;
mod encode;
mod report;
mod run;
mod train;

pub use config::{parse_assignments, DataFormat, Encoding, OptimizerKind, RunConfig};
pub use data::{
    load_tsv, load_tsv_with, load_uiuc, parse_tsv, split, synthetic_corpus, synthetic_embeddings, write_tsv, Dataset,
    Segmentation, SplitStatus, SyntheticSpec,
};
pub use encode::Encoder;
pub use report::{compare_table, curve_to_csv, emit_curve, format_float, load_curve, parse_curve, CURVE_HEADER};
pub use run::{
    load_data, parse_grid, run_experiment, run_grid, GridRun, RunReport, CHECKPOINT_FILE, CONFIG_FILE, CURVE_FILE,
};
pub use train::{accuracy, evaluate, train_run, Classifier, CurveRecord, LearningCurve, TrainOutcome};
