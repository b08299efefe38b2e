//! `sentcls`: train, evaluate and benchmark sentence classifiers.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sentcls_core::embeddings::{write_binary_vectors, write_text_vectors};
use sentcls_core::harness::{
    compare_table, evaluate, load_tsv_with, load_uiuc, parse_assignments, parse_grid, run_experiment, run_grid, split,
    synthetic_corpus, synthetic_embeddings, write_tsv, Classifier, DataFormat, Dataset, RunConfig, SyntheticSpec,
};
use sentcls_core::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "sentcls", version, about = "Neural sentence classification: FNN, CNN, RNN and LSTM models")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Worker threads for minibatch gradients and evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its checkpoint, curve and config echo.
    Train(TrainArgs),
    /// Report a checkpoint's accuracy on a labeled file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Defaults to the format the model was trained on.
        #[arg(long)]
        format: Option<String>,
        /// Embedding file to use instead of the one recorded at training time.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Label sentences read one per line from standard input.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Run every entry of a grid file and print an accuracy table.
    Bench {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic corpus and matching word vectors.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 20_000)]
        sentences: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.15)]
        order_fraction: f64,
        #[arg(long, default_value_t = 50)]
        embed_dim: usize,
        #[arg(long, default_value_t = 0.8)]
        split_ratio: f64,
    },
}

/// Flags mirror the config-file keys and override them.
#[derive(Args)]
struct TrainArgs {
    /// Flat `key = value` file read before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    encoding: Option<String>,
    #[arg(long)]
    embeddings: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    filters: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    decay: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    max_len: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    split_ratio: Option<String>,
    #[arg(long)]
    train: Option<String>,
    #[arg(long)]
    test: Option<String>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    segmentation: Option<String>,
    #[arg(long)]
    min_count: Option<String>,
    #[arg(long)]
    oov: Option<String>,
    #[arg(long)]
    fine_tune: bool,
    #[arg(long)]
    out: Option<String>,
}

impl TrainArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut assignments = parse_assignments(&text)?;
            // Relative paths in a config file are relative to the file.
            let base = path.parent().unwrap_or(Path::new("."));
            for (k, v) in assignments.iter_mut() {
                let is_path = matches!(k.replace('_', "-").as_str(), "train" | "test" | "embeddings" | "out");
                if is_path && !v.is_empty() && Path::new(v.as_str()).is_relative() {
                    *v = base.join(&*v).display().to_string();
                }
            }
            cfg.apply(&assignments)?;
        }
        let flags = [
            ("arch", &self.arch),
            ("encoding", &self.encoding),
            ("embeddings", &self.embeddings),
            ("dim", &self.dim),
            ("window", &self.window),
            ("filters", &self.filters),
            ("hidden", &self.hidden),
            ("dropout", &self.dropout),
            ("optimizer", &self.optimizer),
            ("lr", &self.lr),
            ("decay", &self.decay),
            ("batch", &self.batch),
            ("epochs", &self.epochs),
            ("max-len", &self.max_len),
            ("seed", &self.seed),
            ("split-ratio", &self.split_ratio),
            ("train", &self.train),
            ("test", &self.test),
            ("format", &self.format),
            ("segmentation", &self.segmentation),
            ("min-count", &self.min_count),
            ("oov", &self.oov),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.fine_tune {
            cfg.fine_tune = true;
        }
        Ok(cfg)
    }
}

fn load_labeled(path: &Path, format: DataFormat, model: &Classifier) -> anyhow::Result<Dataset> {
    let data = match format {
        DataFormat::Uiuc => load_uiuc(path, path)?.0,
        DataFormat::Tsv => load_tsv_with(path, model.encoder.segmentation)?,
    };
    Ok(data.with_catalog(model.labels())?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.config()?;
            let report = run_experiment(&cfg)?;
            println!(
                "best test accuracy {:.4} at iteration {}; final {:.4}",
                report.best_accuracy, report.best_iteration, report.final_accuracy
            );
            if let Some(out) = &report.out {
                println!("outputs written to {}", out.display());
            }
        }
        Command::Eval {
            checkpoint,
            test,
            format,
            embeddings,
        } => {
            let model = Classifier::load(&checkpoint, embeddings.as_deref())?;
            let format = match format {
                Some(f) => f.parse()?,
                None => model.encoder.format,
            };
            let data = load_labeled(&test, format, &model)?;
            let acc = evaluate(&model, &data)?;
            println!("accuracy {acc:.4} ({} examples)", data.len());
        }
        Command::Predict { checkpoint, embeddings } => {
            let model = Classifier::load(&checkpoint, embeddings.as_deref())?;
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for line in io::stdin().lock().lines() {
                let line = line.context("reading standard input")?;
                if line.trim().is_empty() {
                    writeln!(out)?;
                } else {
                    writeln!(out, "{}", model.predict_text(&line)?)?;
                }
            }
        }
        Command::Bench { grid, out } => {
            let text = fs::read_to_string(&grid).with_context(|| format!("reading {}", grid.display()))?;
            let base_dir = grid.parent().unwrap_or(Path::new("."));
            let runs = parse_grid(&text, &RunConfig::default(), base_dir)?;
            let results = run_grid(&runs, out.as_deref());
            let mut rows = Vec::new();
            let mut first_error = None;
            for (name, result) in results {
                match result {
                    Ok(r) => rows.push((name, r.best_accuracy)),
                    Err(e) => {
                        eprintln!("run {name} failed: {e}");
                        first_error.get_or_insert(e);
                    }
                }
            }
            let table = compare_table(&rows);
            print!("{table}");
            if let Some(dir) = &out {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("compare.txt"), &table)?;
            }
            if let Some(e) = first_error {
                return Err(e.into());
            }
        }
        Command::Synth {
            out,
            classes,
            sentences,
            seed,
            order_fraction,
            embed_dim,
            split_ratio,
        } => {
            let spec = SyntheticSpec {
                classes,
                sentences,
                seed,
                order_fraction,
                ..SyntheticSpec::default()
            };
            let data = synthetic_corpus(&spec)?;
            let (train, test, _) = split(&data, split_ratio, seed)?;
            fs::create_dir_all(&out)?;
            write_tsv(&train, out.join("train.tsv"))?;
            write_tsv(&test, out.join("test.tsv"))?;
            let table = synthetic_embeddings(&spec, embed_dim, seed)?;
            write_text_vectors(&table, out.join("vectors.txt"))?;
            write_binary_vectors(&table, out.join("vectors.bin"))?;
            println!("{} train / {} test examples written to {}", train.len(), test.len(), out.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::kind) {
        Some(ErrorKind::Config) => 1,
        Some(ErrorKind::Diverged) => 3,
        Some(ErrorKind::Data) => 2,
        // Plain I/O failures outside the library concern the data files.
        None if err.downcast_ref::<io::Error>().is_some() => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
