//! Command-line driver: `stats`, `split`, `train`, `evaluate`, `recommend`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::dataset::{
    self, build_folksonomy, compute_stats, filter_tags, parse_assignments, FileFormat, Folksonomy,
    SplitDataset, SplitPairs, SplitRatios,
};
use crate::eval::{self, EvalConfig, Split};
use crate::graph::build_graphs;
use crate::model::score_all_items;
use crate::snapshot::Snapshot;
use crate::training::{self, Objective, TrainError};

pub const SPLIT_FILE: &str = "split.tsv";
pub const SNAPSHOT_FILE: &str = "snapshot.bin";
pub const LOG_FILE: &str = "train_log.tsv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "folkrec",
    version,
    about = "Tag-aware top-K recommendation over folksonomy graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Overrides the `seed` key of the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WhichSplit {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print dataset statistics after tag filtering.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `min_tag_count`.
        #[arg(long)]
        min_tag_count: Option<usize>,
    },
    /// Split the interactions and write the split manifest.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write snapshot, manifest, log and validation report.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Reuse a frozen split instead of drawing one.
        #[arg(long)]
        split_manifest: Option<PathBuf>,
        /// Also write the normalized graph edges.
        #[arg(long)]
        dump_graph: Option<PathBuf>,
    },
    /// Evaluate a snapshot on the validation or test split.
    Evaluate {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        split_manifest: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        which: WhichSplit,
        /// Comma-separated cutoffs, e.g. `10,20`.
        #[arg(long, default_value = "5,10,15,20,25,30")]
        cutoffs: String,
        /// Report directory; defaults to the snapshot's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the top-N items for one user.
    Recommend {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        split_manifest: PathBuf,
        /// External user id.
        #[arg(long)]
        user: u64,
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

pub fn load_folksonomy(path: &Path, min_tag_count: usize) -> Result<Folksonomy, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let raw =
        parse_assignments(BufReader::new(file), FileFormat::HetRec).map_err(|e| io_err(path, e))?;
    let kept = filter_tags(&raw, min_tag_count);
    build_folksonomy(&kept).map_err(|e| io_err(path, e))
}

fn read_manifest(path: &Path) -> Result<SplitPairs, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    SplitPairs::read_manifest(BufReader::new(file)).map_err(|e| io_err(path, e))
}

fn read_snapshot(path: &Path) -> Result<Snapshot, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    Snapshot::read(BufReader::new(file)).map_err(|e| io_err(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(path, e))
}

/// Loads a snapshot and manifest and checks that they describe the same data.
fn load_pair(snapshot: &Path, manifest: &Path) -> Result<(Snapshot, SplitPairs), CliError> {
    let snap = read_snapshot(snapshot)?;
    let pairs = read_manifest(manifest)?;
    let mismatch = || CliError::Data("snapshot/split mismatch".into());
    if (pairs.n_users, pairs.n_items, pairs.n_tags)
        != (snap.n_users(), snap.n_items(), snap.n_tags())
    {
        return Err(mismatch());
    }
    let mut train: Vec<(usize, usize)> = snap.train.iter().map(|t| (t.user, t.item)).collect();
    train.sort_unstable();
    train.dedup();
    if train != pairs.train {
        return Err(mismatch());
    }
    Ok((snap, pairs))
}

fn parse_cutoffs(list: &str) -> Result<Vec<usize>, CliError> {
    list.split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Usage(format!("bad cutoff list {list:?}")))
}

fn write_report(dir: &Path, report: &eval::MetricReport) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let stem = report.split;
    write_with(&dir.join(format!("{stem}_report.txt")), |w| {
        write!(w, "{report}")
    })?;
    write_with(&dir.join(format!("{stem}_report.jsonl")), |w| {
        report.write_records(w)
    })
}

pub fn run<W: Write>(cli: Cli, out: &mut W) -> Result<(), CliError> {
    let print = |out: &mut W, s: &str| -> Result<(), CliError> {
        out.write_all(s.as_bytes())
            .map_err(|e| CliError::Data(format!("stdout: {e}")))
    };
    match cli.command {
        Command::Stats {
            input,
            config,
            min_tag_count,
        } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let min = min_tag_count.unwrap_or(cfg.min_tag_count);
            if min == 0 {
                return Err(CliError::Usage("--min-tag-count must be >= 1".into()));
            }
            let f = load_folksonomy(&input, min)?;
            print(out, &format!("{}\n", compute_stats(&f)))
        }
        Command::Split {
            input,
            config,
            out: dir,
        } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let f = load_folksonomy(&input, cfg.min_tag_count)?;
            let data = dataset::split(&f, SplitRatios::default(), cfg.train.seed)
                .map_err(|e| CliError::Data(e.to_string()))?;
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            let path = dir.join(SPLIT_FILE);
            write_with(&path, |w| data.pairs.write_manifest(w))?;
            print(
                out,
                &format!(
                    "train\t{}\nvalidation\t{}\ntest\t{}\nmanifest\t{}\n",
                    data.pairs.train.len(),
                    data.pairs.validation.len(),
                    data.pairs.test.len(),
                    path.display()
                ),
            )
        }
        Command::Train {
            input,
            config,
            out: dir,
            split_manifest,
            dump_graph,
        } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let f = load_folksonomy(&input, cfg.min_tag_count)?;
            let data = match split_manifest {
                Some(p) => {
                    SplitDataset::from_pairs(&f, read_manifest(&p)?).map_err(|e| io_err(&p, e))?
                }
                None => dataset::split(&f, SplitRatios::default(), cfg.train.seed)
                    .map_err(|e| CliError::Data(e.to_string()))?,
            };
            let graphs = build_graphs(&data.train, data.n_users, data.n_items, data.n_tags);
            if let Some(p) = dump_graph {
                write_with(&p, |w| graphs.write_edges(w))?;
            }
            let model_cfg = cfg.model();
            let (table, report) = training::train_with(
                &data,
                &graphs,
                &cfg.train,
                &model_cfg,
                Objective::from_config(&cfg.train),
                |e| {
                    eprintln!(
                        "epoch {:>4}  bpr {:.6}  transrt {:.3e}  l2 {:.3e}  val recall@20 {}",
                        e.epoch,
                        e.loss.bpr,
                        e.loss.transrt,
                        e.loss.l2,
                        e.val_recall_at_20.map_or("-".into(), |r| format!("{r:.4}"))
                    )
                },
            )?;

            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            write_with(&dir.join(SPLIT_FILE), |w| data.pairs.write_manifest(w))?;
            let snap = Snapshot {
                model: model_cfg,
                table,
                id_maps: data.id_maps.clone(),
                train: data.train.clone(),
            };
            write_with(&dir.join(SNAPSHOT_FILE), |w| snap.write(w))?;
            write_with(&dir.join(LOG_FILE), |w| report.write_log(w))?;

            print(
                out,
                &format!(
                    "best epoch {} of {} ({:?})\n",
                    report.best_epoch,
                    report.epochs.len(),
                    report.stop_reason
                ),
            )?;
            if data.pairs.validation.is_empty() {
                return print(out, "no validation pairs; validation report skipped\n");
            }
            let finals = snap.finals();
            let val = eval::evaluate(
                &finals,
                Split::Validation,
                &data.pairs,
                &EvalConfig::default(),
            )
            .map_err(|e| CliError::Data(e.to_string()))?;
            write_report(&dir, &val)?;
            print(out, &val.to_string())
        }
        Command::Evaluate {
            snapshot,
            split_manifest,
            which,
            cutoffs,
            out: dir,
        } => {
            let split = match which {
                WhichSplit::Train => {
                    return Err(CliError::Usage(
                        "refusing to evaluate on the training split".into(),
                    ))
                }
                WhichSplit::Validation => Split::Validation,
                WhichSplit::Test => Split::Test,
            };
            let cfg = EvalConfig::with_cutoffs(parse_cutoffs(&cutoffs)?)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let (snap, pairs) = load_pair(&snapshot, &split_manifest)?;
            let report = eval::evaluate(&snap.finals(), split, &pairs, &cfg)
                .map_err(|e| CliError::Data(e.to_string()))?;
            let dir = dir.unwrap_or_else(|| {
                snapshot
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            write_report(&dir, &report)?;
            print(out, &report.to_string())
        }
        Command::Recommend {
            snapshot,
            split_manifest,
            user,
            n,
        } => {
            if n == 0 {
                return Err(CliError::Usage("--n must be >= 1".into()));
            }
            let (snap, pairs) = load_pair(&snapshot, &split_manifest)?;
            let u = snap
                .id_maps
                .users
                .dense(user)
                .ok_or_else(|| CliError::Data(format!("unknown user id {user}")))?;
            let finals = snap.finals();
            let train = pairs.items_by_user(dataset::SplitName::Train);
            let scores = score_all_items(u, &finals);
            let recs = eval::rank_scores(&scores, n, &train[u]);
            let mut text = String::new();
            for (rank, &i) in recs.iter().enumerate() {
                let ext = snap.id_maps.items.external(i);
                text.push_str(&format!("{}\t{ext}\t{}\n", rank + 1, scores[i]));
            }
            print(out, &text)
        }
    }
}
