use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use semrec_core::align::SemanticStore;
use semrec_core::backbone::{checkpoint, score_all, BackboneKind, EmbeddingTable};
use semrec_core::corpus::{inject_noise, NormalizedAdjacency, SplitSet};
use semrec_core::eval::{evaluate_scores, EvalSplit, MetricsReport, DEFAULT_NS};
use semrec_core::optim::{init_from_checkpoint, train_with, EpochLog, Mode, TrainConfig};
use semrec_profilegen::shuffle_store;

use super::load_split;
use super::synth::SEMANTIC_FILE;
use crate::config::{set, FileConfig};
use crate::manifest::{write_json, RunManifest};
use crate::UsageError;

pub const CHECKPOINT_FILE: &str = "embeddings.ckpt";
pub const LOG_FILE: &str = "log.jsonl";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(clap::Args)]
pub struct Args {
    /// Split directory.
    #[arg(long)]
    data: PathBuf,
    /// Run directory for manifest, log, metrics and checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// base | con | gen
    #[arg(long)]
    mode: Option<Mode>,
    /// lightgcn | gccf
    #[arg(long)]
    backbone: Option<BackboneKind>,
    /// Semantic vectors (default: <data>/semantic.jsonl).
    #[arg(long)]
    semantic: Option<PathBuf>,
    /// Permute semantic vectors among users and among items (ablation).
    #[arg(long)]
    shuffle_semantic: bool,
    /// Add this fraction of fake training interactions.
    #[arg(long)]
    noise_ratio: Option<f64>,
    /// Start from a checkpoint instead of a random table.
    #[arg(long)]
    init_from: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    mask_ratio: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    l2_weight: Option<f64>,
}

/// Everything that determines a training run besides the data itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: PathBuf,
    pub semantic: Option<PathBuf>,
    pub shuffle_semantic: bool,
    pub noise_ratio: f64,
    pub init_from: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mode: Mode,
    pub backbone: BackboneKind,
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub validation: Option<MetricsReport>,
    pub test: MetricsReport,
}

fn resolve(args: Args, file: FileConfig) -> anyhow::Result<(RunConfig, PathBuf)> {
    let mut t = file.train;
    set(&mut t.mode, args.mode);
    set(&mut t.backbone, args.backbone);
    set(&mut t.seed, args.seed);
    set(&mut t.lambda, args.lambda);
    set(&mut t.tau, args.tau);
    set(&mut t.mask_ratio, args.mask_ratio);
    set(&mut t.lr, args.lr);
    set(&mut t.dim, args.dim);
    set(&mut t.layers, args.layers);
    set(&mut t.batch_size, args.batch_size);
    set(&mut t.max_epochs, args.max_epochs);
    set(&mut t.patience, args.patience);
    set(&mut t.l2_weight, args.l2_weight);
    t.validate().map_err(|e| UsageError(e.to_string()))?;
    let noise_ratio = args.noise_ratio.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&noise_ratio) {
        return Err(UsageError(format!("--noise-ratio must lie in [0, 1], got {noise_ratio}")).into());
    }
    let semantic = match (t.mode, args.semantic) {
        (Mode::Base, _) => None,
        (_, Some(p)) => Some(p),
        (_, None) => {
            let p = args.data.join(SEMANTIC_FILE);
            if !p.exists() {
                return Err(UsageError(format!("mode {} needs --semantic (no {})", t.mode, p.display())).into());
            }
            Some(p)
        }
    };
    if args.shuffle_semantic && semantic.is_none() {
        return Err(UsageError("--shuffle-semantic needs an alignment mode".into()).into());
    }
    Ok((
        RunConfig {
            train: t,
            data: args.data,
            semantic,
            shuffle_semantic: args.shuffle_semantic,
            noise_ratio,
            init_from: args.init_from,
        },
        args.out,
    ))
}

/// The split a run trains on, with injected noise when configured.
pub fn training_split(cfg: &RunConfig) -> anyhow::Result<SplitSet> {
    let mut split = load_split(&cfg.data)?;
    if cfg.noise_ratio > 0.0 {
        split.train = inject_noise(&split, cfg.noise_ratio, cfg.train.seed)?;
    }
    Ok(split)
}

pub fn test_metrics(split: &SplitSet, table: &EmbeddingTable, cfg: &TrainConfig) -> anyhow::Result<MetricsReport> {
    let adj = NormalizedAdjacency::build(&split.train)?;
    let e = semrec_core::backbone::encode(table.weights.view(), &adj, &cfg.backbone_config());
    let scores = score_all(e.view(), split.n_users());
    Ok(evaluate_scores(scores.view(), split, EvalSplit::Test, &DEFAULT_NS))
}

struct LogWriter {
    out: BufWriter<File>,
    path: PathBuf,
    failed: Option<std::io::Error>,
}

impl LogWriter {
    fn create(path: &Path) -> anyhow::Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
            failed: None,
        })
    }

    fn push(&mut self, log: &EpochLog) {
        if self.failed.is_some() {
            return;
        }
        let line = serde_json::to_string(log).expect("epoch logs serialize");
        if let Err(e) = writeln!(self.out, "{line}").and_then(|_| self.out.flush()) {
            self.failed = Some(e);
        }
    }

    fn finish(self) -> anyhow::Result<()> {
        match self.failed {
            Some(e) => Err(e).with_context(|| format!("writing {}", self.path.display())),
            None => Ok(()),
        }
    }
}

pub fn run(args: Args, file: FileConfig) -> anyhow::Result<()> {
    let (cfg, out) = resolve(args, file)?;
    let mut manifest = RunManifest::new("train", cfg.train.seed, &cfg)?;
    manifest.input(&cfg.data)?;
    for p in cfg.semantic.iter().chain(&cfg.init_from) {
        manifest.input(p)?;
    }
    for f in [LOG_FILE, METRICS_FILE, CHECKPOINT_FILE] {
        manifest.output(&out.join(f));
    }
    manifest.write(&out)?;

    let split = training_split(&cfg)?;
    let t = &cfg.train;
    let semantic = match &cfg.semantic {
        Some(p) => {
            let store = SemanticStore::load_jsonl(p, split.ids())?;
            Some(if cfg.shuffle_semantic { shuffle_store(&store, t.seed) } else { store })
        }
        None => None,
    };
    let init = match &cfg.init_from {
        Some(p) => Some(init_from_checkpoint(p, split.ids(), t.dim, t.init_std, t.seed)?),
        None => None,
    };

    let mut log = LogWriter::create(&out.join(LOG_FILE))?;
    let outcome = train_with(&split, semantic.as_ref(), t, init, &mut |l| log.push(l));
    log.finish()?;
    let outcome = outcome?;

    checkpoint::save(&out.join(CHECKPOINT_FILE), &outcome.table, split.ids())?;
    // report what the checkpoint (stored at f32) scores, so `evaluate` agrees
    let (stored, _) = checkpoint::load(&out.join(CHECKPOINT_FILE))?;
    let metrics = RunMetrics {
        mode: t.mode,
        backbone: t.backbone,
        seed: t.seed,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs_run,
        stopped_early: outcome.stopped_early,
        validation: outcome.best_validation.clone(),
        test: test_metrics(&split, &stored, t)?,
    };
    write_json(&out.join(METRICS_FILE), &metrics)?;
    log::info!(
        "{} after {} epochs (best {}): test Recall@20 {:.4}",
        t.mode,
        metrics.epochs_run,
        metrics.best_epoch,
        metrics.test.recall_at(20)
    );
    Ok(())
}
