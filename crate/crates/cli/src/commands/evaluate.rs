use std::path::PathBuf;

use serde::Serialize;

use semrec_core::align::SemanticStore;
use semrec_core::backbone::checkpoint;
use semrec_core::corpus::NormalizedAdjacency;
use semrec_core::eval::{evaluate_scores, semantic_only_scores, EvalSplit, MetricsReport, DEFAULT_NS};

use super::load_split;
use super::train::{training_split, RunConfig, CHECKPOINT_FILE};
use crate::config::FileConfig;
use crate::manifest::{write_json, RunManifest};
use crate::UsageError;

pub const EVAL_FILE: &str = "metrics.json";

#[derive(clap::Args)]
pub struct Args {
    /// Run directory written by `train`.
    #[arg(long, conflicts_with_all = ["semantic", "data"])]
    run: Option<PathBuf>,
    /// Split directory, for semantic-only ranking.
    #[arg(long, requires = "semantic")]
    data: Option<PathBuf>,
    /// Rank items by cosine similarity of semantic vectors alone.
    #[arg(long, requires = "data")]
    semantic: Option<PathBuf>,
    /// validation | test
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: EvalSplit,
    /// Output directory for manifest and metrics.
    #[arg(long)]
    out: PathBuf,
}

fn parse_split(s: &str) -> Result<EvalSplit, String> {
    match s {
        "test" => Ok(EvalSplit::Test),
        "validation" | "valid" => Ok(EvalSplit::Validation),
        other => Err(format!("unknown split `{other}` (validation|test)")),
    }
}

#[derive(Serialize)]
struct Resolved<'a> {
    run: Option<&'a RunConfig>,
    data: Option<&'a PathBuf>,
    semantic: Option<&'a PathBuf>,
    split: EvalSplit,
}

#[derive(Serialize)]
struct EvalMetrics {
    source: &'static str,
    split: EvalSplit,
    metrics: MetricsReport,
}

pub fn run(args: Args, _file: FileConfig) -> anyhow::Result<()> {
    if let Some(run_dir) = &args.run {
        let trained = RunManifest::read(run_dir)?;
        let cfg: RunConfig = serde_json::from_value(trained.config)
            .map_err(|e| UsageError(format!("{} is not a training run: {e}", run_dir.display())))?;
        let ckpt = run_dir.join(CHECKPOINT_FILE);
        let mut manifest = RunManifest::new(
            "evaluate",
            cfg.train.seed,
            &Resolved { run: Some(&cfg), data: None, semantic: None, split: args.split },
        )?;
        manifest.input(&cfg.data)?;
        manifest.input(&ckpt)?;
        manifest.output(&args.out.join(EVAL_FILE));
        manifest.write(&args.out)?;

        let split = training_split(&cfg)?;
        let (table, ids) = checkpoint::load(&ckpt)?;
        if &ids != split.ids() {
            return Err(semrec_core::Error::Checkpoint(format!("{} was trained on other entities", ckpt.display())).into());
        }
        let adj = NormalizedAdjacency::build(&split.train)?;
        let e = semrec_core::backbone::encode(table.weights.view(), &adj, &cfg.train.backbone_config());
        let scores = semrec_core::backbone::score_all(e.view(), split.n_users());
        let metrics = evaluate_scores(scores.view(), &split, args.split, &DEFAULT_NS);
        print!("{}", metrics.to_table());
        return write_json(&args.out.join(EVAL_FILE), &EvalMetrics { source: "checkpoint", split: args.split, metrics });
    }
    let (Some(data), Some(sem)) = (&args.data, &args.semantic) else {
        return Err(UsageError("pass --run, or --data with --semantic".into()).into());
    };
    let mut manifest = RunManifest::new(
        "evaluate",
        0,
        &Resolved { run: None, data: Some(data), semantic: Some(sem), split: args.split },
    )?;
    manifest.input(data)?;
    manifest.input(sem)?;
    manifest.output(&args.out.join(EVAL_FILE));
    manifest.write(&args.out)?;

    let split = load_split(data)?;
    let store = SemanticStore::load_jsonl(sem, split.ids())?;
    let scores = semantic_only_scores(&store);
    let metrics = evaluate_scores(scores.view(), &split, args.split, &DEFAULT_NS);
    print!("{}", metrics.to_table());
    write_json(&args.out.join(EVAL_FILE), &EvalMetrics { source: "semantic", split: args.split, metrics })
}
