use std::path::PathBuf;

use serde::Serialize;

use semrec_core::corpus::{split_interactions, SPLIT_RATIOS};
use semrec_core::eval::{evaluate_scores, EvalSplit, MetricsReport, DEFAULT_NS};
use semrec_core::synth::{generate, generate_eras, SynthConfig};

use crate::config::{set, FileConfig};
use crate::manifest::{write_json, RunManifest};
use crate::UsageError;

pub const SEMANTIC_FILE: &str = "semantic.jsonl";
pub const PRETRAIN_DIR: &str = "pretrain";

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    items: Option<usize>,
    /// Latent dimension.
    #[arg(long)]
    d_z: Option<usize>,
    /// Semantic dimension.
    #[arg(long)]
    d_s: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    /// Noise level of the semantic vectors.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write an earlier interaction era at this density under
    /// `<out>/pretrain`, for pre-training experiments.
    #[arg(long)]
    pretrain_density: Option<f64>,
}

#[derive(Serialize)]
struct Resolved<'a> {
    synth: &'a SynthConfig,
    pretrain_density: Option<f64>,
}

/// Test metrics of ranking by the planted probabilities.
#[derive(Serialize)]
struct Oracle {
    test: MetricsReport,
}

pub fn run(args: Args, file: FileConfig) -> anyhow::Result<()> {
    let mut cfg = file.synth;
    set(&mut cfg.n_users, args.users);
    set(&mut cfg.n_items, args.items);
    set(&mut cfg.d_z, args.d_z);
    set(&mut cfg.d_s, args.d_s);
    set(&mut cfg.density, args.density);
    set(&mut cfg.sigma_noise, args.sigma);
    set(&mut cfg.seed, args.seed);
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;

    let mut manifest = RunManifest::new(
        "synth",
        cfg.seed,
        &Resolved {
            synth: &cfg,
            pretrain_density: args.pretrain_density,
        },
    )?;
    manifest.output(&args.out);
    manifest.write(&args.out)?;

    let (early, data) = match args.pretrain_density {
        Some(d) => {
            let (early, later) = generate_eras(&cfg, d)?;
            (Some(early), later)
        }
        None => (None, generate(&cfg)?),
    };
    let split = split_interactions(&data.interactions, SPLIT_RATIOS, cfg.seed)?;
    split.save(&args.out)?;
    data.semantic.write_jsonl(&args.out.join(SEMANTIC_FILE), split.ids())?;
    let oracle = evaluate_scores(data.latents.logits().view(), &split, EvalSplit::Test, &DEFAULT_NS);
    write_json(&args.out.join("oracle.json"), &Oracle { test: oracle })?;
    if let Some(early) = early {
        let dir = args.out.join(PRETRAIN_DIR);
        std::fs::create_dir_all(&dir)?;
        let early = split_interactions(&early, SPLIT_RATIOS, cfg.seed)?;
        early.save(&dir)?;
        data.semantic.write_jsonl(&dir.join(SEMANTIC_FILE), early.ids())?;
    }
    log::info!("{} interactions -> {}", data.interactions.len(), args.out.display());
    Ok(())
}
