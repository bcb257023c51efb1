use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use semrec_core::corpus::{kcore_filter, load_interactions, split_interactions, Format, SPLIT_RATIOS};

use crate::config::{set, FileConfig};
use crate::manifest::{write_json, RunManifest};
use crate::UsageError;

#[derive(clap::Args)]
pub struct Args {
    /// Interaction file (TSV or JSONL).
    #[arg(long)]
    input: PathBuf,
    /// Output directory for the split.
    #[arg(long)]
    out: PathBuf,
    /// tsv | jsonl (default: from the file extension).
    #[arg(long)]
    format: Option<String>,
    /// Drop interactions rated below this.
    #[arg(long)]
    min_rating: Option<f64>,
    /// k-core threshold (0 disables).
    #[arg(long)]
    kcore: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct Stats {
    users: usize,
    items: usize,
    interactions: usize,
    train: usize,
    validation: usize,
    test: usize,
}

pub(crate) fn resolve_format(given: Option<&str>, path: &Path) -> anyhow::Result<Format> {
    match given {
        Some(f) => f.parse().map_err(|e: semrec_core::Error| UsageError(e.to_string()).into()),
        None => Format::from_path(path)
            .ok_or_else(|| UsageError(format!("cannot tell the format of {}; pass --format", path.display())).into()),
    }
}

pub fn run(args: Args, file: FileConfig) -> anyhow::Result<()> {
    let mut cfg = file.prepare;
    if args.format.is_some() {
        cfg.format = args.format;
    }
    if args.min_rating.is_some() {
        cfg.min_rating = args.min_rating;
    }
    set(&mut cfg.kcore, args.kcore);
    set(&mut cfg.seed, args.seed);
    let format = resolve_format(cfg.format.as_deref(), &args.input)?;

    let mut manifest = RunManifest::new("prepare", cfg.seed, &cfg)?;
    manifest.input(&args.input)?;
    manifest.output(&args.out);
    manifest.write(&args.out)?;

    let mut set = load_interactions(&args.input, format, cfg.min_rating)?;
    if cfg.kcore > 0 {
        set = kcore_filter(&set, cfg.kcore).with_context(|| format!("{}-core filtering", cfg.kcore))?;
    }
    let split = split_interactions(&set, SPLIT_RATIOS, cfg.seed)?;
    split.save(&args.out)?;
    let stats = Stats {
        users: set.n_users(),
        items: set.n_items(),
        interactions: set.len(),
        train: split.train.len(),
        validation: split.validation.len(),
        test: split.test.len(),
    };
    write_json(&args.out.join("stats.json"), &stats)?;
    log::info!(
        "{} users, {} items, {} interactions -> {}",
        stats.users,
        stats.items,
        stats.interactions,
        args.out.display()
    );
    Ok(())
}
