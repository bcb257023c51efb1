use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use semrec_profilegen::{
    embed_profiles, generate_profiles, load_item_texts, user_contexts, Cache, GenerationConfig, ItemText, Profile,
    ServiceClient, ServiceConfig,
};

use super::load_split;
use super::synth::SEMANTIC_FILE;
use crate::config::{set, FileConfig};
use crate::manifest::{write_json, RunManifest};
use crate::UsageError;

pub const PROFILES_FILE: &str = "profiles.jsonl";
pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const REPORT_FILE: &str = "report.json";

/// Flags shared by both service-backed commands.
#[derive(clap::Args)]
pub struct ServiceFlags {
    /// Service base URL (default: $SEMREC_API_BASE, then the config file).
    #[arg(long)]
    base_url: Option<String>,
    /// Directory caching profiles and embeddings across runs.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    max_in_flight: Option<usize>,
}

#[derive(clap::Args)]
pub struct GenArgs {
    /// Split directory; users are profiled from their training interactions.
    #[arg(long)]
    data: PathBuf,
    /// Item text file (JSONL).
    #[arg(long)]
    items: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    chat_model: Option<String>,
    #[arg(long)]
    retry_limit: Option<usize>,
    #[arg(long)]
    max_reviews: Option<usize>,
    #[arg(long)]
    max_items: Option<usize>,
    #[arg(long)]
    char_budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    service: ServiceFlags,
}

#[derive(clap::Args)]
pub struct EmbedArgs {
    /// Split directory whose entities need vectors.
    #[arg(long)]
    data: PathBuf,
    /// Profile file written by `gen-profiles`.
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    embedding_model: Option<String>,
    /// Texts per embedding request.
    #[arg(long)]
    batch: Option<usize>,
    #[command(flatten)]
    service: ServiceFlags,
}

fn service_config(mut cfg: ServiceConfig, flags: &ServiceFlags) -> ServiceConfig {
    cfg = cfg.with_env();
    set(&mut cfg.base_url, flags.base_url.clone());
    set(&mut cfg.max_in_flight, flags.max_in_flight);
    cfg
}

fn open_cache(flags: &ServiceFlags) -> anyhow::Result<Option<Cache>> {
    Ok(flags.cache.as_deref().map(Cache::open).transpose()?)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_profiles(path: &Path) -> anyhow::Result<Vec<Profile>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Profile = serde_json::from_str(&line)
            .map_err(|e| semrec_profilegen::Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        out.push(p);
    }
    Ok(out)
}

#[derive(Serialize)]
struct GenResolved<'a> {
    generation: &'a GenerationConfig,
    service: &'a ServiceConfig,
}

pub fn run_gen(args: GenArgs, file: FileConfig) -> anyhow::Result<()> {
    let mut gen = file.generation;
    set(&mut gen.seed, args.seed);
    set(&mut gen.prompt.max_reviews, args.max_reviews);
    set(&mut gen.prompt.max_items, args.max_items);
    set(&mut gen.prompt.char_budget, args.char_budget);
    let mut svc = service_config(file.service, &args.service);
    set(&mut svc.chat_model, args.chat_model);
    set(&mut svc.retry_limit, args.retry_limit);
    if svc.max_in_flight == 0 {
        return Err(UsageError("max_in_flight must be at least 1".into()).into());
    }

    let mut manifest = RunManifest::new("gen-profiles", gen.seed, &GenResolved { generation: &gen, service: &svc })?;
    manifest.input(&args.data)?;
    manifest.input(&args.items)?;
    for f in [PROFILES_FILE, PROMPTS_FILE, REPORT_FILE] {
        manifest.output(&args.out.join(f));
    }
    manifest.write(&args.out)?;

    let split = load_split(&args.data)?;
    let texts = load_item_texts(&args.items)?;
    let by_id: std::collections::HashMap<&str, &ItemText> = texts.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut items = Vec::with_capacity(split.n_items());
    for id in split.ids().items.iter() {
        let t = by_id.get(id).ok_or_else(|| semrec_profilegen::Error::Prompt {
            entity: id.to_owned(),
            msg: format!("no entry in {}", args.items.display()),
        })?;
        items.push((*t).clone());
    }
    let users = user_contexts(&split.train, &items)?;
    let client = ServiceClient::new(svc)?;
    let cache = open_cache(&args.service)?;
    let run = generate_profiles(&items, &users, &client, &gen, cache.as_ref())?;

    write_jsonl(&args.out.join(PROFILES_FILE), &run.profiles)?;
    write_jsonl(&args.out.join(PROMPTS_FILE), &run.prompts)?;
    write_json(&args.out.join(REPORT_FILE), &run.report)?;
    let r = &run.report;
    if r.failed > 0 {
        log::warn!("{} of {} entities fell back to pseudo-profiles", r.failed, r.entities.len());
    }
    log::info!("profiles: {} generated, {} cached, {} failed", r.succeeded, r.cached, r.failed);
    Ok(())
}

pub fn run_embed(args: EmbedArgs, file: FileConfig) -> anyhow::Result<()> {
    let mut svc = service_config(file.service, &args.service);
    set(&mut svc.embedding_model, args.embedding_model);
    set(&mut svc.embedding_batch, args.batch);
    if svc.embedding_batch == 0 || svc.max_in_flight == 0 {
        return Err(UsageError("batch and max_in_flight must be at least 1".into()).into());
    }
    let mut manifest = RunManifest::new("embed", 0, &svc)?;
    manifest.input(&args.data)?;
    manifest.input(&args.profiles)?;
    let out_file = args.out.join(SEMANTIC_FILE);
    manifest.output(&out_file);
    manifest.write(&args.out)?;

    let split = load_split(&args.data)?;
    let profiles = read_profiles(&args.profiles)?;
    let client = ServiceClient::new(svc)?;
    let cache = open_cache(&args.service)?;
    let store = embed_profiles(&profiles, split.ids(), &client, cache.as_ref())?;
    store.write_jsonl(&out_file, split.ids())?;
    log::info!("{} x {} semantic vectors -> {}", split.ids().n_nodes(), store.dim(), out_file.display());
    Ok(())
}
