use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;

use semrec_core::eval::DEFAULT_NS;
use semrec_core::optim::Mode;

use super::train::{RunConfig, RunMetrics, METRICS_FILE};
use crate::manifest::{write_json, RunManifest};
use crate::UsageError;

#[derive(clap::Args)]
pub struct Args {
    /// Run directories written by `train`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Output directory for report.md and report.json.
    #[arg(long)]
    out: PathBuf,
}

/// Settings that may differ between the variants being compared.
const VARIANT_KEYS: [&str; 2] = ["semantic", "shuffle_semantic"];
const VARIANT_TRAIN_KEYS: [&str; 4] = ["mode", "lambda", "tau", "mask_ratio"];

fn without(cfg: &RunConfig, variant_keys: bool) -> Value {
    let mut v = serde_json::to_value(cfg).expect("run configs serialize");
    let obj = v.as_object_mut().expect("object");
    let train = obj.get_mut("train").and_then(Value::as_object_mut).expect("train table");
    train.remove("seed");
    if variant_keys {
        for k in VARIANT_TRAIN_KEYS {
            train.remove(k);
        }
        for k in VARIANT_KEYS {
            obj.remove(k);
        }
    }
    v
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

#[derive(Clone, Debug, Serialize)]
pub struct Group {
    pub label: String,
    pub seeds: Vec<u64>,
    /// Keyed like `recall@20`.
    pub metrics: BTreeMap<String, MeanStd>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub backbone: String,
    pub columns: Vec<String>,
    pub groups: Vec<Group>,
    /// Best non-base mean relative to the base mean, in percent.
    pub best_improvement: BTreeMap<String, f64>,
}

fn columns() -> Vec<String> {
    let mut c: Vec<String> = DEFAULT_NS.iter().map(|n| format!("recall@{n}")).collect();
    c.extend(DEFAULT_NS.iter().map(|n| format!("ndcg@{n}")));
    c
}

fn metric(m: &RunMetrics, col: &str) -> f64 {
    let (name, n) = col.split_once('@').expect("column format");
    let n: usize = n.parse().expect("column format");
    match name {
        "recall" => m.test.recall_at(n),
        _ => m.test.ndcg_at(n),
    }
}

fn label(cfg: &RunConfig) -> String {
    let mut s = cfg.train.mode.to_string();
    if cfg.shuffle_semantic {
        s.push_str("+shuffled");
    }
    s
}

pub fn improvement(base: f64, other: f64) -> Option<f64> {
    (base > 0.0).then(|| (other - base) / base * 100.0)
}

pub fn format_improvement(pct: f64) -> String {
    let arrow = if pct >= 0.0 { '↑' } else { '↓' };
    format!("{arrow}{:.2}%", pct.abs())
}

pub fn build(runs: &[(RunConfig, RunMetrics)]) -> anyhow::Result<Report> {
    let reference = without(&runs[0].0, true);
    let mut grouped: BTreeMap<(u8, String), Vec<&(RunConfig, RunMetrics)>> = BTreeMap::new();
    for r in runs {
        if without(&r.0, true) != reference {
            return Err(UsageError("runs differ in settings other than seed and alignment variant".into()).into());
        }
        let order = match r.0.train.mode {
            Mode::Base => 0,
            Mode::Con => 1,
            Mode::Gen => 2,
        };
        grouped.entry((order, label(&r.0))).or_default().push(r);
    }
    let cols = columns();
    let mut groups = Vec::new();
    for ((_, label), members) in grouped {
        let first = without(&members[0].0, false);
        if members.iter().any(|m| without(&m.0, false) != first) {
            return Err(UsageError(format!("{label} runs differ in settings other than seed")).into());
        }
        let mut seeds: Vec<u64> = members.iter().map(|m| m.0.train.seed).collect();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(UsageError(format!("{label} has the same seed more than once")).into());
        }
        let metrics = cols
            .iter()
            .map(|c| {
                let xs: Vec<f64> = members.iter().map(|m| metric(&m.1, c)).collect();
                (c.clone(), mean_std(&xs))
            })
            .collect();
        groups.push(Group { label, seeds, metrics });
    }
    let mut best_improvement = BTreeMap::new();
    if let Some(base) = groups.iter().find(|g| g.label == "base") {
        for c in &cols {
            let best = groups
                .iter()
                .filter(|g| g.label != "base")
                .map(|g| g.metrics[c].mean)
                .fold(f64::NEG_INFINITY, f64::max);
            if let Some(pct) = improvement(base.metrics[c].mean, best).filter(|p| p.is_finite()) {
                best_improvement.insert(c.clone(), pct);
            }
        }
    }
    Ok(Report {
        backbone: runs[0].0.train.backbone.to_string(),
        columns: cols,
        groups,
        best_improvement,
    })
}

pub fn markdown(r: &Report) -> String {
    let header = |c: &str| {
        let (name, n) = c.split_once('@').unwrap();
        format!("{}@{n}", if name == "recall" { "Recall" } else { "NDCG" })
    };
    let mut s = String::new();
    let _ = writeln!(s, "Backbone: {}\n", r.backbone);
    let _ = writeln!(
        s,
        "| Model | {} |",
        r.columns.iter().map(|c| header(c)).collect::<Vec<_>>().join(" | ")
    );
    let _ = writeln!(s, "|---|{}", "---|".repeat(r.columns.len()));
    for g in &r.groups {
        let cells: Vec<String> = r
            .columns
            .iter()
            .map(|c| format!("{:.4}±{:.4}", g.metrics[c].mean, g.metrics[c].std))
            .collect();
        let _ = writeln!(s, "| {} (n={}) | {} |", g.label, g.seeds.len(), cells.join(" | "));
    }
    if !r.best_improvement.is_empty() {
        let cells: Vec<String> = r
            .columns
            .iter()
            .map(|c| r.best_improvement.get(c).map_or("n/a".into(), |p| format_improvement(*p)))
            .collect();
        let _ = writeln!(s, "| Best Imprv. | {} |", cells.join(" | "));
    }
    s
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut runs = Vec::with_capacity(args.runs.len());
    let mut manifest = RunManifest::new("report", 0, &args.runs)?;
    for dir in &args.runs {
        let m = RunManifest::read(dir)?;
        let cfg: RunConfig = serde_json::from_value(m.config)
            .map_err(|e| UsageError(format!("{} is not a training run: {e}", dir.display())))?;
        let path = dir.join(METRICS_FILE);
        manifest.input(&path)?;
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let metrics: RunMetrics = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        runs.push((cfg, metrics));
    }
    manifest.output(&args.out.join("report.md"));
    manifest.output(&args.out.join("report.json"));
    manifest.write(&args.out)?;

    let report = build(&runs)?;
    let md = markdown(&report);
    std::fs::write(args.out.join("report.md"), &md)?;
    write_json(&args.out.join("report.json"), &report)?;
    print!("{md}");
    Ok(())
}
