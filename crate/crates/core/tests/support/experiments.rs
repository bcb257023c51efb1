//! End-to-end runs on planted synthetic data.

use semrec_core::align::SemanticStore;
use semrec_core::backbone::{score_all, EmbeddingTable};
use semrec_core::corpus::{split_interactions, NormalizedAdjacency, SplitSet, SPLIT_RATIOS};
use semrec_core::eval::{evaluate_scores, EvalSplit};
use semrec_core::optim::{train, Mode, TrainConfig, TrainOutcome};
use semrec_core::synth::{generate, SynthConfig, SynthData};

/// The desk-scale training configuration: library defaults except the
/// learning rate (one batch per epoch at this scale).
pub fn desk_config(mode: Mode, seed: u64) -> TrainConfig {
    TrainConfig {
        mode,
        seed,
        lr: 1e-2,
        ..TrainConfig::default()
    }
}

pub fn synthetic(seed: u64, sigma_noise: f64) -> (SynthData, SplitSet) {
    let data = generate(&SynthConfig {
        seed,
        sigma_noise,
        ..SynthConfig::default()
    })
    .unwrap();
    let split = split_interactions(&data.interactions, SPLIT_RATIOS, seed).unwrap();
    (data, split)
}

pub fn test_recall20(split: &SplitSet, out: &TrainOutcome, cfg: &TrainConfig) -> f64 {
    let adj = NormalizedAdjacency::build(&split.train).unwrap();
    let e = out.representations(&adj, cfg);
    let scores = score_all(e.view(), split.n_users());
    evaluate_scores(scores.view(), split, EvalSplit::Test, &[20]).recall_at(20)
}

pub fn run(
    split: &SplitSet,
    sem: Option<&SemanticStore>,
    cfg: &TrainConfig,
    init: Option<EmbeddingTable>,
) -> (f64, TrainOutcome) {
    let out = train(split, sem, cfg, init).unwrap();
    (test_recall20(split, &out, cfg), out)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation.
pub fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}
