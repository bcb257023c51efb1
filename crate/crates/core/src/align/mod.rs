//! Alignment between collaborative representations and semantic profile
//! embeddings: the semantic store, the adapter networks and the contrastive
//! and masked-generative InfoNCE objectives.

mod adapter;
mod infonce;
mod semantic;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::{apply_mask, EmbeddingTable};

pub use adapter::{
    hidden_width, Activation, AdapterCache, AdapterGrads, AdapterNet, Direction, LEAKY_SLOPE,
};
pub use infonce::{
    contrastive_info_loss, generative_info_loss, info_nce, total_loss, AlignmentOutput,
    InfoNceOutput, COSINE_EPS,
};
pub use semantic::{EntityKind, Provenance, SemanticRecord, SemanticStore};

/// Number of rows masked out of `n` at `ratio`.
pub fn mask_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).round() as usize).min(n)
}

/// Draws `round(ratio * (I + J))` distinct node rows with `rng`.
/// Returned rows are sorted.
pub fn sample_mask_rows<R: Rng + ?Sized>(n_nodes: usize, ratio: f64, rng: &mut R) -> Vec<usize> {
    let k = mask_count(n_nodes, ratio);
    let mut rows = rand::seq::index::sample(rng, n_nodes, k).into_vec();
    rows.sort_unstable();
    rows
}

/// Copy of the initial embeddings with a random subset of user and item rows
/// replaced by the mask token. The input table is left untouched.
pub fn mask_entities(x: &EmbeddingTable, ratio: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    assert!((0.0..=1.0).contains(&ratio), "mask ratio must lie in [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = sample_mask_rows(x.n_nodes(), ratio, &mut rng);
    (apply_mask(x.weights.view(), &x.mask_token, &rows), rows)
}
