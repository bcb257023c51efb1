pub mod evaluate;
pub mod mock;
pub mod prepare;
pub mod profiles;
pub mod report;
pub mod synth;
pub mod train;

use std::path::Path;

use anyhow::Context;
use semrec_core::corpus::SplitSet;

/// Loads a split directory written by `prepare` or `synth`.
pub fn load_split(dir: &Path) -> anyhow::Result<SplitSet> {
    SplitSet::load(dir).with_context(|| format!("loading split from {}", dir.display()))
}
