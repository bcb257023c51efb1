//! Semantic profiles for users and items: prompt construction, profile
//! generation against an OpenAI-compatible chat service, profile embedding,
//! caching, and a scripted mock service for offline runs.

pub mod cache;
pub mod client;
mod error;
pub mod mock;
pub mod pipeline;
pub mod profile;
pub mod prompt;
pub mod text;

pub use cache::Cache;
pub use client::{ChatMessage, ServiceClient, ServiceConfig};
pub use error::{Error, Result};
pub use pipeline::{
    embed_profiles, generate_profiles, EntityOutcome, EntityStatus, GenerationConfig, ProfileRun, RunReport,
};
pub use profile::{generate_profile, parse_profile_reply, Generated, Profile};
pub use prompt::{build_item_prompt, build_user_prompt, Prompt, PromptConfig, TEMPLATE_VERSION};
pub use text::{load_item_texts, user_contexts, ItemText, Review, UserContext, UserItem};

use semrec_core::align::SemanticStore;

/// Permutes user vectors among users and item vectors among items, which
/// breaks the pairing between entities and their semantics (ablation).
pub fn shuffle_store(store: &SemanticStore, seed: u64) -> SemanticStore {
    store.shuffled(seed)
}
