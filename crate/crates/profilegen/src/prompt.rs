//! System and user prompts for item and user profile generation.
//!
//! System prompts are versioned template files. User prompts are assembled
//! from labelled text blocks and kept within a character budget by
//! truncating the longest blocks first.

use std::collections::HashMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::text::{ItemText, UserContext};
use crate::{Error, Result};

pub const TEMPLATE_VERSION: &str = "v1";
pub const ITEM_SYSTEM: &str = include_str!("../templates/item_system.v1.txt");
pub const USER_SYSTEM: &str = include_str!("../templates/user_system.v1.txt");
pub const RETRY_SUFFIX: &str = include_str!("../templates/retry_suffix.v1.txt");

/// Marks a block cut short by the character budget.
const ELLIPSIS: char = '…';

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Reviews sampled for items without a description.
    pub max_reviews: usize,
    /// Interacted items sampled per user.
    pub max_items: usize,
    /// Upper bound on the user-prompt length, in characters.
    pub char_budget: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            max_reviews: 10,
            max_items: 10,
            char_budget: 6000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    /// SHA-256 over the template version and both prompt texts.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for part in [TEMPLATE_VERSION, &self.system, &self.user] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

/// Per-entity sampling stream, so one entity's sample does not depend on
/// which other entities are processed.
fn entity_rng(seed: u64, entity: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(entity.as_bytes());
    let mut stream = [0u8; 8];
    stream.copy_from_slice(&digest[..8]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from_le_bytes(stream));
    rng
}

/// `k` of `n` indices, uniformly without replacement, in ascending order.
fn sample_sorted(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut picked = index::sample(rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

/// A prompt under construction: fixed labels interleaved with variable
/// text blocks that may be truncated.
#[derive(Default)]
struct Blocks {
    parts: Vec<(bool, String)>,
}

impl Blocks {
    fn fixed(&mut self, s: impl Into<String>) {
        self.parts.push((false, s.into()));
    }

    fn value(&mut self, s: &str) {
        // one block per line keeps the layout unambiguous
        self.parts.push((true, s.split_whitespace().collect::<Vec<_>>().join(" ")));
    }

    /// Cuts the longest blocks down to a common length until the rendered
    /// text fits in `budget` characters.
    fn render(mut self, budget: usize) -> String {
        let len = |s: &str| s.chars().count();
        let fixed: usize = self.parts.iter().filter(|p| !p.0).map(|p| len(&p.1)).sum();
        let lens: Vec<usize> = self.parts.iter().filter(|p| p.0).map(|p| len(&p.1)).collect();
        let room = budget.saturating_sub(fixed);
        if lens.iter().sum::<usize>() > room {
            let cost = |cap: usize| lens.iter().map(|&l| l.min(cap)).sum::<usize>();
            // largest common cap that fits
            let (mut lo, mut hi) = (0usize, *lens.iter().max().unwrap_or(&0));
            while lo < hi {
                let mid = (lo + hi).div_ceil(2);
                if cost(mid) <= room {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            for (is_value, s) in &mut self.parts {
                if *is_value && len(s) > lo {
                    *s = match lo {
                        0 => String::new(),
                        cap => s.chars().take(cap - 1).chain([ELLIPSIS]).collect(),
                    };
                }
            }
        }
        self.parts.into_iter().map(|p| p.1).collect()
    }
}

/// System prompt and user prompt for an item. With a description the user
/// prompt holds title and description; otherwise title, attributes and a
/// seeded sample of at most `max_reviews` reviews.
pub fn build_item_prompt(item: &ItemText, cfg: &PromptConfig, seed: u64) -> Result<Prompt> {
    item.validate()?;
    let mut b = Blocks::default();
    b.fixed("Title: ");
    b.value(&item.title);
    b.fixed("\n");
    if let Some(desc) = item.description() {
        b.fixed("Description: ");
        b.value(desc);
        b.fixed("\n");
    } else {
        if item.attributes.is_empty() && item.reviews.is_empty() {
            return Err(Error::Prompt {
                entity: item.id.clone(),
                msg: "no description, attributes or reviews to summarize".into(),
            });
        }
        if !item.attributes.is_empty() {
            b.fixed("Attributes:\n");
            for (k, v) in &item.attributes {
                b.fixed(format!("- {k}: "));
                b.value(v);
                b.fixed("\n");
            }
        }
        if !item.reviews.is_empty() {
            let mut rng = entity_rng(seed, &item.id);
            b.fixed("Reviews:\n");
            for i in sample_sorted(&mut rng, item.reviews.len(), cfg.max_reviews) {
                b.fixed("- ");
                b.value(&item.reviews[i].text);
                b.fixed("\n");
            }
        }
    }
    Ok(Prompt {
        system: ITEM_SYSTEM.to_owned(),
        user: b.render(cfg.char_budget),
    })
}

/// System prompt and user prompt for a user: a seeded sample of at most
/// `max_items` interacted items, each with title, item profile and the
/// user's review when there is one. Every sampled item must already have a
/// profile in `item_profiles`.
pub fn build_user_prompt(
    user: &UserContext,
    item_profiles: &HashMap<String, String>,
    cfg: &PromptConfig,
    seed: u64,
) -> Result<Prompt> {
    if user.items.is_empty() {
        return Err(Error::Prompt {
            entity: user.user.clone(),
            msg: "user has no interactions".into(),
        });
    }
    let mut rng = entity_rng(seed, &user.user);
    let picked = sample_sorted(&mut rng, user.items.len(), cfg.max_items);
    let mut b = Blocks::default();
    for (n, &i) in picked.iter().enumerate() {
        let it = &user.items[i];
        let profile = item_profiles.get(&it.item).ok_or_else(|| Error::MissingItemProfile {
            user: user.user.clone(),
            item: it.item.clone(),
        })?;
        if n > 0 {
            b.fixed("\n");
        }
        b.fixed(format!("Item {}\nTitle: ", n + 1));
        b.value(&it.title);
        b.fixed("\nItem profile: ");
        b.value(profile);
        b.fixed("\n");
        if let Some(review) = it.review.as_deref().filter(|r| !r.trim().is_empty()) {
            b.fixed("Review: ");
            b.value(review);
            b.fixed("\n");
        }
    }
    Ok(Prompt {
        system: USER_SYSTEM.to_owned(),
        user: b.render(cfg.char_budget),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{Review, UserItem};

    fn item(desc: Option<&str>, n_reviews: usize) -> ItemText {
        ItemText {
            id: "b7".into(),
            title: "The Bell Jar".into(),
            description: desc.map(str::to_owned),
            attributes: vec![("genre".into(), "fiction".into())],
            reviews: (0..n_reviews)
                .map(|k| Review {
                    user: format!("u{k}"),
                    text: format!("review number {k}"),
                })
                .collect(),
        }
    }

    fn review_count(p: &Prompt) -> usize {
        p.user.matches("review number").count()
    }

    #[test]
    fn description_wins_over_reviews() {
        let p = build_item_prompt(&item(Some("A novel about Esther."), 12), &PromptConfig::default(), 0).unwrap();
        assert_eq!(p.user, "Title: The Bell Jar\nDescription: A novel about Esther.\n");
        assert_eq!(p.system, ITEM_SYSTEM);
        assert!(p.system.contains("\"reasoning\""));
    }

    #[test]
    fn reviews_are_sampled_deterministically() {
        let cfg = PromptConfig { max_reviews: 5, ..Default::default() };
        let it = item(None, 12);
        let a = build_item_prompt(&it, &cfg, 3).unwrap();
        assert_eq!(review_count(&a), 5);
        assert!(a.user.contains("- genre: fiction"));
        assert_eq!(a, build_item_prompt(&it, &cfg, 3).unwrap());
        let others: Vec<String> = (4..10).map(|s| build_item_prompt(&it, &cfg, s).unwrap().user).collect();
        assert!(others.iter().any(|u| *u != a.user));
    }

    #[test]
    fn nothing_to_summarize_is_an_error() {
        let mut it = item(None, 0);
        it.attributes.clear();
        assert!(matches!(build_item_prompt(&it, &PromptConfig::default(), 0), Err(Error::Prompt { .. })));
        it.title = String::new();
        assert!(build_item_prompt(&it, &PromptConfig::default(), 0).is_err());
    }

    fn user(n: usize, review_every: usize) -> (UserContext, HashMap<String, String>) {
        let items: Vec<UserItem> = (0..n)
            .map(|k| UserItem {
                item: format!("i{k}"),
                title: format!("Title {k}"),
                review: (k % review_every == 0).then(|| format!("my take on {k}")),
            })
            .collect();
        let profiles = items.iter().map(|i| (i.item.clone(), format!("profile of {}", i.item))).collect();
        (UserContext { user: "u9".into(), items }, profiles)
    }

    #[test]
    fn user_prompt_samples_items() {
        let cfg = PromptConfig::default();
        let (few, prof) = user(3, 1);
        let p = build_user_prompt(&few, &prof, &cfg, 0).unwrap();
        assert_eq!(p.user.matches("Title: ").count(), 3);
        let (many, prof) = user(30, 1);
        let p = build_user_prompt(&many, &prof, &cfg, 0).unwrap();
        assert_eq!(p.user.matches("Item profile: ").count(), 10);
        assert_eq!(p, build_user_prompt(&many, &prof, &cfg, 0).unwrap());
    }

    #[test]
    fn missing_review_keeps_title_and_profile() {
        let (u, prof) = user(2, 2);
        let p = build_user_prompt(&u, &prof, &PromptConfig::default(), 0).unwrap();
        assert_eq!(
            p.user,
            "Item 1\nTitle: Title 0\nItem profile: profile of i0\nReview: my take on 0\n\n\
             Item 2\nTitle: Title 1\nItem profile: profile of i1\n"
        );
    }

    #[test]
    fn item_order_and_missing_profiles() {
        let (u, mut prof) = user(3, 1);
        prof.remove("i1");
        let err = build_user_prompt(&u, &prof, &PromptConfig::default(), 0).unwrap_err();
        assert!(matches!(err, Error::MissingItemProfile { ref item, .. } if item == "i1"));
        let empty = UserContext { user: "x".into(), items: vec![] };
        assert!(build_user_prompt(&empty, &prof, &PromptConfig::default(), 0).is_err());
    }

    #[test]
    fn budget_truncates_longest_blocks_first() {
        let mut it = item(Some(&"d".repeat(9000)), 0);
        it.title = "Short".into();
        let cfg = PromptConfig { char_budget: 500, ..Default::default() };
        let p = build_item_prompt(&it, &cfg, 0).unwrap();
        assert_eq!(p.user.chars().count(), 500);
        assert!(p.user.starts_with("Title: Short\nDescription: ddd"));
        assert!(p.user.ends_with("d…\n"));
        // several long reviews are cut to a common length, short ones kept
        let mut it = item(None, 0);
        it.reviews = ["x".repeat(3000), "ok".into(), "y".repeat(5000)]
            .into_iter()
            .map(|text| Review { user: "u".into(), text })
            .collect();
        let p = build_item_prompt(&it, &PromptConfig::default(), 0).unwrap();
        assert!(p.user.chars().count() <= 6000);
        assert!(p.user.contains("- ok\n"));
        let xs = p.user.matches('x').count();
        let ys = p.user.matches('y').count();
        assert!(xs.abs_diff(ys) <= 1 && xs > 2000, "{xs} {ys}");
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = Prompt { system: "s".into(), user: "u".into() };
        let b = Prompt { system: "s".into(), user: "v".into() };
        assert_eq!(a.fingerprint().len(), 64);
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
        let c = Prompt { system: "su".into(), user: String::new() };
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
