//! Item-then-user profile generation with bounded concurrency, caching,
//! fallbacks and a run report; and embedding of finished profiles.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use semrec_core::align::{EntityKind, Provenance, SemanticRecord, SemanticStore};
use semrec_core::corpus::IdMaps;

use crate::cache::Cache;
use crate::client::ServiceClient;
use crate::profile::{generate_profile, Profile};
use crate::prompt::{build_item_prompt, build_user_prompt, Prompt, PromptConfig};
use crate::text::{ItemText, UserContext};
use crate::{Error, Result};

/// Model name recorded on pseudo-profiles built without the service.
pub const FALLBACK_MODEL: &str = "fallback";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub prompt: PromptConfig,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityStatus {
    Succeeded,
    /// Generation failed; a pseudo-profile stands in.
    Failed,
    Cached,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityOutcome {
    pub id: String,
    pub kind: EntityKind,
    pub status: EntityStatus,
    pub retries: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One outcome per entity, items first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub succeeded: usize,
    pub failed: usize,
    pub cached: usize,
    pub entities: Vec<EntityOutcome>,
}

impl RunReport {
    fn push(&mut self, o: EntityOutcome) {
        match o.status {
            EntityStatus::Succeeded => self.succeeded += 1,
            EntityStatus::Failed => self.failed += 1,
            EntityStatus::Cached => self.cached += 1,
        }
        self.entities.push(o);
    }
}

/// A prompt that was (or would have been) sent for one entity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub kind: EntityKind,
    pub fp: String,
    pub system: String,
    pub user: String,
}

#[derive(Clone, Debug, Default)]
pub struct ProfileRun {
    /// Items first, then users, in input order.
    pub profiles: Vec<Profile>,
    pub prompts: Vec<PromptRecord>,
    pub report: RunReport,
}

/// Maps `f` over `inputs` on at most `limit` threads, keeping input order.
fn bounded_map<T: Sync, R: Send>(inputs: &[T], limit: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new(inputs.iter().map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..limit.clamp(1, inputs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(input) = inputs.get(i) else { break };
                let r = f(input);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every input is processed"))
        .collect()
}

/// Deterministic stand-in built from the raw item text.
fn item_fallback(item: &ItemText, fp: String, why: &str) -> Profile {
    let mut text = item.title.clone();
    if let Some(d) = item.description() {
        text.push_str(". ");
        text.push_str(d);
    }
    for (k, v) in &item.attributes {
        text.push_str(&format!(". {k}: {v}"));
    }
    Profile {
        id: item.id.clone(),
        kind: EntityKind::Item,
        profile: text,
        reasoning: format!("pseudo-profile from raw item text ({why})"),
        model: FALLBACK_MODEL.into(),
        fp,
    }
}

fn user_fallback(user: &UserContext, fp: String, why: &str) -> Profile {
    let titles: Vec<&str> = user.items.iter().map(|i| i.title.as_str()).collect();
    let profile = if titles.is_empty() {
        "no interaction history".to_owned()
    } else {
        format!("Interacted with: {}", titles.join("; "))
    };
    Profile {
        id: user.user.clone(),
        kind: EntityKind::User,
        profile,
        reasoning: format!("pseudo-profile from interaction titles ({why})"),
        model: FALLBACK_MODEL.into(),
        fp,
    }
}

struct Attempt {
    profile: Profile,
    prompt: Option<PromptRecord>,
    outcome: EntityOutcome,
}

fn attempt(
    client: &ServiceClient,
    cache: Option<&Cache>,
    id: &str,
    kind: EntityKind,
    prompt: Result<Prompt>,
    fallback: impl FnOnce(String, &str) -> Profile,
) -> Result<Attempt> {
    let outcome = |status, retries, error| EntityOutcome {
        id: id.to_owned(),
        kind,
        status,
        retries,
        error,
    };
    let prompt = match prompt {
        Ok(p) => p,
        // nothing to send: pseudo-profile right away
        Err(e @ Error::Prompt { .. }) => {
            let msg = e.to_string();
            return Ok(Attempt {
                profile: fallback(String::new(), &msg),
                prompt: None,
                outcome: outcome(EntityStatus::Failed, 0, Some(msg)),
            });
        }
        Err(e) => return Err(e),
    };
    let fp = prompt.fingerprint();
    let record = PromptRecord {
        id: id.to_owned(),
        kind,
        fp: fp.clone(),
        system: prompt.system.clone(),
        user: prompt.user.clone(),
    };
    let model = &client.config().chat_model;
    if let Some(mut hit) = cache.and_then(|c| c.profile(&fp, model)) {
        hit.id = id.to_owned();
        hit.kind = kind;
        return Ok(Attempt {
            profile: hit,
            prompt: Some(record),
            outcome: outcome(EntityStatus::Cached, 0, None),
        });
    }
    match generate_profile(client, id, kind, &prompt) {
        Ok(g) => {
            if let Some(c) = cache {
                c.put_profile(&g.profile)?;
            }
            Ok(Attempt {
                profile: g.profile,
                prompt: Some(record),
                outcome: outcome(EntityStatus::Succeeded, g.retries, None),
            })
        }
        Err(e @ Error::Unparseable { attempts, .. }) => {
            let retries = attempts - 1;
            let msg = e.to_string();
            log::warn!("{kind} {id}: {msg}; using a pseudo-profile");
            Ok(Attempt {
                profile: fallback(fp, &msg),
                prompt: Some(record),
                outcome: outcome(EntityStatus::Failed, retries, Some(msg)),
            })
        }
        // the service itself is failing: surface it rather than hide it behind fallbacks
        Err(e) => Err(e),
    }
}

/// Generates item profiles, then user profiles from them. Every entity ends
/// up with a profile: entities whose replies never parse (or that have
/// nothing to prompt with) get a deterministic pseudo-profile and are marked
/// failed in the report. Transport and HTTP errors abort the run.
pub fn generate_profiles(
    items: &[ItemText],
    users: &[UserContext],
    client: &ServiceClient,
    cfg: &GenerationConfig,
    cache: Option<&Cache>,
) -> Result<ProfileRun> {
    let limit = client.config().max_in_flight;
    let item_runs = bounded_map(items, limit, |it| {
        attempt(client, cache, &it.id, EntityKind::Item, build_item_prompt(it, &cfg.prompt, cfg.seed), |fp, why| {
            item_fallback(it, fp, why)
        })
    });
    let mut run = ProfileRun::default();
    let absorb = |run: &mut ProfileRun, a: Attempt| {
        run.profiles.push(a.profile);
        run.prompts.extend(a.prompt);
        run.report.push(a.outcome);
    };
    for a in item_runs {
        absorb(&mut run, a?);
    }
    let item_profiles: HashMap<String, String> =
        run.profiles.iter().map(|p| (p.id.clone(), p.profile.clone())).collect();
    let user_runs = bounded_map(users, limit, |u| {
        let prompt = build_user_prompt(u, &item_profiles, &cfg.prompt, cfg.seed);
        attempt(client, cache, &u.user, EntityKind::User, prompt, |fp, why| user_fallback(u, fp, why))
    });
    for a in user_runs {
        absorb(&mut run, a?);
    }
    Ok(run)
}

/// Embeds profile texts in batches and assembles the semantic store laid
/// out by `ids`. Every entity needs exactly one profile, and every returned
/// vector must have the same length.
pub fn embed_profiles(
    profiles: &[Profile],
    ids: &IdMaps,
    client: &ServiceClient,
    cache: Option<&Cache>,
) -> Result<SemanticStore> {
    let mut by_entity: HashMap<(EntityKind, &str), &Profile> = HashMap::new();
    for p in profiles {
        p.validate()?;
        if by_entity.insert((p.kind, p.id.as_str()), p).is_some() {
            return Err(Error::Embedding(format!("{} {} has more than one profile", p.kind, p.id)));
        }
    }
    let wanted: Vec<(EntityKind, &str)> = ids
        .users
        .iter()
        .map(|u| (EntityKind::User, u))
        .chain(ids.items.iter().map(|v| (EntityKind::Item, v)))
        .collect();
    let mut texts = Vec::with_capacity(wanted.len());
    for key in &wanted {
        let p = by_entity
            .get(key)
            .ok_or_else(|| Error::Embedding(format!("{} {} has no profile", key.0, key.1)))?;
        texts.push(p.profile.clone());
    }

    let model = client.config().embedding_model.clone();
    let mut vectors: Vec<Option<Vec<f64>>> = texts
        .iter()
        .map(|t| cache.and_then(|c| c.embedding(&model, t)))
        .collect();
    let todo: Vec<usize> = (0..texts.len()).filter(|&i| vectors[i].is_none()).collect();
    let batches: Vec<&[usize]> = todo.chunks(client.config().embedding_batch.max(1)).collect();
    let results = bounded_map(&batches, client.config().max_in_flight, |batch| {
        let input: Vec<String> = batch.iter().map(|&i| texts[i].clone()).collect();
        client.embed(&input)
    });
    for (batch, res) in batches.iter().zip(results) {
        for (&i, v) in batch.iter().zip(res?) {
            if let Some(c) = cache {
                c.put_embedding(&model, &texts[i], &v)?;
            }
            vectors[i] = Some(v);
        }
    }

    let dim = vectors[0].as_ref().map_or(0, Vec::len);
    let mut records = Vec::with_capacity(wanted.len());
    for ((kind, id), v) in wanted.into_iter().zip(vectors) {
        let v = v.expect("every text is embedded");
        if v.len() != dim || dim == 0 {
            return Err(Error::Embedding(format!(
                "{kind} {id} has an embedding of length {}, expected {dim}",
                v.len()
            )));
        }
        records.push(SemanticRecord {
            id: id.to_owned(),
            kind,
            vec: v.into_iter().map(|x| x as f32).collect(),
        });
    }
    Ok(SemanticStore::from_records(
        records,
        ids,
        Provenance {
            model,
            generated_at: String::new(),
        },
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_map_keeps_order_and_limit() {
        let inputs: Vec<u64> = (0..40).collect();
        let live = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        let out = bounded_map(&inputs, 4, |&x| {
            let now = live.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(2));
            live.fetch_sub(1, Ordering::SeqCst);
            x * x
        });
        assert_eq!(out, inputs.iter().map(|x| x * x).collect::<Vec<_>>());
        assert!(peak.load(Ordering::SeqCst) <= 4);
        assert!(bounded_map(&[] as &[u8], 4, |&x| x).is_empty());
    }

    #[test]
    fn fallbacks_are_deterministic_and_non_empty() {
        let it = ItemText {
            id: "b".into(),
            title: "T".into(),
            description: None,
            attributes: vec![("k".into(), "v".into())],
            reviews: vec![],
        };
        let a = item_fallback(&it, "fp".into(), "x");
        assert_eq!(a, item_fallback(&it, "fp".into(), "x"));
        assert_eq!(a.profile, "T. k: v");
        a.validate().unwrap();
        let u = UserContext { user: "u".into(), items: vec![] };
        user_fallback(&u, String::new(), "x").validate().unwrap();
    }
}
