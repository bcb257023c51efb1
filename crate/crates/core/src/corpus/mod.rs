//! Interaction data: ingestion, k-core filtering, per-user splitting, noise
//! injection and the normalized bipartite adjacency used by the backbones.
//!
//! Users and items live in separate dense index spaces. Graph code places
//! them in one node space of size `I + J` with users first.

mod adjacency;
mod io;
mod kcore;
mod noise;
mod split;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use adjacency::NormalizedAdjacency;
pub use io::{load_interactions, parse_interactions, write_edges_tsv, Format};
pub use kcore::kcore_filter;
pub use noise::inject_noise;
pub use split::{split_counts, split_interactions, SplitSet, SPLIT_RATIOS};

pub fn build_normalized_adjacency(train: &InteractionSet) -> crate::Result<NormalizedAdjacency> {
    NormalizedAdjacency::build(train)
}

/// Bidirectional map between raw string ids and dense indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct IdMap {
    raw: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `raw`, assigning the next free index when unseen.
    pub fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&idx) = self.index.get(raw) {
            return idx;
        }
        let idx = self.raw.len() as u32;
        self.raw.push(raw.to_owned());
        self.index.insert(raw.to_owned(), idx);
        idx
    }

    pub fn get(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    pub fn raw(&self, idx: u32) -> &str {
        &self.raw[idx as usize]
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.raw.iter().map(String::as_str)
    }
}

impl From<Vec<String>> for IdMap {
    fn from(raw: Vec<String>) -> Self {
        let index = raw
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i as u32))
            .collect();
        Self { raw, index }
    }
}

impl From<IdMap> for Vec<String> {
    fn from(map: IdMap) -> Self {
        map.raw
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMaps {
    pub users: IdMap,
    pub items: IdMap,
}

impl IdMaps {
    /// Total node count `I + J` of the bipartite graph.
    pub fn n_nodes(&self) -> usize {
        self.users.len() + self.items.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub user: u32,
    pub item: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<i64>,
    /// Injected by [`inject_noise`]; never part of evaluation ground truth.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub noise: bool,
}

impl Edge {
    pub fn new(user: u32, item: u32) -> Self {
        Self {
            user,
            item,
            rating: None,
            ts: None,
            noise: false,
        }
    }
}

/// A set of observed user-item interactions over a fixed id space.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionSet {
    pub ids: IdMaps,
    pub edges: Vec<Edge>,
}

impl InteractionSet {
    /// Builds a set from raw `(user, item)` id pairs in first-seen order.
    /// Duplicates are dropped.
    pub fn from_pairs<U: AsRef<str>, V: AsRef<str>>(pairs: &[(U, V)]) -> Self {
        let mut ids = IdMaps::default();
        let mut seen = HashSet::new();
        let mut edges = Vec::new();
        for (u, v) in pairs {
            let u = ids.users.intern(u.as_ref());
            let v = ids.items.intern(v.as_ref());
            if seen.insert((u, v)) {
                edges.push(Edge::new(u, v));
            }
        }
        Self { ids, edges }
    }

    /// Builds a set over an anonymous `n_users x n_items` index space
    /// (ids `u0..`, `i0..`).
    pub fn from_indices(n_users: usize, n_items: usize, pairs: &[(u32, u32)]) -> Self {
        let ids = IdMaps {
            users: (0..n_users).map(|u| format!("u{u}")).collect::<Vec<_>>().into(),
            items: (0..n_items).map(|i| format!("i{i}")).collect::<Vec<_>>().into(),
        };
        let mut seen = HashSet::new();
        let edges = pairs
            .iter()
            .filter(|p| seen.insert(**p))
            .map(|&(u, v)| Edge::new(u, v))
            .collect();
        Self { ids, edges }
    }

    pub fn n_users(&self) -> usize {
        self.ids.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.ids.items.len()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Sorted item lists per user.
    pub fn user_items(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.n_users()];
        for e in &self.edges {
            out[e.user as usize].push(e.item);
        }
        for items in &mut out {
            items.sort_unstable();
            items.dedup();
        }
        out
    }

    /// Same as [`user_items`](Self::user_items) but skipping injected noise edges.
    pub fn user_items_clean(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.n_users()];
        for e in self.edges.iter().filter(|e| !e.noise) {
            out[e.user as usize].push(e.item);
        }
        for items in &mut out {
            items.sort_unstable();
        }
        out
    }

    pub fn pair_set(&self) -> HashSet<(u32, u32)> {
        self.edges.iter().map(|e| (e.user, e.item)).collect()
    }

    pub fn noise_count(&self) -> usize {
        self.edges.iter().filter(|e| e.noise).count()
    }

    /// Checks index ranges and pair uniqueness.
    pub fn validate(&self) -> crate::Result<()> {
        let (nu, ni) = (self.n_users() as u32, self.n_items() as u32);
        let mut seen = HashSet::with_capacity(self.edges.len());
        for e in &self.edges {
            if e.user >= nu || e.item >= ni {
                return Err(crate::Error::InvalidInput(format!(
                    "edge ({}, {}) out of range {nu}x{ni}",
                    e.user, e.item
                )));
            }
            if !seen.insert((e.user, e.item)) {
                return Err(crate::Error::InvalidInput(format!(
                    "duplicate edge ({}, {})",
                    e.user, e.item
                )));
            }
        }
        Ok(())
    }
}
