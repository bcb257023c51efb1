//! All-rank top-N evaluation.
//!
//! Every user with at least one ground-truth item is ranked against the full
//! item catalogue minus the items masked for that user (train items for
//! validation, train and validation items for test).

use std::cmp::Ordering;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::align::{SemanticStore, COSINE_EPS};
use crate::corpus::SplitSet;
use crate::par;

pub const DEFAULT_NS: [usize; 3] = [5, 10, 20];

#[derive(Clone, Debug, PartialEq)]
pub struct RankingResult {
    pub ns: Vec<usize>,
    /// Evaluated users, ascending.
    pub users: Vec<u32>,
    /// Top `max(ns)` items per evaluated user, best first.
    pub ranked: Vec<Vec<u32>>,
    /// Sorted ground truth per evaluated user.
    pub truth: Vec<Vec<u32>>,
}

fn rank_order(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Top-N lists from a dense `I x J` score matrix.
///
/// `exclude[u]` and `truth[u]` are item lists for user `u` (any order).
/// Ties are broken by ascending item index.
pub fn rank_all(
    scores: ArrayView2<'_, f64>,
    exclude: &[Vec<u32>],
    truth: &[Vec<u32>],
    ns: &[usize],
) -> RankingResult {
    let max_n = ns.iter().copied().max().unwrap_or(0);
    let n_items = scores.ncols();
    let users: Vec<u32> = (0..scores.nrows())
        .filter(|&u| truth.get(u).is_some_and(|t| !t.is_empty()))
        .map(|u| u as u32)
        .collect();

    let ranked = par::map_indices(users.len(), |k| {
        let u = users[k] as usize;
        let row = scores.row(u);
        let mut masked = vec![false; n_items];
        if let Some(ex) = exclude.get(u) {
            for &v in ex {
                masked[v as usize] = true;
            }
        }
        let mut cands: Vec<(f64, u32)> = (0..n_items)
            .filter(|&v| !masked[v])
            .map(|v| (row[v], v as u32))
            .collect();
        let take = max_n.min(cands.len());
        if take > 0 && take < cands.len() {
            cands.select_nth_unstable_by(take - 1, rank_order);
            cands.truncate(take);
        }
        cands.sort_unstable_by(rank_order);
        cands.truncate(take);
        cands.into_iter().map(|(_, v)| v).collect::<Vec<u32>>()
    });

    let truth = users
        .iter()
        .map(|&u| {
            let mut t = truth[u as usize].clone();
            t.sort_unstable();
            t.dedup();
            t
        })
        .collect();
    RankingResult {
        ns: ns.to_vec(),
        users,
        ranked,
        truth,
    }
}

fn hits<'a>(top: &'a [u32], truth: &'a [u32]) -> impl Iterator<Item = usize> + 'a {
    top.iter()
        .enumerate()
        .filter(move |(_, v)| truth.binary_search(v).is_ok())
        .map(|(r, _)| r)
}

/// Mean over evaluated users of `|top-N ∩ truth| / |truth|`.
pub fn recall_at_n(result: &RankingResult, n: usize) -> f64 {
    assert!(result.ns.contains(&n), "N = {n} was not ranked");
    if result.users.is_empty() {
        return 0.0;
    }
    let total: f64 = result
        .ranked
        .iter()
        .zip(&result.truth)
        .map(|(top, truth)| {
            let top = &top[..n.min(top.len())];
            hits(top, truth).count() as f64 / truth.len() as f64
        })
        .sum();
    total / result.users.len() as f64
}

/// Mean NDCG with binary relevance and `1 / log2(rank + 1)` discounts.
pub fn ndcg_at_n(result: &RankingResult, n: usize) -> f64 {
    assert!(result.ns.contains(&n), "N = {n} was not ranked");
    if result.users.is_empty() {
        return 0.0;
    }
    let total: f64 = result
        .ranked
        .iter()
        .zip(&result.truth)
        .map(|(top, truth)| {
            let top = &top[..n.min(top.len())];
            let dcg: f64 = hits(top, truth).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
            let idcg: f64 = (0..truth.len().min(n))
                .map(|r| 1.0 / ((r + 2) as f64).log2())
                .sum();
            dcg / idcg
        })
        .sum();
    total / result.users.len() as f64
}

/// Cosine similarity between every user and item semantic vector.
pub fn semantic_only_scores(sem: &SemanticStore) -> Array2<f64> {
    let norm = |m: &Array2<f64>| -> Vec<f64> {
        m.rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt().max(COSINE_EPS))
            .collect()
    };
    let (un, vn) = (norm(&sem.users), norm(&sem.items));
    let mut out = Array2::zeros((sem.users.nrows(), sem.items.nrows()));
    par::for_each_row_mut(&mut out, |u, mut row| {
        let su = sem.user(u);
        for (v, slot) in row.iter_mut().enumerate() {
            *slot = su.dot(&sem.item(v)) / (un[u] * vn[v]);
        }
    });
    out
}

/// `N -> value` pairs, serialized as a JSON object keyed by the decimal `N`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricTable(pub Vec<(usize, f64)>);

impl MetricTable {
    pub fn get(&self, n: usize) -> Option<f64> {
        self.0.iter().find(|(k, _)| *k == n).map(|(_, v)| *v)
    }
}

impl Serialize for MetricTable {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (n, v) in &self.0 {
            map.serialize_entry(&n.to_string(), v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for MetricTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = MetricTable;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map from N to metric value")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut m: A) -> Result<MetricTable, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = m.next_entry::<String, f64>()? {
                    let n = k.parse().map_err(serde::de::Error::custom)?;
                    out.push((n, v));
                }
                out.sort_by_key(|(n, _)| *n);
                Ok(MetricTable(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recall: MetricTable,
    pub ndcg: MetricTable,
    pub users_evaluated: usize,
}

impl MetricsReport {
    pub fn from_ranking(result: &RankingResult) -> Self {
        let mut ns = result.ns.clone();
        ns.sort_unstable();
        ns.dedup();
        Self {
            recall: MetricTable(ns.iter().map(|&n| (n, recall_at_n(result, n))).collect()),
            ndcg: MetricTable(ns.iter().map(|&n| (n, ndcg_at_n(result, n))).collect()),
            users_evaluated: result.users.len(),
        }
    }

    pub fn recall_at(&self, n: usize) -> f64 {
        self.recall.get(n).unwrap_or(f64::NAN)
    }

    pub fn ndcg_at(&self, n: usize) -> f64 {
        self.ndcg.get(n).unwrap_or(f64::NAN)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<8}", "N");
        let _ = writeln!(s, "{:>10}{:>10}", "Recall", "NDCG");
        for (n, r) in &self.recall.0 {
            let _ = writeln!(s, "{:<8}{:>10.4}{:>10.4}", n, r, self.ndcg_at(*n));
        }
        let _ = writeln!(s, "users evaluated: {}", self.users_evaluated);
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Validation,
    Test,
}

/// Item masks and ground truth for one split. Validation masks train items;
/// test masks train and validation items. Injected noise never counts as
/// ground truth.
pub fn split_targets(split: &SplitSet, which: EvalSplit) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let mut exclude = split.train.user_items();
    let truth = match which {
        EvalSplit::Validation => split.validation.user_items_clean(),
        EvalSplit::Test => {
            for (ex, va) in exclude.iter_mut().zip(split.validation.user_items()) {
                ex.extend(va);
            }
            split.test.user_items_clean()
        }
    };
    (exclude, truth)
}

/// Scores, ranks and summarizes in one go.
pub fn evaluate_scores(
    scores: ArrayView2<'_, f64>,
    split: &SplitSet,
    which: EvalSplit,
    ns: &[usize],
) -> MetricsReport {
    let (exclude, truth) = split_targets(split, which);
    MetricsReport::from_ranking(&rank_all(scores, &exclude, &truth, ns))
}
