use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{read_edges_tsv, write_edges_tsv};
use super::{IdMaps, InteractionSet};
use crate::{Error, Result};

/// Train / validation / test proportions.
pub const SPLIT_RATIOS: (u32, u32, u32) = (3, 1, 1);

pub const TRAIN_FILE: &str = "train.tsv";
pub const VALID_FILE: &str = "valid.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const IDMAP_FILE: &str = "idmap.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: InteractionSet,
    pub validation: InteractionSet,
    pub test: InteractionSet,
}

/// Per-user edge counts `(train, validation, test)` for `n` interactions.
///
/// Train takes `floor(0.6 n)`, validation `round(0.2 n)` (half up) and test
/// the remainder. A user left without a train edge gets one moved back from
/// test, then from validation.
pub fn split_counts(n: usize, ratios: (u32, u32, u32)) -> (usize, usize, usize) {
    let total = (ratios.0 + ratios.1 + ratios.2) as usize;
    let train = n * ratios.0 as usize / total;
    let valid = ((2 * n * ratios.1 as usize + total) / (2 * total)).min(n - train);
    let mut test = n - train - valid;
    let (mut train, mut valid) = (train, valid);
    if train == 0 && n > 0 {
        if test > 0 {
            test -= 1;
        } else {
            valid -= 1;
        }
        train = 1;
    }
    (train, valid, test)
}

/// Randomly partitions each user's interactions at the given ratios.
pub fn split_interactions(
    set: &InteractionSet,
    ratios: (u32, u32, u32),
    seed: u64,
) -> Result<SplitSet> {
    if ratios.0 == 0 {
        return Err(Error::InvalidInput("train ratio must be positive".into()));
    }
    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); set.n_users()];
    for (idx, e) in set.edges.iter().enumerate() {
        per_user[e.user as usize].push(idx);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // 0 = train, 1 = validation, 2 = test
    let mut assign = vec![0u8; set.edges.len()];
    for edges in &mut per_user {
        edges.shuffle(&mut rng);
        let (tr, va, _) = split_counts(edges.len(), ratios);
        for (pos, &idx) in edges.iter().enumerate() {
            assign[idx] = if pos < tr {
                0
            } else if pos < tr + va {
                1
            } else {
                2
            };
        }
    }

    let part = |which: u8| InteractionSet {
        ids: set.ids.clone(),
        edges: set
            .edges
            .iter()
            .zip(&assign)
            .filter(|(_, &a)| a == which)
            .map(|(e, _)| e.clone())
            .collect(),
    };
    Ok(SplitSet {
        train: part(0),
        validation: part(1),
        test: part(2),
    })
}

impl SplitSet {
    pub fn ids(&self) -> &IdMaps {
        &self.train.ids
    }

    pub fn n_users(&self) -> usize {
        self.train.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.train.n_items()
    }

    /// Writes `train.tsv`, `valid.tsv`, `test.tsv` and `idmap.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_edges_tsv(&self.train, &dir.join(TRAIN_FILE))?;
        write_edges_tsv(&self.validation, &dir.join(VALID_FILE))?;
        write_edges_tsv(&self.test, &dir.join(TEST_FILE))?;
        let path = dir.join(IDMAP_FILE);
        let json = serde_json::to_string_pretty(self.ids())?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(IDMAP_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let ids: IdMaps = serde_json::from_str(&text)?;
        let load = |name: &str| -> Result<InteractionSet> {
            Ok(InteractionSet {
                ids: ids.clone(),
                edges: read_edges_tsv(&dir.join(name), &ids)?,
            })
        };
        let split = SplitSet {
            train: load(TRAIN_FILE)?,
            validation: load(VALID_FILE)?,
            test: load(TEST_FILE)?,
        };
        if split.train.is_empty() {
            return Err(Error::Empty(format!("{} has no train edges", dir.display())));
        }
        Ok(split)
    }

    /// Checks disjointness and the train-coverage invariant.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.validation.validate()?;
        self.test.validate()?;
        let train = self.train.pair_set();
        let valid = self.validation.pair_set();
        for e in &self.validation.edges {
            if train.contains(&(e.user, e.item)) {
                return Err(Error::InvalidInput("validation overlaps train".into()));
            }
        }
        let train_users: std::collections::HashSet<u32> =
            self.train.edges.iter().map(|e| e.user).collect();
        for e in &self.test.edges {
            if train.contains(&(e.user, e.item)) || valid.contains(&(e.user, e.item)) {
                return Err(Error::InvalidInput("test overlaps train/validation".into()));
            }
            if !train_users.contains(&e.user) {
                return Err(Error::InvalidInput(format!(
                    "user {} has test edges but no train edge",
                    e.user
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn ratio_arithmetic() {
        assert_eq!(split_counts(10, SPLIT_RATIOS), (6, 2, 2));
        assert_eq!(split_counts(5, SPLIT_RATIOS), (3, 1, 1));
        assert_eq!(split_counts(4, SPLIT_RATIOS), (2, 1, 1));
        assert_eq!(split_counts(3, SPLIT_RATIOS), (1, 1, 1));
        assert_eq!(split_counts(2, SPLIT_RATIOS), (1, 0, 1));
        assert_eq!(split_counts(1, SPLIT_RATIOS), (1, 0, 0));
        assert_eq!(split_counts(0, SPLIT_RATIOS), (0, 0, 0));
    }

    #[test]
    fn per_user_counts() {
        let pairs: Vec<(u32, u32)> = (0..10).map(|v| (0, v)).chain((0..4).map(|v| (1, v))).collect();
        let set = InteractionSet::from_indices(2, 10, &pairs);
        let split = split_interactions(&set, SPLIT_RATIOS, 7).unwrap();
        let count = |s: &InteractionSet, u| s.edges.iter().filter(|e| e.user == u).count();
        assert_eq!(
            (count(&split.train, 0), count(&split.validation, 0), count(&split.test, 0)),
            (6, 2, 2)
        );
        assert_eq!(
            (count(&split.train, 1), count(&split.validation, 1), count(&split.test, 1)),
            (2, 1, 1)
        );
    }

    #[test]
    fn save_load_round_trip() {
        let pairs: Vec<(u32, u32)> = (0..4).flat_map(|u| (0..6).map(move |v| (u, (u + v) % 7))).collect();
        let set = InteractionSet::from_indices(5, 7, &pairs);
        let split = split_interactions(&set, SPLIT_RATIOS, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        split.save(dir.path()).unwrap();
        let back = SplitSet::load(dir.path()).unwrap();
        assert_eq!(back, split);
        // isolated entity survives through the id map
        assert_eq!(back.n_users(), 5);
    }

    proptest! {
        #[test]
        fn split_is_partition(
            edges in proptest::collection::vec((0u32..12, 0u32..20), 1..150),
            seed in any::<u64>(),
        ) {
            let set = InteractionSet::from_indices(12, 20, &edges);
            let split = split_interactions(&set, SPLIT_RATIOS, seed).unwrap();
            split.validate().unwrap();
            let all: HashSet<_> = set.pair_set();
            let (a, b, c) = (split.train.pair_set(), split.validation.pair_set(), split.test.pair_set());
            prop_assert_eq!(a.len() + b.len() + c.len(), all.len());
            let union: HashSet<_> = a.union(&b).chain(c.iter()).copied().collect();
            prop_assert_eq!(union, all);
            let again = split_interactions(&set, SPLIT_RATIOS, seed).unwrap();
            prop_assert_eq!(again, split);
        }
    }
}
