use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Edge, InteractionSet, SplitSet};
use crate::{Error, Result};

/// Returns the training set extended with `round(ratio * |train|)` fake
/// interactions, drawn uniformly from pairs absent from every split.
/// Added edges carry `noise = true`.
pub fn inject_noise(split: &SplitSet, ratio: f64, seed: u64) -> Result<InteractionSet> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidInput(format!("noise ratio {ratio} outside [0, 1]")));
    }
    let train = &split.train;
    let count = (ratio * train.len() as f64).round() as usize;
    if count == 0 {
        return Ok(train.clone());
    }

    let (nu, ni) = (train.n_users() as u64, train.n_items() as u64);
    let mut present: HashSet<(u32, u32)> = train.pair_set();
    present.extend(split.validation.pair_set());
    present.extend(split.test.pair_set());
    let available = (nu * ni).saturating_sub(present.len() as u64);
    if count as u64 > available {
        return Err(Error::InvalidInput(format!(
            "requested {count} noise interactions but only {available} absent pairs exist"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<(u32, u32)> = if (count as u64) * 2 <= available {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let pair = (rng.gen_range(0..nu) as u32, rng.gen_range(0..ni) as u32);
            if present.insert(pair) {
                out.push(pair);
            }
        }
        out
    } else {
        // dense regime: enumerate the complement and sample without replacement
        let mut absent: Vec<(u32, u32)> = (0..nu as u32)
            .flat_map(|u| (0..ni as u32).map(move |v| (u, v)))
            .filter(|p| !present.contains(p))
            .collect();
        let (chosen, _) = absent.partial_shuffle(&mut rng, count);
        chosen.to_vec()
    };

    let mut out = train.clone();
    out.edges.extend(picked.into_iter().map(|(u, v)| Edge {
        noise: true,
        ..Edge::new(u, v)
    }));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{split_interactions, SPLIT_RATIOS};
    use proptest::prelude::*;

    fn split_with_train(train: InteractionSet) -> SplitSet {
        let empty = InteractionSet {
            ids: train.ids.clone(),
            edges: vec![],
        };
        SplitSet {
            train,
            validation: empty.clone(),
            test: empty,
        }
    }

    #[test]
    fn five_percent_of_hundred() {
        let pairs: Vec<(u32, u32)> = (0..100).map(|k| (k / 10, k % 10)).collect();
        let split = split_with_train(InteractionSet::from_indices(20, 10, &pairs));
        let out = inject_noise(&split, 0.05, 1).unwrap();
        assert_eq!(out.len(), 105);
        assert_eq!(out.noise_count(), 5);
        out.validate().unwrap();
    }

    #[test]
    fn zero_ratio_is_identity() {
        let split = split_with_train(InteractionSet::from_indices(2, 3, &[(0, 0), (1, 2)]));
        assert_eq!(inject_noise(&split, 0.0, 9).unwrap(), split.train);
    }

    #[test]
    fn exhausted_pairs_error() {
        let split = split_with_train(InteractionSet::from_indices(
            2,
            2,
            &[(0, 0), (0, 1), (1, 0), (1, 1)],
        ));
        assert!(matches!(
            inject_noise(&split, 0.25, 0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn dense_regime_samples_remaining_pairs() {
        let split = split_with_train(InteractionSet::from_indices(2, 3, &[(0, 0), (0, 1), (1, 0)]));
        let out = inject_noise(&split, 1.0, 4).unwrap();
        assert_eq!(out.noise_count(), 3);
        assert_eq!(out.pair_set().len(), 6);
    }

    proptest! {
        #[test]
        fn adds_exact_count_without_duplicates(
            edges in proptest::collection::vec((0u32..10, 0u32..15), 5..60),
            ratio in 0.0f64..0.5,
            seed in any::<u64>(),
        ) {
            let set = InteractionSet::from_indices(10, 15, &edges);
            let split = split_interactions(&set, SPLIT_RATIOS, seed).unwrap();
            let out = inject_noise(&split, ratio, seed).unwrap();
            let want = (ratio * split.train.len() as f64).round() as usize;
            prop_assert_eq!(out.len(), split.train.len() + want);
            prop_assert_eq!(out.noise_count(), want);
            out.validate().unwrap();
            let heldout: HashSet<_> = split.validation.pair_set().union(&split.test.pair_set()).copied().collect();
            for e in out.edges.iter().filter(|e| e.noise) {
                prop_assert!(!heldout.contains(&(e.user, e.item)));
            }
            prop_assert_eq!(inject_noise(&split, ratio, seed).unwrap(), out);
        }
    }
}
