use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::InteractionSet;
use crate::{Error, Result};

/// One `(user, positive item, negative item)` training triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub user: u32,
    pub pos: u32,
    pub neg: u32,
}

/// Uniform triple sampler over a training set.
///
/// Users are drawn uniformly among those with at least one train item and
/// at least one item they have not interacted with; users who interacted
/// with every item can never yield a negative and are skipped.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    user_items: Vec<Vec<u32>>,
    eligible: Vec<u32>,
    n_items: u32,
}

impl BatchSampler {
    pub fn new(train: &InteractionSet) -> Result<Self> {
        let user_items = train.user_items();
        let n_items = train.n_items() as u32;
        let eligible: Vec<u32> = user_items
            .iter()
            .enumerate()
            .filter(|(_, it)| !it.is_empty() && it.len() < n_items as usize)
            .map(|(u, _)| u as u32)
            .collect();
        if eligible.is_empty() {
            return Err(Error::Empty(
                "no user has both a positive and a negative item to sample".into(),
            ));
        }
        Ok(Self {
            user_items,
            eligible,
            n_items,
        })
    }

    pub fn n_eligible(&self) -> usize {
        self.eligible.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Vec<Triple> {
        (0..batch_size)
            .map(|_| {
                let user = self.eligible[rng.gen_range(0..self.eligible.len())];
                let items = &self.user_items[user as usize];
                let pos = items[rng.gen_range(0..items.len())];
                let neg = loop {
                    let cand = rng.gen_range(0..self.n_items);
                    if items.binary_search(&cand).is_err() {
                        break cand;
                    }
                };
                Triple { user, pos, neg }
            })
            .collect()
    }
}

/// One-shot batch with a fresh seeded generator.
pub fn sample_batch(train: &InteractionSet, batch_size: usize, seed: u64) -> Result<Vec<Triple>> {
    let sampler = BatchSampler::new(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.sample(batch_size, &mut rng))
}
