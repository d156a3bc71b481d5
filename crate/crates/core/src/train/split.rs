use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitScheme {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitScheme {
    fn default() -> Self {
        Self { train: 6, val: 2, test: 2 }
    }
}

impl SplitScheme {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

/// Disjoint trial indices; each list is sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded random partition of `n_trials` trial indices. Trials beyond the
/// scheme's total are left unused.
pub fn split_trials(n_trials: usize, scheme: SplitScheme, seed: u64) -> Result<TrialSplit> {
    if scheme.train == 0 || scheme.val == 0 || scheme.test == 0 {
        return Err(Error::param("every split needs at least one trial"));
    }
    if n_trials < scheme.total() {
        return Err(Error::InsufficientData(format!(
            "{n_trials} trials cannot fill a {}/{}/{} split",
            scheme.train, scheme.val, scheme.test
        )));
    }
    let mut idx: Vec<usize> = (0..n_trials).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut take = |n: usize| {
        let mut part: Vec<usize> = idx.drain(..n).collect();
        part.sort_unstable();
        part
    };
    Ok(TrialSplit {
        train: take(scheme.train),
        val: take(scheme.val),
        test: take(scheme.test),
    })
}
