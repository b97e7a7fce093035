//! Repeated stratified k-fold cross-validation plans.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FoldError {
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error("class {class} has {count} samples, fewer than k = {k}")]
    TooFewSamples { class: u8, count: usize, k: usize },
    #[error("label at index {0} is not binary")]
    NonBinaryLabel(usize),
}

/// One train/test split of the plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub repeats: usize,
    pub folds_per_repeat: usize,
    pub seed: u64,
    pub splits: Vec<Split>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn get(&self, repeat: usize, fold: usize) -> Option<&Split> {
        self.splits
            .get(repeat * self.folds_per_repeat + fold)
            .filter(|s| s.repeat == repeat && s.fold == fold)
    }

    /// Mean test-fold size over train-fold size, used by the corrected t-test.
    pub fn test_train_ratio(&self) -> f64 {
        let (test, train) = self.splits.iter().fold((0usize, 0usize), |(a, b), s| {
            (a + s.test.len(), b + s.train.len())
        });
        test as f64 / train as f64
    }
}

/// Builds `repeats` stratified `k`-fold partitions of `0..labels.len()`.
///
/// Each repeat shuffles the members of each class (Fisher-Yates on a ChaCha8
/// stream seeded once from `seed`), concatenates the classes and deals the
/// positions round-robin over the folds. Per-fold class counts therefore differ
/// by at most one from `n_c / k`.
pub fn make_folds(labels: &[u8], repeats: usize, k: usize, seed: u64) -> Result<FoldPlan, FoldError> {
    if k < 2 {
        return Err(FoldError::InvalidK(k));
    }
    if repeats == 0 {
        return Err(FoldError::NoRepeats);
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        match l {
            0 | 1 => by_class[l as usize].push(i),
            _ => return Err(FoldError::NonBinaryLabel(i)),
        }
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < k {
            return Err(FoldError::TooFewSamples {
                class: c as u8,
                count: members.len(),
                k,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = Vec::with_capacity(repeats * k);
    for repeat in 0..repeats {
        let mut order = Vec::with_capacity(labels.len());
        for members in &by_class {
            let mut m = members.clone();
            m.shuffle(&mut rng);
            order.extend(m);
        }
        let mut assignment = alloc::vec![0usize; labels.len()];
        for (pos, &idx) in order.iter().enumerate() {
            assignment[idx] = pos % k;
        }
        for fold in 0..k {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..labels.len()).partition(|&i| assignment[i] == fold);
            splits.push(Split {
                repeat,
                fold,
                train,
                test,
            });
        }
    }
    Ok(FoldPlan {
        repeats,
        folds_per_repeat: k,
        seed,
        splits,
    })
}
