//! Seeded train / validation / test partitioning.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::seed;

pub const TRAIN_FRACTION: f64 = 0.64;
pub const VAL_FRACTION: f64 = 0.16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Split membership for records `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub seed: u64,
    /// `splits[i]` is the split of record `i`.
    pub splits: Vec<Split>,
}

impl SplitAssignment {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    /// Record indices belonging to `split`, ascending.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// `(train, val, test)` sizes.
    pub fn sizes(&self) -> (usize, usize, usize) {
        let mut out = (0, 0, 0);
        for s in &self.splits {
            match s {
                Split::Train => out.0 += 1,
                Split::Val => out.1 += 1,
                Split::Test => out.2 += 1,
            }
        }
        out
    }

    pub fn has_empty_split(&self) -> bool {
        let (a, b, c) = self.sizes();
        a == 0 || b == 0 || c == 0
    }
}

/// `(round(0.64 n), round(0.16 n), remainder)`.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = libm::round(TRAIN_FRACTION * n as f64) as usize;
    let val = libm::round(VAL_FRACTION * n as f64) as usize;
    (train, val, n - train - val)
}

pub fn split_dataset(n: usize, seed: u64) -> Result<SplitAssignment> {
    if n < 3 {
        return Err(CoreError::TooFewRecords(n));
    }
    let (train, val, _) = split_sizes(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut splits = vec![Split::Test; n];
    for (pos, &idx) in order.iter().enumerate() {
        splits[idx] = if pos < train {
            Split::Train
        } else if pos < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(SplitAssignment { seed, splits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_reported_partition_sizes() {
        for seed in [0, 1, 42, u64::MAX] {
            assert_eq!(split_dataset(117, seed).unwrap().sizes(), (75, 19, 23));
        }
    }

    #[test]
    fn three_records_leave_val_empty() {
        let a = split_dataset(3, 9).unwrap();
        assert_eq!(a.sizes(), (2, 0, 1));
        assert!(a.has_empty_split());
    }

    #[test]
    fn too_few_records() {
        assert_eq!(split_dataset(2, 0), Err(CoreError::TooFewRecords(2)));
    }

    #[test]
    fn seeds_permute_but_keep_sizes() {
        let a = split_dataset(117, 1).unwrap();
        let b = split_dataset(117, 1).unwrap();
        let c = split_dataset(117, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.splits, c.splits);
        assert_eq!(a.sizes(), c.sizes());
    }
}
