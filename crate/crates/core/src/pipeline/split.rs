//! Parent-level train/test partitioning.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::series::TimeSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("nothing to split")]
    EmptyInput,
    #[error("split ratio {0} is not in (0, 1)")]
    InvalidRatio(f64),
    #[error("train parent override {requested} exceeds {available} parents")]
    InvalidOverride { requested: usize, available: usize },
}

/// Which parents go to training. Parents are sorted, shuffled with a
/// ChaCha8 stream seeded by `seed`, and the first `n_train` taken, where
/// `n_train` is the override if given, else `round(ratio * parents)`.
pub fn split_parents(
    parent_ids: &[String],
    ratio: f64,
    seed: u64,
    train_override: Option<usize>,
) -> Result<(Vec<String>, Vec<String>), SplitError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(SplitError::InvalidRatio(ratio));
    }
    let mut parents: Vec<String> = parent_ids
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if parents.is_empty() {
        return Err(SplitError::EmptyInput);
    }
    let n_train = match train_override {
        Some(k) if k > parents.len() => {
            return Err(SplitError::InvalidOverride {
                requested: k,
                available: parents.len(),
            })
        }
        Some(k) => k,
        None => (ratio * parents.len() as f64).round() as usize,
    };
    parents.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = parents.split_off(n_train);
    parents.sort();
    let mut test = test;
    test.sort();
    Ok((parents, test))
}

/// Splits series so every augmentation lands on its parent's side.
pub fn split_train_test(
    series: &[TimeSeries],
    ratio: f64,
    seed: u64,
    train_override: Option<usize>,
) -> Result<(Vec<TimeSeries>, Vec<TimeSeries>), SplitError> {
    let parents: Vec<String> = series.iter().map(|s| s.parent_id().to_string()).collect();
    let (train_ids, _) = split_parents(&parents, ratio, seed, train_override)?;
    let train_set: BTreeSet<&str> = train_ids.iter().map(String::as_str).collect();
    let (train, test): (Vec<_>, Vec<_>) = series
        .iter()
        .cloned()
        .partition(|s| train_set.contains(s.parent_id()));
    Ok((train, test))
}

/// Number of series per parent id.
pub fn family_sizes(series: &[TimeSeries]) -> BTreeMap<String, usize> {
    let mut sizes = BTreeMap::new();
    for s in series {
        *sizes.entry(s.parent_id().to_string()).or_insert(0) += 1;
    }
    sizes
}
