//! Leave-one-couple-out fold planning with an inner couple-level
//! train/validation split.
//!
//! Each fold holds out one couple for testing. The remaining couples are
//! shuffled and split: `max(1, floor(0.2 * n))` go to validation, the rest
//! to training. The split is redrawn until both sides contain every class.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::labels::{BehaviorClass, ClassCounts};
use crate::seed;

pub const DEFAULT_MAX_RETRIES: usize = 1000;
pub const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FoldError {
    #[error("need at least 3 couples, got {0}")]
    TooFewCouples(usize),
    #[error("class {0} has no samples in the corpus")]
    MissingClass(BehaviorClass),
    #[error("fold for couple `{test_couple}`: no train/validation split covers {deficient:?}")]
    Unsatisfiable { test_couple: String, deficient: Vec<BehaviorClass> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Fold {
    pub index: usize,
    pub test_couple: String,
    pub train_couples: Vec<String>,
    pub val_couples: Vec<String>,
    /// Number of draws until the coverage constraint held.
    pub attempts: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// Number of validation couples for `remaining` non-test couples.
pub fn validation_size(remaining: usize) -> usize {
    let n = libm::floor(VALIDATION_FRACTION * remaining as f64) as usize;
    n.max(1)
}

fn coverage(couples: &[(String, ClassCounts)], members: &[usize]) -> ClassCounts {
    members.iter().map(|&i| couples[i].1).sum()
}

/// Plans the fold that tests `couples[test]`. `couples` must be in a fixed
/// order (sorted by id, as [`crate::corpus::LabeledDataset::couple_counts`]
/// returns them).
pub fn plan_fold(
    couples: &[(String, ClassCounts)],
    test: usize,
    split_seed: u64,
    max_retries: usize,
) -> Result<Fold, FoldError> {
    if couples.len() < 3 {
        return Err(FoldError::TooFewCouples(couples.len()));
    }
    let test_couple = couples[test].0.clone();
    let mut rest: Vec<usize> = (0..couples.len()).filter(|&i| i != test).collect();

    // A class needs at least two remaining couples to reach both sides.
    let structural: Vec<BehaviorClass> = BehaviorClass::ALL
        .into_iter()
        .filter(|&c| rest.iter().filter(|&&i| couples[i].1.get(c) > 0).count() < 2)
        .collect();
    if !structural.is_empty() {
        return Err(FoldError::Unsatisfiable { test_couple, deficient: structural });
    }

    let n_val = validation_size(rest.len());
    let mut rng = seed::rng_at(split_seed, &[test as u64]);
    let mut deficient = ClassCounts::default();
    for attempt in 1..=max_retries.max(1) {
        rest.shuffle(&mut rng);
        let (val, train) = rest.split_at(n_val);
        let (vc, tc) = (coverage(couples, val), coverage(couples, train));
        if vc.covers_all() && tc.covers_all() {
            let mut train_couples: Vec<String> = train.iter().map(|&i| couples[i].0.clone()).collect();
            let mut val_couples: Vec<String> = val.iter().map(|&i| couples[i].0.clone()).collect();
            train_couples.sort();
            val_couples.sort();
            return Ok(Fold { index: test, test_couple, train_couples, val_couples, attempts: attempt });
        }
        for c in vc.missing().chain(tc.missing()) {
            deficient[c] += 1;
        }
    }
    Err(FoldError::Unsatisfiable {
        test_couple,
        deficient: BehaviorClass::ALL.into_iter().filter(|&c| deficient.get(c) > 0).collect(),
    })
}

/// One fold per couple, in the given couple order. Fails on the first fold
/// whose split cannot be satisfied.
pub fn make_fold_plan(couples: &[(String, ClassCounts)], split_seed: u64) -> Result<FoldPlan, FoldError> {
    make_fold_plan_with(couples, split_seed, DEFAULT_MAX_RETRIES)
}

pub fn make_fold_plan_with(
    couples: &[(String, ClassCounts)],
    split_seed: u64,
    max_retries: usize,
) -> Result<FoldPlan, FoldError> {
    if couples.len() < 3 {
        return Err(FoldError::TooFewCouples(couples.len()));
    }
    let total: ClassCounts = couples.iter().map(|c| c.1).sum();
    if let Some(c) = total.missing().next() {
        return Err(FoldError::MissingClass(c));
    }
    let folds = (0..couples.len())
        .map(|i| plan_fold(couples, i, split_seed, max_retries))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FoldPlan { folds })
}
