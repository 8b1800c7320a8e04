//! Per-fold model selection and evaluation.
//!
//! Within a fold every grid point is trained on the training couples and
//! checkpointed on validation UAR; the point with the highest validation UAR
//! (first in enumeration order on ties) is evaluated on the test couple.
//! Under a two-way partition scheme one model per part is selected this way,
//! using halved hidden widths, and each test turn is scored by the model of
//! its own part.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledDataset, PartitionKey, PartitionScheme};
use crate::eval::ConfusionMatrix;
use crate::folds::Fold;
use crate::grid::GridPoint;
use crate::labels::{BehaviorClass, ClassCounts, NUM_CLASSES};
use crate::matrix::Matrix;
use crate::model::{self, argmax_class, ClassWeights, DecayMode, Mlp, MlpConfig, Split, TrainSettings};
use crate::seed;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("fold {fold}, part {part}: every grid configuration failed")]
    AllConfigsFailed { fold: usize, part: PartitionKey },
    #[error("empty grid")]
    EmptyGrid,
    #[error("{rows} feature rows for {samples} samples")]
    Misaligned { rows: usize, samples: usize },
    #[error("fold {0} has no test samples")]
    EmptyTest(usize),
}

/// Features and per-sample metadata for a cross-validation run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentData {
    pub x: Matrix,
    pub labels: Vec<BehaviorClass>,
    pub couples: Vec<String>,
    pub parts: Vec<PartitionKey>,
    pub scheme: PartitionScheme,
}

impl ExperimentData {
    pub fn new(dataset: &LabeledDataset, x: Matrix, scheme: PartitionScheme) -> Result<Self, RunError> {
        if x.rows() != dataset.len() {
            return Err(RunError::Misaligned { rows: x.rows(), samples: dataset.len() });
        }
        Ok(ExperimentData {
            x,
            labels: dataset.labels(),
            couples: dataset.samples.iter().map(|s| s.couple_id.clone()).collect(),
            parts: dataset.samples.iter().map(|s| scheme.key(s)).collect(),
            scheme,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn rows_where(&self, couples: &BTreeSet<&str>, part: PartitionKey) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.parts[i] == part && couples.contains(self.couples[i].as_str()))
            .collect()
    }

    fn counts(&self, rows: &[usize]) -> ClassCounts {
        rows.iter().map(|&i| self.labels[i]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RunSettings {
    pub max_epochs: usize,
    pub patience: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub decay_mode: DecayMode,
    /// Root of every init and shuffle seed in the run.
    pub seed: u64,
    /// Halve hidden widths for per-part models under two-way schemes.
    pub halve_partition_models: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings { max_epochs: 100, patience: 10, decay_mode: DecayMode::Plateau, seed: 0, halve_partition_models: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ConfigFailure {
    pub grid_index: usize,
    pub error: String,
}

/// The model chosen for one part of one fold.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PartSelection {
    pub part: PartitionKey,
    pub grid_index: usize,
    /// The grid point as trained; hidden widths are already halved for
    /// per-part models.
    pub point: GridPoint,
    pub params: usize,
    pub val_uar: f64,
    pub best_epoch: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub test_samples: usize,
    pub failures: Vec<ConfigFailure>,
    /// The selected checkpoint; not serialized with reports.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub model: Option<Mlp>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TestPrediction {
    /// Row in the experiment data.
    pub row: usize,
    pub truth: BehaviorClass,
    pub pred: BehaviorClass,
    pub probs: [f64; NUM_CLASSES],
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FoldResult {
    pub fold_index: usize,
    pub test_couple: String,
    pub parts: Vec<PartSelection>,
    pub confusion: ConfusionMatrix,
    pub test_uar: f64,
    pub predictions: Vec<TestPrediction>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "status", rename_all = "snake_case"))]
pub enum FoldOutcome {
    Completed(FoldResult),
    Skipped { fold_index: usize, test_couple: String, reason: String },
}

impl FoldOutcome {
    pub fn completed(&self) -> Option<&FoldResult> {
        match self {
            FoldOutcome::Completed(r) => Some(r),
            FoldOutcome::Skipped { .. } => None,
        }
    }

    pub fn fold_index(&self) -> usize {
        match self {
            FoldOutcome::Completed(r) => r.fold_index,
            FoldOutcome::Skipped { fold_index, .. } => *fold_index,
        }
    }
}

/// Hidden widths used for the models of `scheme`.
pub fn hidden_for(scheme: PartitionScheme, hidden: &[usize], settings: &RunSettings) -> Vec<usize> {
    if scheme != PartitionScheme::None && settings.halve_partition_models {
        model::halve_widths(hidden)
    } else {
        hidden.to_vec()
    }
}

struct Candidate {
    grid_index: usize,
    model: Mlp,
    val_uar: f64,
    best_epoch: usize,
}

/// Trains every grid point for one part and keeps the best on validation.
#[allow(clippy::too_many_arguments)]
fn select_model(
    data: &ExperimentData,
    fold_index: usize,
    part_ord: usize,
    train_rows: &[usize],
    val_rows: &[usize],
    grid: &[GridPoint],
    settings: &RunSettings,
    failures: &mut Vec<ConfigFailure>,
) -> Option<Candidate> {
    let x_train = data.x.select_rows(train_rows);
    let y_train: Vec<BehaviorClass> = train_rows.iter().map(|&i| data.labels[i]).collect();
    let x_val = data.x.select_rows(val_rows);
    let y_val: Vec<BehaviorClass> = val_rows.iter().map(|&i| data.labels[i]).collect();
    let train_counts = data.counts(train_rows);

    let mut best: Option<Candidate> = None;
    for (gi, point) in grid.iter().enumerate() {
        let path = [fold_index as u64, part_ord as u64, gi as u64];
        let config = MlpConfig::new(
            data.x.cols(),
            &hidden_for(data.scheme, &point.hidden, settings),
            seed::derive(settings.seed, &[path[0], path[1], path[2], 0]),
        );
        let train_settings = TrainSettings {
            max_epochs: settings.max_epochs,
            patience: settings.patience,
            shuffle_seed: seed::derive(settings.seed, &[path[0], path[1], path[2], 1]),
        };
        let outcome = ClassWeights::from_counts(point.weight_method, &train_counts)
            .and_then(|w| Ok((w, Mlp::init(config)?)))
            .and_then(|(w, m)| {
                model::train(
                    m,
                    Split::new(&x_train, &y_train),
                    Split::new(&x_val, &y_val),
                    &point.optimizer_config(settings.decay_mode),
                    &w,
                    &train_settings,
                )
            });
        match outcome {
            Ok(t) => {
                if best.as_ref().is_none_or(|b| t.best_val_uar > b.val_uar) {
                    best = Some(Candidate {
                        grid_index: gi,
                        model: t.model,
                        val_uar: t.best_val_uar,
                        best_epoch: t.best_epoch,
                    });
                }
            }
            Err(e) => failures.push(ConfigFailure { grid_index: gi, error: e.to_string() }),
        }
    }
    best
}

/// Runs model selection and testing for one fold.
pub fn run_fold(fold: &Fold, data: &ExperimentData, grid: &[GridPoint], settings: &RunSettings) -> Result<FoldOutcome, RunError> {
    if grid.is_empty() {
        return Err(RunError::EmptyGrid);
    }
    let train_set: BTreeSet<&str> = fold.train_couples.iter().map(String::as_str).collect();
    let val_set: BTreeSet<&str> = fold.val_couples.iter().map(String::as_str).collect();
    let test_set: BTreeSet<&str> = [fold.test_couple.as_str()].into_iter().collect();

    let keys = data.scheme.keys();
    let mut plans = Vec::new();
    for (ord, &key) in keys.iter().enumerate() {
        let test_rows = data.rows_where(&test_set, key);
        if test_rows.is_empty() {
            continue;
        }
        let train_rows = data.rows_where(&train_set, key);
        let val_rows = data.rows_where(&val_set, key);
        for (name, rows) in [("train", &train_rows), ("validation", &val_rows)] {
            let missing: Vec<BehaviorClass> = data.counts(rows).missing().collect();
            if !missing.is_empty() {
                return Ok(FoldOutcome::Skipped {
                    fold_index: fold.index,
                    test_couple: fold.test_couple.clone(),
                    reason: format!("part {key}: {name} split lacks {missing:?}"),
                });
            }
        }
        plans.push((ord, key, train_rows, val_rows, test_rows));
    }
    if plans.is_empty() {
        return Err(RunError::EmptyTest(fold.index));
    }

    let mut parts = Vec::new();
    let mut predictions = Vec::new();
    for (ord, key, train_rows, val_rows, test_rows) in plans {
        let mut failures = Vec::new();
        let chosen = select_model(data, fold.index, ord, &train_rows, &val_rows, grid, settings, &mut failures)
            .ok_or(RunError::AllConfigsFailed { fold: fold.index, part: key })?;
        let x_test = data.x.select_rows(&test_rows);
        let probs = chosen.model.forward(&x_test).expect("dimension checked in training");
        for (k, &row) in test_rows.iter().enumerate() {
            let p = probs.row(k);
            predictions.push(TestPrediction {
                row,
                truth: data.labels[row],
                pred: argmax_class(p),
                probs: [p[0], p[1], p[2]],
            });
        }
        let mut point = grid[chosen.grid_index].clone();
        point.hidden = chosen.model.config().hidden.clone();
        parts.push(PartSelection {
            part: key,
            grid_index: chosen.grid_index,
            params: model::count_params(chosen.model.config()).expect("valid config"),
            point,
            val_uar: chosen.val_uar,
            best_epoch: chosen.best_epoch,
            train_samples: train_rows.len(),
            val_samples: val_rows.len(),
            test_samples: test_rows.len(),
            failures,
            model: Some(chosen.model),
        });
    }
    predictions.sort_by_key(|p| p.row);
    let mut confusion = ConfusionMatrix::default();
    for p in &predictions {
        confusion.add(p.truth, p.pred);
    }
    let test_uar = confusion.uar().map_err(|_| RunError::EmptyTest(fold.index))?;
    Ok(FoldOutcome::Completed(FoldResult {
        fold_index: fold.index,
        test_couple: fold.test_couple.clone(),
        parts,
        confusion,
        test_uar,
        predictions,
    }))
}

/// Mean and population standard deviation of fold UARs.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub folds: usize,
}

pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(Aggregate { mean, std: libm::sqrt(var), folds: values.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FusionMode {
    /// Concatenated feature vectors trained as a single modality.
    FeatureConcat,
    /// Arg-max of the averaged class posteriors of two trained systems.
    PosteriorMean,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("posterior sets differ in length: {0} vs {1}")]
pub struct Misaligned(pub usize, pub usize);

/// Decision-level fusion; ties resolve to the lower class index.
pub fn fuse_posteriors(a: &[[f64; NUM_CLASSES]], b: &[[f64; NUM_CLASSES]]) -> Result<Vec<BehaviorClass>, Misaligned> {
    if a.len() != b.len() {
        return Err(Misaligned(a.len(), b.len()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(pa, pb)| {
            let mean: [f64; NUM_CLASSES] = core::array::from_fn(|k| (pa[k] + pb[k]) / 2.0);
            argmax_class(&mean)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use BehaviorClass::*;

    #[test]
    fn fusion_rules() {
        let a = [[0.6, 0.2, 0.2]];
        let b = [[0.2, 0.6, 0.2]];
        assert_eq!(fuse_posteriors(&a, &b).unwrap(), alloc::vec![Hostile]);
        let same = [[0.1, 0.2, 0.7], [0.5, 0.3, 0.2]];
        assert_eq!(fuse_posteriors(&same, &same).unwrap(), alloc::vec![Positive, Hostile]);
        assert_eq!(fuse_posteriors(&a, &[]), Err(Misaligned(1, 0)));
    }

    #[test]
    fn aggregate_matches_hand_values() {
        let a = aggregate(&[0.5, 0.7]).unwrap();
        assert!((a.mean - 0.6).abs() < 1e-15);
        assert!((a.std - 0.1).abs() < 1e-15);
        assert!(aggregate(&[]).is_none());
    }

    #[test]
    fn hidden_halving_only_for_two_way_schemes() {
        let s = RunSettings::default();
        assert_eq!(hidden_for(PartitionScheme::None, &[128, 64, 32], &s), alloc::vec![128, 64, 32]);
        assert_eq!(hidden_for(PartitionScheme::Gender, &[128, 64, 32], &s), alloc::vec![64, 32, 16]);
        let off = RunSettings { halve_partition_models: false, ..s };
        assert_eq!(hidden_for(PartitionScheme::Role, &[50], &off), alloc::vec![50]);
    }
}
