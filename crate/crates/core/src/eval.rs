//! Confusion matrices, unweighted average recall, the prior-sampling chance
//! baseline and tolerance-window scoring.
//!
//! UAR averages recall over the classes that have at least one true sample;
//! absent classes are left out of the average rather than counted as zero.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng as _;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::labels::{BehaviorClass, NUM_CLASSES};
use crate::seed;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no folds to evaluate")]
    NoFolds,
    #[error("fold {0} has no samples")]
    EmptyFold(usize),
    #[error("priors must be non-negative and sum to 1, got {0:?}")]
    BadPriors([f64; NUM_CLASSES]),
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("window size {0} is not an odd positive integer")]
    BadWindow(usize),
    #[error("window sizes must be strictly ascending")]
    UnsortedWindows,
    #[error("{truths} truths but {preds} predictions")]
    LengthMismatch { truths: usize, preds: usize },
}

/// Rows are truth, columns are prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ConfusionMatrix(pub [[u64; NUM_CLASSES]; NUM_CLASSES]);

impl ConfusionMatrix {
    pub fn from_pairs(truth: &[BehaviorClass], pred: &[BehaviorClass]) -> Result<Self, EvalError> {
        if truth.len() != pred.len() {
            return Err(EvalError::LengthMismatch { truths: truth.len(), preds: pred.len() });
        }
        let mut cm = ConfusionMatrix::default();
        for (&t, &p) in truth.iter().zip(pred) {
            cm.add(t, p);
        }
        Ok(cm)
    }

    #[inline]
    pub fn add(&mut self, truth: BehaviorClass, pred: BehaviorClass) {
        self.0[truth.index()][pred.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn support(&self, class: BehaviorClass) -> u64 {
        self.0[class.index()].iter().sum()
    }

    /// `None` when the class has no true samples.
    pub fn recall(&self, class: BehaviorClass) -> Option<f64> {
        let support = self.support(class);
        (support > 0).then(|| self.0[class.index()][class.index()] as f64 / support as f64)
    }

    /// `None` when the class was never predicted.
    pub fn precision(&self, class: BehaviorClass) -> Option<f64> {
        let j = class.index();
        let predicted: u64 = self.0.iter().map(|row| row[j]).sum();
        (predicted > 0).then(|| self.0[j][j] as f64 / predicted as f64)
    }

    pub fn recalls(&self) -> [Option<f64>; NUM_CLASSES] {
        BehaviorClass::ALL.map(|c| self.recall(c))
    }

    /// Mean recall over present classes.
    pub fn uar(&self) -> Result<f64, EvalError> {
        let present: Vec<f64> = self.recalls().into_iter().flatten().collect();
        if present.is_empty() {
            return Err(EvalError::EmptyMatrix);
        }
        Ok(present.iter().sum::<f64>() / present.len() as f64)
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.0.iter_mut().flatten().zip(other.0.iter().flatten()) {
            *a += b;
        }
    }
}

pub fn uar(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    cm.uar()
}

/// Convenience for label slices.
pub fn uar_of(truth: &[BehaviorClass], pred: &[BehaviorClass]) -> Result<f64, EvalError> {
    ConfusionMatrix::from_pairs(truth, pred)?.uar()
}

/// Monte-Carlo estimate of the chance UAR.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ChanceEstimate {
    /// Mean over repetitions of the fold-averaged UAR.
    pub mean: f64,
    /// Population standard deviation of the per-repetition values.
    pub std: f64,
    /// `std / sqrt(repetitions)`.
    pub std_error: f64,
    pub repetitions: usize,
}

fn check_priors(priors: [f64; NUM_CLASSES]) -> Result<(), EvalError> {
    let sum: f64 = priors.iter().sum();
    if priors.iter().any(|p| !p.is_finite() || *p < 0.0) || libm::fabs(sum - 1.0) > 1e-9 {
        return Err(EvalError::BadPriors(priors));
    }
    Ok(())
}

fn sample_class(priors: &[f64; NUM_CLASSES], u: f64) -> BehaviorClass {
    let mut acc = 0.0;
    for c in BehaviorClass::ALL {
        acc += priors[c.index()];
        if u < acc {
            return c;
        }
    }
    // u lands past the last cumulative step only through rounding
    BehaviorClass::ALL
        .into_iter()
        .rev()
        .find(|c| priors[c.index()] > 0.0)
        .unwrap_or(BehaviorClass::Constructive)
}

/// Expected UAR of labels drawn i.i.d. from `priors`, estimated by
/// simulation: each repetition labels every fold's test samples at random
/// and averages fold UARs.
pub fn chance_uar(
    folds: &[Vec<BehaviorClass>],
    priors: [f64; NUM_CLASSES],
    repetitions: usize,
    seed: u64,
) -> Result<ChanceEstimate, EvalError> {
    if folds.is_empty() {
        return Err(EvalError::NoFolds);
    }
    if let Some(i) = folds.iter().position(Vec::is_empty) {
        return Err(EvalError::EmptyFold(i));
    }
    if repetitions == 0 {
        return Err(EvalError::NoRepetitions);
    }
    check_priors(priors)?;
    let mut rng = seed::rng(seed);
    let mut per_rep = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let mut sum = 0.0;
        for fold in folds {
            let mut cm = ConfusionMatrix::default();
            for &t in fold {
                cm.add(t, sample_class(&priors, rng.random::<f64>()));
            }
            sum += cm.uar()?;
        }
        per_rep.push(sum / folds.len() as f64);
    }
    let n = repetitions as f64;
    let mean = per_rep.iter().sum::<f64>() / n;
    let var = per_rep.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    Ok(ChanceEstimate { mean, std, std_error: std / libm::sqrt(n), repetitions })
}

/// Odd window size `W = K + 1`, tolerating `K / 2` neighbors on each side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WindowSpec(usize);

impl WindowSpec {
    pub const EXACT: WindowSpec = WindowSpec(1);

    pub fn new(size: usize) -> Result<Self, EvalError> {
        if size % 2 == 1 {
            Ok(WindowSpec(size))
        } else {
            Err(EvalError::BadWindow(size))
        }
    }

    pub fn size(self) -> usize {
        self.0
    }

    pub fn half_width(self) -> usize {
        (self.0 - 1) / 2
    }
}

/// Neighborhood options for window scoring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WindowOptions {
    /// Only the same speaker's turns count as neighbors.
    pub same_speaker: bool,
}

/// One scored turn. `session` and `speaker` are opaque ordinals; `position`
/// is the turn's place in its session sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ScoredTurn {
    pub session: u32,
    pub speaker: u32,
    pub position: usize,
    pub truth: BehaviorClass,
    pub pred: BehaviorClass,
}

/// Turns grouped by session and sorted by position, keeping original
/// indices.
fn by_session(items: &[ScoredTurn]) -> BTreeMap<u32, Vec<usize>> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, t) in items.iter().enumerate() {
        groups.entry(t.session).or_default().push(i);
    }
    for g in groups.values_mut() {
        g.sort_by_key(|&i| items[i].position);
    }
    groups
}

/// For each item: whether its truth class is predicted somewhere within the
/// window. Only meaningful for target-class truths.
fn window_hits(items: &[ScoredTurn], spec: WindowSpec, opts: WindowOptions) -> Vec<bool> {
    let mut hits = alloc::vec![false; items.len()];
    let h = spec.half_width();
    for group in by_session(items).values() {
        for (k, &i) in group.iter().enumerate() {
            let me = &items[i];
            if me.pred == me.truth {
                hits[i] = true;
                continue;
            }
            if h == 0 || !me.truth.is_target() {
                continue;
            }
            let near = |&&j: &&usize| {
                let other = &items[j];
                other.pred == me.truth && (!opts.same_speaker || other.speaker == me.speaker)
            };
            let left = group[..k]
                .iter()
                .rev()
                .take_while(|&&j| me.position - items[j].position <= h)
                .any(|j| near(&j));
            let right = group[k + 1..]
                .iter()
                .take_while(|&&j| items[j].position - me.position <= h)
                .any(|j| near(&j));
            hits[i] = left || right;
        }
    }
    hits
}

/// Confusion matrix where a Hostile or Positive truth counts as recalled if
/// any turn of the same session within the window carries that prediction.
/// Constructive truths are scored exactly. Windows never cross sessions.
pub fn windowed_confusion(items: &[ScoredTurn], spec: WindowSpec, opts: WindowOptions) -> ConfusionMatrix {
    let hits = window_hits(items, spec, opts);
    let mut cm = ConfusionMatrix::default();
    for (t, hit) in items.iter().zip(hits) {
        let pred = if hit { t.truth } else { t.pred };
        cm.add(t.truth, pred);
    }
    cm
}

/// Share of target-class predictions with a matching truth within the
/// window. Reported alongside windowed recall, never folded into UAR.
pub fn windowed_precision(items: &[ScoredTurn], spec: WindowSpec, opts: WindowOptions) -> [Option<f64>; NUM_CLASSES] {
    // swap roles: a prediction is "recalled" by a nearby truth
    let swapped: Vec<ScoredTurn> = items
        .iter()
        .map(|t| ScoredTurn { truth: t.pred, pred: t.truth, ..*t })
        .collect();
    let cm = windowed_confusion(&swapped, spec, opts);
    BehaviorClass::ALL.map(|c| if c.is_target() { cm.recall(c) } else { None })
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FnCorrection {
    pub false_negatives: usize,
    pub corrected: usize,
    /// `None` when there are no false negatives.
    pub rate: Option<f64>,
}

/// Among Hostile/Positive truths mispredicted at `W = 1`, the share
/// recalled under `spec`.
pub fn fn_correction_rate(items: &[ScoredTurn], spec: WindowSpec, opts: WindowOptions) -> FnCorrection {
    let hits = window_hits(items, spec, opts);
    let mut false_negatives = 0;
    let mut corrected = 0;
    for (t, hit) in items.iter().zip(hits) {
        if t.truth.is_target() && t.pred != t.truth {
            false_negatives += 1;
            corrected += usize::from(hit);
        }
    }
    let rate = (false_negatives > 0).then(|| corrected as f64 / false_negatives as f64);
    FnCorrection { false_negatives, corrected, rate }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CurveRow {
    pub window: usize,
    pub recall: [Option<f64>; NUM_CLASSES],
    pub uar: f64,
}

/// Per-class windowed recall and UAR for each window size.
pub fn recall_curve(items: &[ScoredTurn], windows: &[usize], opts: WindowOptions) -> Result<Vec<CurveRow>, EvalError> {
    if windows.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EvalError::UnsortedWindows);
    }
    windows
        .iter()
        .map(|&w| {
            let cm = windowed_confusion(items, WindowSpec::new(w)?, opts);
            Ok(CurveRow { window: w, recall: cm.recalls(), uar: cm.uar()? })
        })
        .collect()
}
