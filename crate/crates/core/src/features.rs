//! Turn-level feature vectors.
//!
//! Acoustic vectors are statistics ("functionals") of frame-level descriptor
//! channels over the frames of a turn. Lexical vectors are sentence
//! embeddings produced elsewhere; [`fallback_embed`] stands in when none are
//! available.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledDataset;
use crate::labels::UnknownLabel;
use crate::matrix::Matrix;
use crate::text::normalize_tokens;

pub const ACOUSTIC_DIM: usize = 88;
pub const LEXICAL_DIM: usize = 600;

/// |mean| below this gives a coefficient of variation of 0.
pub const CV_MEAN_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Modality {
    Acoustic,
    Lexical,
    /// Acoustic and lexical vectors concatenated.
    Fused,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Acoustic => "acoustic",
            Modality::Lexical => "lexical",
            Modality::Fused => "fused",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = UnknownLabel;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Modality::Acoustic, Modality::Lexical, Modality::Fused]
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownLabel(s.into()))
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FeatureVector {
    pub modality: Modality,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("frame matrix has no frames")]
    NoFrames,
    #[error("frame matrix has {got} values, expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite value at frame {frame}, channel `{channel}`")]
    NonFinite { frame: usize, channel: String },
    #[error("recipe references unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("unknown functional `{0}`")]
    UnknownFunctional(String),
    #[error("no features for session `{session}` turn {turn}")]
    MissingKey { session: String, turn: usize },
    #[error("feature vector for session `{session}` turn {turn} has dimension {got}, expected {expected}")]
    Dimension { session: String, turn: usize, expected: usize, got: usize },
}

/// Frames of one turn (or session): one row per frame, one column per
/// descriptor channel.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMatrix {
    channels: Vec<String>,
    frames: Matrix,
}

impl FrameMatrix {
    pub fn new(channels: Vec<String>, frames: usize, values: Vec<f64>) -> Result<Self, FeatureError> {
        let expected = frames * channels.len();
        if values.len() != expected {
            return Err(FeatureError::Shape { expected, got: values.len() });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite {
                frame: pos / channels.len(),
                channel: channels[pos % channels.len()].clone(),
            });
        }
        let width = channels.len();
        Ok(FrameMatrix { channels, frames: Matrix::from_vec(frames, width, values) })
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.frames.iter_rows().map(|r| r[j]).collect()
    }

    /// Rows `range`, as a new matrix over the same channels.
    pub fn slice(&self, range: core::ops::Range<usize>) -> FrameMatrix {
        let idx: Vec<usize> = range.collect();
        FrameMatrix { channels: self.channels.clone(), frames: self.frames.select_rows(&idx) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Functional {
    Mean,
    Cv,
    P20,
    P50,
    P80,
    RangeP20P80,
    RisingSlopeMean,
    RisingSlopeStd,
    FallingSlopeMean,
    FallingSlopeStd,
}

impl Functional {
    pub const ALL: [Functional; 10] = [
        Functional::Mean,
        Functional::Cv,
        Functional::P20,
        Functional::P50,
        Functional::P80,
        Functional::RangeP20P80,
        Functional::RisingSlopeMean,
        Functional::RisingSlopeStd,
        Functional::FallingSlopeMean,
        Functional::FallingSlopeStd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Functional::Mean => "mean",
            Functional::Cv => "cv",
            Functional::P20 => "p20",
            Functional::P50 => "p50",
            Functional::P80 => "p80",
            Functional::RangeP20P80 => "range_p20_p80",
            Functional::RisingSlopeMean => "rising_slope_mean",
            Functional::RisingSlopeStd => "rising_slope_std",
            Functional::FallingSlopeMean => "falling_slope_mean",
            Functional::FallingSlopeStd => "falling_slope_std",
        }
    }
}

impl FromStr for Functional {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Functional::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| FeatureError::UnknownFunctional(s.into()))
    }
}

/// Ordered channel -> functionals map. Output order is recipe order, then
/// functional order within a channel as listed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FunctionalRecipe {
    pub entries: Vec<(String, Vec<Functional>)>,
}

impl FunctionalRecipe {
    pub fn output_dim(&self) -> usize {
        self.entries.iter().map(|(_, f)| f.len()).sum()
    }

    /// Output column names, `channel.functional`.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.output_dim());
        for (ch, fs) in &self.entries {
            for f in fs {
                names.push(alloc::format!("{ch}.{}", f.as_str()));
            }
        }
        names
    }
}

/// Summary statistics of one channel; percentiles and slope sets are
/// computed once and shared between functionals.
struct ChannelStats {
    mean: f64,
    std: f64,
    sorted: Vec<f64>,
    rising: Vec<f64>,
    falling: Vec<f64>,
}

impl ChannelStats {
    fn new(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut rising = Vec::new();
        let mut falling = Vec::new();
        for w in values.windows(2) {
            let d = w[1] - w[0];
            if d > 0.0 {
                rising.push(d);
            } else if d < 0.0 {
                falling.push(d);
            }
        }
        ChannelStats { mean, std, sorted, rising, falling }
    }

    fn eval(&self, f: Functional) -> f64 {
        match f {
            Functional::Mean => self.mean,
            Functional::Cv => {
                if libm::fabs(self.mean) < CV_MEAN_EPSILON {
                    0.0
                } else {
                    self.std / self.mean
                }
            }
            Functional::P20 => percentile(&self.sorted, 20.0),
            Functional::P50 => percentile(&self.sorted, 50.0),
            Functional::P80 => percentile(&self.sorted, 80.0),
            Functional::RangeP20P80 => percentile(&self.sorted, 80.0) - percentile(&self.sorted, 20.0),
            Functional::RisingSlopeMean => mean_std(&self.rising).0,
            Functional::RisingSlopeStd => mean_std(&self.rising).1,
            Functional::FallingSlopeMean => mean_std(&self.falling).0,
            Functional::FallingSlopeStd => mean_std(&self.falling).1,
        }
    }
}

/// Mean and population standard deviation; `(0, 0)` when empty.
fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// Linear interpolation at rank `p (n - 1) / 100` of sorted values.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let rank = p * (n - 1) as f64 / 100.0;
            let lo = libm::floor(rank) as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = rank - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// Applies `recipe` to all frames of `frames`.
pub fn functionals(frames: &FrameMatrix, recipe: &FunctionalRecipe) -> Result<FeatureVector, FeatureError> {
    if frames.frames() == 0 {
        return Err(FeatureError::NoFrames);
    }
    let mut values = Vec::with_capacity(recipe.output_dim());
    for (channel, fs) in &recipe.entries {
        let j = frames
            .channel_index(channel)
            .ok_or_else(|| FeatureError::UnknownChannel(channel.clone()))?;
        let stats = ChannelStats::new(&frames.column(j));
        values.extend(fs.iter().map(|&f| stats.eval(f)));
    }
    Ok(FeatureVector { modality: Modality::Acoustic, values })
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Hashed bag-of-words projection. Each normalized token adds +-1 at a
/// seeded hash position; the sum is scaled by `1 / sqrt(token count)`.
///
/// Panics if `dim == 0`.
pub fn fallback_embed(text: &str, dim: usize, seed: u64) -> FeatureVector {
    assert!(dim >= 1, "embedding dimension must be positive");
    let tokens = normalize_tokens(text);
    let mut values = vec![0.0; dim];
    if tokens.is_empty() {
        return FeatureVector { modality: Modality::Lexical, values };
    }
    for t in &tokens {
        let h = fnv1a(seed, t.as_bytes());
        let idx = (h % dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        values[idx] += sign;
    }
    let scale = 1.0 / libm::sqrt(tokens.len() as f64);
    for v in &mut values {
        *v *= scale;
    }
    FeatureVector { modality: Modality::Lexical, values }
}

/// Identifies a turn across the corpus.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TurnKey {
    pub session_id: String,
    pub turn_index: usize,
}

impl TurnKey {
    pub fn new(session_id: impl Into<String>, turn_index: usize) -> Self {
        TurnKey { session_id: session_id.into(), turn_index }
    }
}

/// Fixed-dimension vectors keyed by turn.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub dim: usize,
    pub rows: BTreeMap<TurnKey, Vec<f64>>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        FeatureTable { dim, rows: BTreeMap::new() }
    }

    pub fn insert(&mut self, key: TurnKey, values: Vec<f64>) -> Result<(), FeatureError> {
        if values.len() != self.dim {
            return Err(FeatureError::Dimension {
                session: key.session_id,
                turn: key.turn_index,
                expected: self.dim,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite { frame: key.turn_index, channel: alloc::format!("v{i}") });
        }
        self.rows.insert(key, values);
        Ok(())
    }

    pub fn get(&self, session_id: &str, turn_index: usize) -> Option<&[f64]> {
        // BTreeMap lookup needs an owned key
        self.rows.get(&TurnKey::new(session_id, turn_index)).map(Vec::as_slice)
    }

    /// Rows for every sample of `dataset`, in sample order.
    pub fn design_matrix(&self, dataset: &LabeledDataset) -> Result<Matrix, FeatureError> {
        let mut data = Vec::with_capacity(dataset.len() * self.dim);
        for s in &dataset.samples {
            let row = self.get(&s.session_id, s.turn_index).ok_or_else(|| FeatureError::MissingKey {
                session: s.session_id.clone(),
                turn: s.turn_index,
            })?;
            data.extend_from_slice(row);
        }
        Ok(Matrix::from_vec(dataset.len(), self.dim, data))
    }

    /// Per-key concatenation `self ++ other`; keys missing from either side
    /// are dropped.
    pub fn concat(&self, other: &FeatureTable) -> FeatureTable {
        let mut out = FeatureTable::new(self.dim + other.dim);
        for (k, a) in &self.rows {
            if let Some(b) = other.rows.get(k) {
                let mut v = a.clone();
                v.extend_from_slice(b);
                out.rows.insert(k.clone(), v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn single(values: &[f64]) -> FrameMatrix {
        FrameMatrix::new(vec!["x".into()], values.len(), values.to_vec()).unwrap()
    }

    fn recipe(fs: &[Functional]) -> FunctionalRecipe {
        FunctionalRecipe { entries: vec![("x".into(), fs.to_vec())] }
    }

    #[test]
    fn constant_channel() {
        use Functional::*;
        let v = functionals(&single(&[2.5; 7]), &recipe(&[Mean, Cv, P50, RangeP20P80])).unwrap();
        assert_eq!(v.values, vec![2.5, 0.0, 2.5, 0.0]);
    }

    #[test]
    fn ramp_percentiles_and_cv() {
        use Functional::*;
        let v = functionals(&single(&[1.0, 2.0, 3.0, 4.0, 5.0]), &recipe(&[P20, P50, P80, Cv])).unwrap();
        // rank 0.8 -> 1.8, rank 2 -> 3, rank 3.2 -> 4.2; cv = sqrt(2)/3
        assert!((v.values[0] - 1.8).abs() < 1e-12);
        assert!((v.values[1] - 3.0).abs() < 1e-12);
        assert!((v.values[2] - 4.2).abs() < 1e-12);
        assert!((v.values[3] - 0.4714).abs() < 5e-5);
    }

    #[test]
    fn slopes_by_enumeration() {
        use Functional::*;
        let fs = [RisingSlopeMean, RisingSlopeStd, FallingSlopeMean, FallingSlopeStd];
        let v = functionals(&single(&[0.0, 2.0, 1.0, 3.0]), &recipe(&fs)).unwrap();
        assert_eq!(v.values, vec![2.0, 0.0, -1.0, 0.0]);
        // monotone signal: no falling parts
        let v = functionals(&single(&[1.0, 2.0, 4.0]), &recipe(&fs)).unwrap();
        assert_eq!(v.values, vec![1.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn single_frame() {
        let v = functionals(&single(&[3.0]), &recipe(&Functional::ALL)).unwrap();
        assert_eq!(v.values, vec![3.0, 0.0, 3.0, 3.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn errors() {
        let empty = FrameMatrix::new(vec!["x".into()], 0, vec![]).unwrap();
        assert_eq!(functionals(&empty, &recipe(&[Functional::Mean])), Err(FeatureError::NoFrames));
        let r = FunctionalRecipe { entries: vec![("y".into(), vec![Functional::Mean])] };
        assert_eq!(functionals(&single(&[1.0]), &r), Err(FeatureError::UnknownChannel("y".into())));
        assert!(FrameMatrix::new(vec!["x".into()], 2, vec![1.0, f64::NAN]).is_err());
        assert!(FrameMatrix::new(vec!["x".into(), "y".into()], 2, vec![1.0; 3]).is_err());
        assert!("median".parse::<Functional>().is_err());
    }

    #[test]
    fn fallback_embed_rules() {
        assert!(fallback_embed("", 16, 1).values.iter().all(|&v| v == 0.0));
        assert_eq!(fallback_embed("Good day", 16, 3), fallback_embed("good day!", 16, 3));
        let two = fallback_embed("good good", 64, 9);
        let one = fallback_embed("good", 64, 9);
        for (a, b) in two.values.iter().zip(&one.values) {
            assert!((a - core::f64::consts::SQRT_2 * b).abs() < 1e-12);
        }
        assert_eq!(one.values.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn table_checks_dimension_and_keys() {
        let mut t = FeatureTable::new(2);
        assert!(t.insert(TurnKey::new("s", 0), vec![1.0]).is_err());
        t.insert(TurnKey::new("s", 0), vec![1.0, 2.0]).unwrap();
        assert_eq!(t.get("s", 0), Some(&[1.0, 2.0][..]));
        let err = t.insert(TurnKey::new("s", 1), vec![1.0, f64::INFINITY]).unwrap_err();
        assert!(err.to_string().contains("non-finite"));
    }
}
