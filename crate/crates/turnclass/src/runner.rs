//! Leave-one-couple-out experiments over one or more partition schemes.
//!
//! Folds run in parallel on a dedicated thread pool; every seed is derived
//! from the configured root seed and the fold and grid indices, and results
//! are reduced in fold order, so reports do not depend on the number of
//! worker threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use turnclass_core::corpus::{class_counts, merge_labels, Indexing, LabeledDataset, PartitionScheme};
use turnclass_core::crossval::{
    aggregate, fuse_posteriors, run_fold, Aggregate, ExperimentData, FoldOutcome, FoldResult, FusionMode,
    PartSelection, RunError, RunSettings, TestPrediction,
};
use turnclass_core::eval::{
    chance_uar, fn_correction_rate, recall_curve, ChanceEstimate, ConfusionMatrix, CurveRow, ScoredTurn, WindowOptions,
    WindowSpec,
};
use turnclass_core::features::{FeatureTable, Modality};
use turnclass_core::folds::{plan_fold, Fold, DEFAULT_MAX_RETRIES};
use turnclass_core::grid::{GridPoint, GridSpace};
use turnclass_core::model::{count_params, halve_widths, DecayMode, MlpConfig, OptimizerKind, WeightMethod};
use turnclass_core::{seed, BehaviorClass, ClassCounts, Matrix};

use crate::io::{self, IoError, LabelRow, Manifest};

pub const DEFAULT_WINDOWS: [usize; 6] = [1, 3, 5, 7, 9, 11];

/// Replacements for individual grid axes; unset axes keep the modality's
/// default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridOverrides {
    pub hidden: Option<Vec<Vec<usize>>>,
    pub batch_sizes: Option<Vec<usize>>,
    pub weight_methods: Option<Vec<WeightMethod>>,
    pub decay_factors: Option<Vec<Option<f64>>>,
    pub optimizers: Option<Vec<OptimizerKind>>,
    pub learning_rates: Option<Vec<f64>>,
}

impl GridOverrides {
    pub fn apply(&self, mut space: GridSpace) -> GridSpace {
        if let Some(v) = &self.hidden {
            space.hidden = v.clone();
        }
        if let Some(v) = &self.batch_sizes {
            space.batch_sizes = v.clone();
        }
        if let Some(v) = &self.weight_methods {
            space.weight_methods = v.clone();
        }
        if let Some(v) = &self.decay_factors {
            space.decay_factors = v.clone();
        }
        if let Some(v) = &self.optimizers {
            space.optimizers = v.clone();
        }
        if let Some(v) = &self.learning_rates {
            space.learning_rates = v.clone();
        }
        space
    }
}

fn default_schemes() -> Vec<PartitionScheme> {
    vec![PartitionScheme::None]
}
fn default_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    10
}
fn default_true() -> bool {
    true
}
fn default_windows() -> Vec<usize> {
    DEFAULT_WINDOWS.to_vec()
}
fn default_repetitions() -> usize {
    10_000
}

/// Experiment configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Corpus manifest; relative to the config file.
    pub manifest: PathBuf,
    pub modality: Modality,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<PartitionScheme>,
    /// How the two modalities are combined when `modality` is fused.
    #[serde(default = "default_fusion")]
    pub fusion: FusionMode,
    #[serde(default)]
    pub grid: GridOverrides,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub decay_mode: DecayMode,
    #[serde(default = "default_true")]
    pub halve_partition_models: bool,
    #[serde(default)]
    pub indexing: Indexing,
    #[serde(default = "default_windows")]
    pub windows: Vec<usize>,
    /// Only count neighboring predictions of the same speaker.
    #[serde(default)]
    pub same_speaker_windows: bool,
    #[serde(default = "default_repetitions")]
    pub chance_repetitions: usize,
    /// Output directory; relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub save_checkpoints: bool,
}

fn default_fusion() -> FusionMode {
    FusionMode::FeatureConcat
}

impl ExperimentConfig {
    /// A config with defaults for everything but the inputs.
    pub fn new(manifest: impl Into<PathBuf>, modality: Modality) -> Self {
        ExperimentConfig {
            manifest: manifest.into(),
            modality,
            schemes: default_schemes(),
            fusion: default_fusion(),
            grid: GridOverrides::default(),
            seed: 0,
            max_epochs: default_epochs(),
            patience: default_patience(),
            decay_mode: DecayMode::default(),
            halve_partition_models: true,
            indexing: Indexing::default(),
            windows: default_windows(),
            same_speaker_windows: false,
            chance_repetitions: default_repetitions(),
            out: None,
            save_checkpoints: false,
        }
    }

    /// Reads a config and resolves its paths against the file's directory.
    pub fn read(path: &Path) -> Result<Self, IoError> {
        let mut c: ExperimentConfig = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        c.manifest = base.join(&c.manifest);
        c.out = c.out.map(|o| base.join(o));
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.schemes.is_empty() {
            return Err("no partition schemes".into());
        }
        if self.max_epochs == 0 {
            return Err("max_epochs must be positive".into());
        }
        if self.chance_repetitions == 0 {
            return Err("chance_repetitions must be positive".into());
        }
        for &w in &self.windows {
            WindowSpec::new(w).map_err(|e| e.to_string())?;
        }
        for m in self.modalities() {
            let space = self.grid_space(m);
            if space.is_empty() {
                return Err(format!("{m} grid is empty"));
            }
            for h in &space.hidden {
                MlpConfig::new(1, h, 0).validate().map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }

    /// Modalities trained separately: both for decision-level fusion.
    fn modalities(&self) -> Vec<Modality> {
        match (self.modality, self.fusion) {
            (Modality::Fused, FusionMode::PosteriorMean) => vec![Modality::Acoustic, Modality::Lexical],
            (m, _) => vec![m],
        }
    }

    pub fn grid_space(&self, modality: Modality) -> GridSpace {
        self.grid.apply(GridSpace::default_for(modality))
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            root: self.seed,
            split: seed::derive(self.seed, &[0]),
            train: seed::derive(self.seed, &[1]),
            chance: seed::derive(self.seed, &[2]),
        }
    }

    fn settings(&self) -> RunSettings {
        RunSettings {
            max_epochs: self.max_epochs,
            patience: self.patience,
            decay_mode: self.decay_mode,
            seed: self.seeds().train,
            halve_partition_models: self.halve_partition_models,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub root: u64,
    pub split: u64,
    pub train: u64,
    pub chance: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Parameter counts of one hidden layout as a full model and as a per-part
/// model with halved widths.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamAccount {
    pub modality: Modality,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub params: usize,
    pub halved_hidden: Vec<usize>,
    pub halved_params: usize,
}

pub fn param_accounts(modality: Modality, input_dim: usize, space: &GridSpace) -> Vec<ParamAccount> {
    space
        .hidden
        .iter()
        .map(|h| {
            let halved = halve_widths(h);
            ParamAccount {
                modality,
                input_dim,
                hidden: h.clone(),
                params: count_params(&MlpConfig::new(input_dim, h, 0)).unwrap_or(0),
                halved_params: count_params(&MlpConfig::new(input_dim, &halved, 0)).unwrap_or(0),
                halved_hidden: halved,
            }
        })
        .collect()
}

/// One fold of a scheme, without per-turn predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold_index: usize,
    pub test_couple: String,
    pub status: FoldStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_uar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<SelectedModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldStatus {
    Completed,
    /// A part's train or validation split lacks a class.
    Skipped,
    /// No train/validation split covers every class.
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedModel {
    pub modality: Modality,
    #[serde(flatten)]
    pub selection: PartSelection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowFnRate {
    pub window: usize,
    pub false_negatives: usize,
    pub corrected: usize,
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: PartitionScheme,
    pub folds: Vec<FoldSummary>,
    pub completed: usize,
    pub skipped: usize,
    pub infeasible: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<Aggregate>,
    /// Sum of the confusion matrices of completed folds.
    pub pooled_confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chance: Option<ChanceEstimate>,
    pub curve: Vec<CurveRow>,
    pub fn_correction: Vec<WindowFnRate>,
    pub params: Vec<ParamAccount>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub modality: Modality,
    pub input_dims: BTreeMap<Modality, usize>,
    pub samples: usize,
    pub class_counts: ClassCounts,
    pub couples: usize,
    pub grid_sizes: BTreeMap<Modality, usize>,
    pub schemes: Vec<SchemeReport>,
}

/// Per-turn outputs of one scheme, for the prediction files.
#[derive(Clone, Debug, Default)]
pub struct SchemePredictions {
    pub rows: Vec<LabelRow>,
    pub checkpoints: Vec<(usize, String, Modality, turnclass_core::model::Mlp)>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub predictions: Vec<SchemePredictions>,
    pub truth: Vec<LabelRow>,
}

struct Inputs {
    dataset: LabeledDataset,
    x: BTreeMap<Modality, Matrix>,
}

fn feature_table(manifest: &Manifest, modality: Modality) -> Result<FeatureTable, ExperimentError> {
    let path = match modality {
        Modality::Acoustic => &manifest.features.acoustic,
        Modality::Lexical => &manifest.features.lexical,
        Modality::Fused => {
            let a = feature_table(manifest, Modality::Acoustic)?;
            let l = feature_table(manifest, Modality::Lexical)?;
            return Ok(a.concat(&l));
        }
    };
    let path = path
        .as_ref()
        .ok_or_else(|| ExperimentError::Invalid(format!("manifest lists no {modality} feature file")))?;
    Ok(io::read_feature_table(&manifest.resolve(path), None)?)
}

fn load_inputs(config: &ExperimentConfig) -> Result<Inputs, ExperimentError> {
    let manifest = Manifest::read(&config.manifest)?;
    let corpus = io::read_corpus(&manifest)?;
    let dataset = merge_labels(&corpus, config.indexing);
    if dataset.is_empty() {
        return Err(ExperimentError::Invalid("corpus has no labeled turns".into()));
    }
    let mut x = BTreeMap::new();
    for m in config.modalities() {
        let table = feature_table(&manifest, m)?;
        let matrix = table.design_matrix(&dataset).map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        x.insert(m, matrix);
    }
    Ok(Inputs { dataset, x })
}

/// Loads the corpus and features named by `config` and runs it on `jobs`
/// worker threads.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput, ExperimentError> {
    config.validate().map_err(ExperimentError::Invalid)?;
    let inputs = load_inputs(config)?;
    run_loaded(config, &inputs.dataset, &inputs.x, jobs)
}

enum FoldRun {
    Done(FoldOutcome, Vec<(Modality, FoldResult)>),
    Infeasible(String),
}

fn run_one_fold(
    fold: &Fold,
    data: &BTreeMap<Modality, ExperimentData>,
    grids: &BTreeMap<Modality, Vec<GridPoint>>,
    settings: &RunSettings,
) -> Result<FoldRun, RunError> {
    let mut results = Vec::new();
    for (&m, d) in data {
        match run_fold(fold, d, &grids[&m], settings)? {
            FoldOutcome::Completed(r) => results.push((m, r)),
            skipped => return Ok(FoldRun::Done(skipped, Vec::new())),
        }
    }
    if results.len() == 1 {
        let (m, r) = results.pop().expect("one result");
        return Ok(FoldRun::Done(FoldOutcome::Completed(r.clone()), vec![(m, r)]));
    }
    // decision-level fusion of two modalities over the same test rows
    let probs = |r: &FoldResult| r.predictions.iter().map(|p| p.probs).collect::<Vec<_>>();
    let fused = fuse_posteriors(&probs(&results[0].1), &probs(&results[1].1))
        .map_err(|_| RunError::Misaligned { rows: results[0].1.predictions.len(), samples: results[1].1.predictions.len() })?;
    let mut confusion = ConfusionMatrix::default();
    let predictions: Vec<TestPrediction> = results[0]
        .1
        .predictions
        .iter()
        .zip(&results[1].1.predictions)
        .zip(fused)
        .map(|((a, b), pred)| {
            confusion.add(a.truth, pred);
            let probs = std::array::from_fn(|k| (a.probs[k] + b.probs[k]) / 2.0);
            TestPrediction { row: a.row, truth: a.truth, pred, probs }
        })
        .collect();
    let test_uar = confusion.uar().map_err(|_| RunError::EmptyTest(fold.index))?;
    let merged = FoldResult {
        fold_index: fold.index,
        test_couple: fold.test_couple.clone(),
        parts: Vec::new(),
        confusion,
        test_uar,
        predictions,
    };
    Ok(FoldRun::Done(FoldOutcome::Completed(merged), results))
}

fn scored_turns(dataset: &LabeledDataset, preds: &[TestPrediction]) -> Vec<ScoredTurn> {
    let mut sessions = BTreeMap::new();
    let mut speakers = BTreeMap::new();
    for s in &dataset.samples {
        let n = sessions.len() as u32;
        sessions.entry(s.session_id.as_str()).or_insert(n);
        let n = speakers.len() as u32;
        speakers.entry(s.speaker_id.as_str()).or_insert(n);
    }
    preds
        .iter()
        .map(|p| {
            let s = &dataset.samples[p.row];
            ScoredTurn {
                session: sessions[s.session_id.as_str()],
                speaker: speakers[s.speaker_id.as_str()],
                position: s.position,
                truth: p.truth,
                pred: p.pred,
            }
        })
        .collect()
}

/// Runs every configured scheme on an already loaded dataset. `x` holds the
/// design matrix of each modality to train, rows aligned with `dataset`.
pub fn run_loaded(
    config: &ExperimentConfig,
    dataset: &LabeledDataset,
    x: &BTreeMap<Modality, Matrix>,
    jobs: usize,
) -> Result<ExperimentOutput, ExperimentError> {
    config.validate().map_err(ExperimentError::Invalid)?;
    let seeds = config.seeds();
    let settings = config.settings();
    let couples = dataset.couple_counts();
    let totals = class_counts(dataset);
    let priors = totals.priors();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ExperimentError::Invalid(e.to_string()))?;

    let grids: BTreeMap<Modality, Vec<GridPoint>> =
        x.keys().map(|&m| (m, config.grid_space(m).enumerate())).collect();
    let input_dims: BTreeMap<Modality, usize> = x.iter().map(|(&m, mat)| (m, mat.cols())).collect();
    let truth: Vec<LabelRow> = dataset
        .samples
        .iter()
        .map(|s| LabelRow { session_id: s.session_id.clone(), turn_index: s.turn_index, label: s.class })
        .collect();

    let mut scheme_reports = Vec::new();
    let mut scheme_preds = Vec::new();
    for &scheme in &config.schemes {
        let data: BTreeMap<Modality, ExperimentData> = x
            .iter()
            .map(|(&m, mat)| Ok((m, ExperimentData::new(dataset, mat.clone(), scheme)?)))
            .collect::<Result<_, RunError>>()?;
        log::info!("scheme={scheme} folds={} grid={:?}", couples.len(), grids.iter().map(|(m, g)| (m.as_str(), g.len())).collect::<Vec<_>>());

        let runs: Vec<Result<FoldRun, RunError>> = pool.install(|| {
            (0..couples.len())
                .into_par_iter()
                .map(|i| match plan_fold(&couples, i, seeds.split, DEFAULT_MAX_RETRIES) {
                    Err(e) => Ok(FoldRun::Infeasible(e.to_string())),
                    Ok(fold) => {
                        let r = run_one_fold(&fold, &data, &grids, &settings);
                        if let Ok(FoldRun::Done(FoldOutcome::Completed(res), _)) = &r {
                            log::info!("scheme={scheme} fold={i} couple={} test_uar={:.4}", fold.test_couple, res.test_uar);
                        }
                        r
                    }
                })
                .collect()
        });

        let mut folds = Vec::with_capacity(runs.len());
        let mut preds = SchemePredictions::default();
        let mut all_preds = Vec::new();
        let mut uars = Vec::new();
        let mut chance_folds = Vec::new();
        let mut pooled = ConfusionMatrix::default();
        for (i, run) in runs.into_iter().enumerate() {
            let test_couple = couples[i].0.clone();
            let summary = match run? {
                FoldRun::Infeasible(reason) => FoldSummary {
                    fold_index: i,
                    test_couple,
                    status: FoldStatus::Infeasible,
                    test_uar: None,
                    confusion: None,
                    parts: Vec::new(),
                    reason: Some(reason),
                },
                FoldRun::Done(FoldOutcome::Skipped { reason, .. }, _) => FoldSummary {
                    fold_index: i,
                    test_couple,
                    status: FoldStatus::Skipped,
                    test_uar: None,
                    confusion: None,
                    parts: Vec::new(),
                    reason: Some(reason),
                },
                FoldRun::Done(FoldOutcome::Completed(r), per_modality) => {
                    uars.push(r.test_uar);
                    pooled.merge(&r.confusion);
                    chance_folds.push(r.predictions.iter().map(|p| p.truth).collect::<Vec<_>>());
                    for p in &r.predictions {
                        let s = &dataset.samples[p.row];
                        preds.rows.push(LabelRow {
                            session_id: s.session_id.clone(),
                            turn_index: s.turn_index,
                            label: p.pred,
                        });
                    }
                    all_preds.extend(r.predictions.iter().copied());
                    let mut parts = Vec::new();
                    for (m, res) in per_modality {
                        for mut sel in res.parts {
                            if config.save_checkpoints {
                                if let Some(model) = sel.model.take() {
                                    preds.checkpoints.push((i, sel.part.to_string(), m, model));
                                }
                            }
                            parts.push(SelectedModel { modality: m, selection: sel });
                        }
                    }
                    FoldSummary {
                        fold_index: i,
                        test_couple,
                        status: FoldStatus::Completed,
                        test_uar: Some(r.test_uar),
                        confusion: Some(r.confusion),
                        parts,
                        reason: None,
                    }
                }
            };
            folds.push(summary);
        }

        let chance = if chance_folds.is_empty() {
            None
        } else {
            Some(
                chance_uar(&chance_folds, priors, config.chance_repetitions, seeds.chance)
                    .map_err(|e| ExperimentError::Invalid(e.to_string()))?,
            )
        };
        let scored = scored_turns(dataset, &all_preds);
        let opts = WindowOptions { same_speaker: config.same_speaker_windows };
        let curve = if scored.is_empty() {
            Vec::new()
        } else {
            recall_curve(&scored, &config.windows, opts).map_err(|e| ExperimentError::Invalid(e.to_string()))?
        };
        let fn_correction = config
            .windows
            .iter()
            .map(|&w| {
                let r = fn_correction_rate(&scored, WindowSpec::new(w).expect("validated"), opts);
                WindowFnRate { window: w, false_negatives: r.false_negatives, corrected: r.corrected, rate: r.rate }
            })
            .collect();
        let params = x
            .iter()
            .flat_map(|(&m, mat)| param_accounts(m, mat.cols(), &config.grid_space(m)))
            .collect();
        let count = |s: FoldStatus| folds.iter().filter(|f| f.status == s).count();
        scheme_reports.push(SchemeReport {
            scheme,
            completed: count(FoldStatus::Completed),
            skipped: count(FoldStatus::Skipped),
            infeasible: count(FoldStatus::Infeasible),
            folds,
            aggregate: aggregate(&uars),
            pooled_confusion: pooled,
            chance,
            curve,
            fn_correction,
            params,
        });
        preds.rows.sort();
        scheme_preds.push(preds);
    }

    let report = ExperimentReport {
        // the output location is recorded in run.json, not in the results
        config: ExperimentConfig { out: None, ..config.clone() },
        seeds,
        modality: config.modality,
        input_dims,
        samples: dataset.len(),
        class_counts: totals,
        couples: couples.len(),
        grid_sizes: grids.iter().map(|(&m, g)| (m, g.len())).collect(),
        schemes: scheme_reports,
    };
    Ok(ExperimentOutput { report, predictions: scheme_preds, truth })
}

fn percent(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn modality_label(r: &ExperimentReport) -> &'static str {
    match (r.modality, r.config.fusion) {
        (Modality::Fused, FusionMode::PosteriorMean) => "fused-dec",
        (m, _) => m.as_str(),
    }
}

/// Table of mean (std) test-fold UAR per scheme and modality, followed by
/// parameter counts and the chance baseline.
pub fn render_table(reports: &[ExperimentReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Mean (std) UAR % over test folds");
    let _ = writeln!(out, "{:<10} {:<10} {:>16} {:>6} {:>8} {:>11} {:>14}", "scheme", "modality", "UAR", "folds", "skipped", "infeasible", "chance");
    for r in reports {
        for s in &r.schemes {
            let uar = s.aggregate.map_or("-".to_string(), |a| format!("{} ({})", percent(a.mean), percent(a.std)));
            let chance = s.chance.map_or("-".to_string(), |c| format!("{} ({})", percent(c.mean), percent(c.std)));
            let modality = modality_label(r);
            let _ = writeln!(
                out,
                "{:<10} {:<10} {:>16} {:>6} {:>8} {:>11} {:>14}",
                s.scheme.as_str(),
                modality,
                uar,
                s.completed,
                s.skipped,
                s.infeasible,
                chance
            );
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Parameters per model (full / per-part with halved widths)");
    for r in reports {
        for s in &r.schemes {
            for p in &s.params {
                let dash = |h: &[usize]| h.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("-");
                let _ = writeln!(
                    out,
                    "{:<10} {:<10} input {:>4}  {:>14} = {:>7}  {:>14} = {:>7}",
                    s.scheme.as_str(),
                    p.modality.as_str(),
                    p.input_dim,
                    dash(&p.hidden),
                    p.params,
                    dash(&p.halved_hidden),
                    p.halved_params
                );
            }
        }
    }
    let windowed: Vec<_> = reports.iter().flat_map(|r| r.schemes.iter().map(move |s| (r, s))).filter(|(_, s)| !s.curve.is_empty()).collect();
    if !windowed.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Windowed recall % (hostile / positive / constructive, UAR)");
        for (r, s) in windowed {
            for row in &s.curve {
                let rec = |c: BehaviorClass| row.recall[c.index()].map_or("-".to_string(), percent);
                let _ = writeln!(
                    out,
                    "{:<10} {:<10} W={:<3} {:>7} {:>7} {:>7}  {:>7}",
                    s.scheme.as_str(),
                    modality_label(r),
                    row.window,
                    rec(BehaviorClass::Hostile),
                    rec(BehaviorClass::Positive),
                    rec(BehaviorClass::Constructive),
                    percent(row.uar)
                );
            }
        }
    }
    out
}

/// Writes report, table, predictions, truth, curves and optional
/// checkpoints into `dir`, which must not already hold any of them.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<(), IoError> {
    io::write_json(&dir.join("report.json"), &output.report)?;
    io::write_text(&dir.join("report.txt"), &render_table(std::slice::from_ref(&output.report)))?;
    io::write_labels(&dir.join("truth.csv"), &output.truth)?;
    for (s, p) in output.report.schemes.iter().zip(&output.predictions) {
        let name = s.scheme.as_str();
        io::write_labels(&dir.join(format!("predictions_{name}.csv")), &p.rows)?;
        if !s.curve.is_empty() {
            io::write_text(&dir.join(format!("curve_{name}.csv")), &io::curve_csv(&s.curve))?;
        }
        for (fold, part, m, model) in &p.checkpoints {
            let file = format!("checkpoints/{name}/fold{fold:03}_{}_{}.json", io::file_stem(part), m.as_str());
            io::write_checkpoint(&dir.join(file), model)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accounts_halve_widths() {
        let p = param_accounts(Modality::Acoustic, 88, &GridSpace::acoustic_default());
        assert_eq!(p[1].hidden, vec![128, 64, 32]);
        assert_eq!(p[1].params, 21827);
        assert_eq!(p[1].halved_hidden, vec![64, 32, 16]);
        assert_eq!(p[1].halved_params, 8355);
    }

    #[test]
    fn overrides_replace_axes() {
        let g = GridOverrides { learning_rates: Some(vec![0.5]), ..Default::default() };
        let s = g.apply(GridSpace::acoustic_default());
        assert_eq!(s.len(), 48);
        assert_eq!(s.learning_rates, vec![0.5]);
    }

    #[test]
    fn config_defaults_and_unknown_fields() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"manifest": "m.json", "modality": "acoustic"}"#).unwrap();
        assert_eq!(c, ExperimentConfig::new("m.json", Modality::Acoustic));
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"manifest": "m", "modality": "acoustic", "jobs": 3}"#).is_err());
        let bad = ExperimentConfig { windows: vec![4], ..c };
        assert!(bad.validate().is_err());
    }
}
