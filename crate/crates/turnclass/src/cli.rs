//! The `turnclass` command line.
//!
//! Exit status is 0 on success, 1 for invalid arguments or inputs, and 2 for
//! failures while running.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use turnclass_core::corpus::{merge_labels, Indexing};
use turnclass_core::eval::{
    fn_correction_rate, recall_curve, ConfusionMatrix, CurveRow, ScoredTurn, WindowOptions, WindowSpec,
};
use turnclass_core::BehaviorClass;

use crate::io::{self, FeaturePaths, IoError, Manifest};
use crate::pipeline::{self, PipelineError};
use crate::recipe::default_recipe;
use crate::runner::{self, ExperimentConfig, ExperimentError, ExperimentReport, DEFAULT_WINDOWS};
use crate::synth::{self, SynthError, SynthSpec};

#[derive(Parser, Debug)]
#[command(name = "turnclass", version, about = "Turn-level behavior classification of couple interactions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus with word timings, features and ground truth.
    Synth(SynthArgs),
    /// Check a synthetic corpus directory against its ground truth.
    Verify {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Correct turn boundaries from word timings.
    Align {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute acoustic functionals and fallback lexical vectors.
    Featurize(FeaturizeArgs),
    /// Run a leave-one-couple-out experiment.
    Run(RunArgs),
    /// Score predictions against reference labels, with windowed recall.
    Evaluate(EvaluateArgs),
    /// Print the results table of one or more experiment reports.
    Report {
        #[arg(long = "input", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON generation spec; unset fields take defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub couples: Option<usize>,
    /// Also write per-session frame descriptors.
    #[arg(long)]
    pub frames: bool,
}

#[derive(Args, Debug)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Functional recipe JSON; the built-in 88-dimensional recipe otherwise.
    #[arg(long)]
    pub recipe: Option<PathBuf>,
    #[arg(long, default_value_t = 600)]
    pub lexical_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub embed_seed: u64,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_WINDOWS)]
    pub windows: Vec<usize>,
    /// Count only the same speaker's turns as neighbors; needs `--manifest`.
    #[arg(long)]
    pub same_speaker: bool,
    /// Corpus manifest giving speakers and sequence positions.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Whether excluded turns keep their place in the sequence.
    #[arg(long, value_enum, default_value_t = IndexingArg::ExcludeAfter)]
    pub indexing: IndexingArg,
    /// Directory for `evaluation.json` and `curve.csv`; stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum IndexingArg {
    ExcludeAfter,
    ExcludeBefore,
}

impl From<IndexingArg> for Indexing {
    fn from(a: IndexingArg) -> Self {
        match a {
            IndexingArg::ExcludeAfter => Indexing::ExcludeAfterIndexing,
            IndexingArg::ExcludeBefore => Indexing::ExcludeBeforeIndexing,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::File { .. } | IoError::Exists(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Io(e) => e.into(),
            ExperimentError::Invalid(m) => CliError::Invalid(m),
            ExperimentError::Run(e) => CliError::Runtime(e.to_string()),
        }
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit status.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => synth_cmd(a),
        Command::Verify { dir } => {
            let report = synth::verify_dir(&dir)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if report.is_clean() {
                Ok(())
            } else {
                Err(CliError::Invalid(format!("{} violations, {} span mismatches", report.violations.len(), report.span_mismatches)))
            }
        }
        Command::Align { manifest, out } => align_cmd(&manifest, &out),
        Command::Featurize(a) => featurize_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Report { inputs } => {
            let reports = inputs.iter().map(|p| io::read_json(p)).collect::<Result<Vec<ExperimentReport>, _>>()?;
            print!("{}", runner::render_table(&reports));
            Ok(())
        }
    }
}

fn synth_cmd(a: SynthArgs) -> Result<(), CliError> {
    let mut spec: SynthSpec = match &a.spec {
        Some(p) => io::read_json(p)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(n) = a.couples {
        spec.n_couples = n;
    }
    spec.emit_frames |= a.frames;
    let g = synth::generate(&spec)?;
    synth::write_generated(&g, &a.out)?;
    log::info!("event=synth out={} couples={} seed={}", a.out.display(), spec.n_couples, spec.seed);
    Ok(())
}

fn align_cmd(manifest_path: &Path, out: &Path) -> Result<(), CliError> {
    let manifest = Manifest::read(manifest_path)?;
    let corpus = io::read_corpus(&manifest)?;
    let mut words = BTreeMap::new();
    for e in &manifest.sessions {
        if let Some(p) = &e.words {
            words.insert(e.session_id.clone(), io::read_words(&manifest.resolve(p))?);
        }
    }
    if words.is_empty() {
        return Err(CliError::Invalid(format!("{}: no session lists word timings", manifest_path.display())));
    }
    let aligned = pipeline::align_corpus(&corpus, &words)?;
    let source = manifest.rebased();
    let mut written = io::write_corpus_files(&aligned.corpus, out, source.features.clone())?;
    for e in &mut written.sessions {
        let src = source.entry(&e.session_id).expect("same sessions");
        e.words = src.words.clone();
        e.frames = src.frames.clone();
    }
    io::write_json(&out.join("manifest.json"), &written)?;
    io::write_corrections(&out.join("corrections.csv"), &aligned.corrections)?;
    io::write_crossings(&out.join("crossings.csv"), &aligned.crossings)?;
    log::info!(
        "event=align sessions={} corrections={} crossings={} flagged={} omitted={}",
        words.len(),
        aligned.corrections.len(),
        aligned.crossings.len(),
        aligned.flagged.len(),
        aligned.omitted
    );
    Ok(())
}

fn featurize_cmd(a: FeaturizeArgs) -> Result<(), CliError> {
    if a.lexical_dim == 0 {
        return Err(CliError::Invalid("--lexical-dim must be positive".into()));
    }
    let manifest = Manifest::read(&a.manifest)?;
    let corpus = io::read_corpus(&manifest)?;
    let recipe = match &a.recipe {
        Some(p) => io::read_recipe(p)?,
        None => default_recipe(),
    };
    let mut written = manifest.rebased();
    let mut frames = BTreeMap::new();
    for e in &manifest.sessions {
        if let Some(p) = &e.frames {
            frames.insert(e.session_id.clone(), io::read_frames(&manifest.resolve(p))?);
        }
    }
    if frames.len() == manifest.sessions.len() {
        let table = pipeline::acoustic_features(&corpus, &frames, &recipe)?;
        let path = a.out.join("acoustic.csv");
        io::write_feature_table(&path, &table)?;
        written.features.acoustic = Some(std::path::absolute(&path).unwrap_or(path));
    } else {
        log::warn!("event=featurize acoustic=skipped reason=missing_frames sessions_with_frames={}", frames.len());
    }
    let lexical = pipeline::fallback_lexical(&corpus, a.lexical_dim, a.embed_seed);
    let path = a.out.join("lexical.csv");
    io::write_feature_table(&path, &lexical)?;
    written.features.lexical = Some(std::path::absolute(&path).unwrap_or(path));
    io::write_json(&a.out.join("manifest.json"), &written)?;
    let FeaturePaths { acoustic, .. } = &written.features;
    log::info!("event=featurize acoustic={} lexical_dim={}", acoustic.is_some(), a.lexical_dim);
    Ok(())
}

#[derive(Serialize)]
struct RunRecord<'a> {
    config: &'a ExperimentConfig,
    seeds: runner::Seeds,
    jobs: usize,
}

fn run_cmd(a: RunArgs) -> Result<(), CliError> {
    let mut config = ExperimentConfig::read(&a.config)?;
    if let Some(out) = a.out {
        config.out = Some(out);
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    let out = config.out.clone().ok_or_else(|| CliError::Invalid("no output directory: set `out` or pass --out".into()))?;
    if a.jobs == 0 {
        return Err(CliError::Invalid("--jobs must be positive".into()));
    }
    config.validate().map_err(CliError::Invalid)?;
    io::write_json(&out.join("run.json"), &RunRecord { config: &config, seeds: config.seeds(), jobs: a.jobs })?;
    let output = runner::run_experiment(&config, a.jobs)?;
    runner::write_outputs(&output, &out)?;
    print!("{}", runner::render_table(std::slice::from_ref(&output.report)));
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Evaluation {
    pub samples: usize,
    pub uar: f64,
    pub confusion: ConfusionMatrix,
    pub recall: BTreeMap<String, Option<f64>>,
    pub curve: Vec<CurveRow>,
    pub fn_correction: Vec<runner::WindowFnRate>,
}

/// Joins predictions to reference labels and scores them. Without a corpus,
/// sequence positions are turn-index ranks within each session.
pub fn evaluate_files(
    pred: &Path,
    truth: &Path,
    windows: &[usize],
    same_speaker: bool,
    corpus: Option<(&Path, Indexing)>,
) -> Result<Evaluation, CliError> {
    let truth_rows = io::read_labels(truth)?;
    let pred_rows = io::read_labels(pred)?;
    let mut reference = BTreeMap::new();
    for r in &truth_rows {
        if reference.insert((r.session_id.as_str(), r.turn_index), r.label).is_some() {
            return Err(CliError::Invalid(format!("{}: duplicate row for {} turn {}", truth.display(), r.session_id, r.turn_index)));
        }
    }
    for &w in windows {
        WindowSpec::new(w).map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    if same_speaker && corpus.is_none() {
        return Err(CliError::Invalid("--same-speaker needs --manifest".into()));
    }

    // (session, speaker, position) of each referenced turn
    let mut places: BTreeMap<(String, usize), (String, usize)> = BTreeMap::new();
    match corpus {
        Some((path, indexing)) => {
            let ds = merge_labels(&io::load_corpus(path)?, indexing);
            for s in ds.samples {
                places.insert((s.session_id, s.turn_index), (s.speaker_id, s.position));
            }
        }
        None => {
            let mut rank: BTreeMap<&str, usize> = BTreeMap::new();
            for &(session, turn) in reference.keys() {
                let r = rank.entry(session).or_default();
                places.insert((session.to_string(), turn), (String::new(), *r));
                *r += 1;
            }
        }
    }
    let mut sessions = BTreeMap::new();
    let mut speakers = BTreeMap::new();
    let mut items = Vec::with_capacity(pred_rows.len());
    let mut seen = std::collections::BTreeSet::new();
    for r in &pred_rows {
        let key = (r.session_id.as_str(), r.turn_index);
        let missing = || CliError::Invalid(format!("{}: {} turn {} has no reference label", pred.display(), r.session_id, r.turn_index));
        let truth_label = *reference.get(&key).ok_or_else(missing)?;
        if !seen.insert(key) {
            return Err(CliError::Invalid(format!("{}: duplicate row for {} turn {}", pred.display(), r.session_id, r.turn_index)));
        }
        let (speaker, position) = places.get(&(r.session_id.clone(), r.turn_index)).ok_or_else(missing)?;
        let n = sessions.len() as u32;
        let session = *sessions.entry(r.session_id.clone()).or_insert(n);
        let n = speakers.len() as u32;
        let speaker = *speakers.entry(speaker.clone()).or_insert(n);
        items.push(ScoredTurn { session, speaker, position: *position, truth: truth_label, pred: r.label });
    }
    let mut confusion = ConfusionMatrix::default();
    for t in &items {
        confusion.add(t.truth, t.pred);
    }
    let uar = confusion.uar().map_err(|e| CliError::Invalid(e.to_string()))?;
    let opts = WindowOptions { same_speaker };
    let curve = recall_curve(&items, windows, opts).map_err(|e| CliError::Invalid(e.to_string()))?;
    let fn_correction = windows
        .iter()
        .map(|&w| {
            let r = fn_correction_rate(&items, WindowSpec::new(w).expect("checked"), opts);
            runner::WindowFnRate { window: w, false_negatives: r.false_negatives, corrected: r.corrected, rate: r.rate }
        })
        .collect();
    let recall = BehaviorClass::ALL.iter().map(|&c| (c.as_str().to_string(), confusion.recall(c))).collect();
    Ok(Evaluation { samples: items.len(), uar, confusion, recall, curve, fn_correction })
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<(), CliError> {
    let corpus = a.manifest.as_deref().map(|m| (m, Indexing::from(a.indexing)));
    let e = evaluate_files(&a.pred, &a.truth, &a.windows, a.same_speaker, corpus)?;
    let json = serde_json::to_string_pretty(&e).expect("evaluation serializes");
    match &a.out {
        Some(dir) => {
            io::write_text(&dir.join("evaluation.json"), &(json + "\n"))?;
            io::write_text(&dir.join("curve.csv"), &io::curve_csv(&e.curve))?;
        }
        None => println!("{json}"),
    }
    Ok(())
}
