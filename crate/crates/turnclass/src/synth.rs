//! Seeded synthetic corpora.
//!
//! Labels follow a per-session Markov chain whose stationary distribution is
//! the configured class prior. Minority classes repeat with probability
//! `p_stay`, which clusters them in time. Turn features are isotropic
//! Gaussians whose class means are `mean_shift` standard deviations apart.
//! Word timings are generated first; true turn boundaries follow from them
//! by the same midpoint rule the aligner uses, and annotated boundaries are
//! the true ones moved by a uniform lag.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use turnclass_core::align::{align_session, WordTiming};
use turnclass_core::corpus::{violations, Content, Corpus, Gender, Role, Session, Speaker, Turn};
use turnclass_core::features::{FeatureTable, FrameMatrix, TurnKey};
use turnclass_core::labels::NUM_CLASSES;
use turnclass_core::seed;
use turnclass_core::{BehaviorClass, BehaviorCode, ClassCounts};

use crate::io::{self, FeaturePaths, IoError, Manifest, SessionFrames};
use crate::recipe;

/// Class priors in class order (Hostile, Constructive, Positive).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContentPriors {
    pub neutral: [f64; NUM_CLASSES],
    pub stress: [f64; NUM_CLASSES],
}

impl ContentPriors {
    pub fn get(&self, c: Content) -> [f64; NUM_CLASSES] {
        match c {
            Content::Neutral => self.neutral,
            Content::Stress => self.stress,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnsPerSession {
    pub neutral: usize,
    pub stress: usize,
}

impl TurnsPerSession {
    pub fn get(&self, c: Content) -> usize {
        match c {
            Content::Neutral => self.neutral,
            Content::Stress => self.stress,
        }
    }
}

/// Per-content class counts of the reference annotation.
pub const NEUTRAL_COUNTS: ClassCounts = ClassCounts([54, 7584, 467]);
pub const STRESS_COUNTS: ClassCounts = ClassCounts([122, 5866, 902]);

fn proportions(c: ClassCounts) -> [f64; NUM_CLASSES] {
    let t = c.total() as f64;
    c.0.map(|x| x as f64 / t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_couples: usize,
    /// Labeled turns per session; excluded-code turns come on top.
    pub turns_per_session: TurnsPerSession,
    pub priors: ContentPriors,
    /// Probability that a turn carries an excluded code instead of a label.
    pub excluded_rate: f64,
    pub acoustic_dim: usize,
    pub lexical_dim: usize,
    /// Distance between class means in within-class standard deviations.
    pub mean_shift: f64,
    /// Probability that a minority-class turn is followed by the same class.
    pub p_stay: f64,
    /// Annotated boundaries are moved by a lag drawn uniformly from
    /// `[-lag_ms, lag_ms]`.
    pub lag_ms: i64,
    /// When set, only this fraction of couples can produce Hostile turns;
    /// the Hostile prior of those couples is scaled up to compensate.
    pub hostile_couple_fraction: Option<f64>,
    /// Probability that a word of a labeled turn comes from its class's
    /// vocabulary rather than the shared one.
    pub lexical_signal: f64,
    pub emit_words: bool,
    pub emit_frames: bool,
    pub emit_features: bool,
    pub frame_step_ms: i64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// Reference-sized corpus: 85 couples, class proportions and per-content
    /// session lengths of the reference annotation.
    fn default() -> Self {
        SynthSpec {
            n_couples: 85,
            turns_per_session: TurnsPerSession { neutral: 95, stress: 81 },
            priors: ContentPriors { neutral: proportions(NEUTRAL_COUNTS), stress: proportions(STRESS_COUNTS) },
            excluded_rate: 0.05,
            acoustic_dim: turnclass_core::features::ACOUSTIC_DIM,
            lexical_dim: turnclass_core::features::LEXICAL_DIM,
            mean_shift: 1.0,
            p_stay: 0.7,
            lag_ms: 800,
            hostile_couple_fraction: None,
            lexical_signal: 0.3,
            emit_words: true,
            emit_frames: false,
            emit_features: true,
            frame_step_ms: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error("class {class} expects {expected:.3} turns in the whole corpus; raise n_couples or turns_per_session")]
    Infeasible { class: BehaviorClass, expected: f64 },
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.into()));
        if self.n_couples < 1 {
            return bad("n_couples must be positive");
        }
        for p in [self.priors.neutral, self.priors.stress] {
            if p.iter().any(|x| !x.is_finite() || *x < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
                return bad("priors must be non-negative and sum to 1");
            }
        }
        if !(0.0..1.0).contains(&self.p_stay) {
            return bad("p_stay must lie in [0, 1)");
        }
        if !(self.mean_shift >= 0.0 && self.mean_shift.is_finite()) {
            return bad("mean_shift must be non-negative");
        }
        if !(0.0..1.0).contains(&self.excluded_rate) || !(0.0..=1.0).contains(&self.lexical_signal) {
            return bad("excluded_rate must lie in [0, 1) and lexical_signal in [0, 1]");
        }
        if self.lag_ms < 0 || self.lag_ms > MAX_LAG_MS {
            return bad("lag_ms must lie in [0, 900]");
        }
        if self.acoustic_dim < 3 || self.lexical_dim < 3 || self.frame_step_ms < 1 {
            return bad("feature dimensions must be at least 3 and frame_step_ms positive");
        }
        if let Some(f) = self.hostile_couple_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return bad("hostile_couple_fraction must lie in (0, 1]");
            }
        }
        let n = self.n_couples as f64;
        for c in BehaviorClass::ALL {
            let expected: f64 = Content::ALL
                .iter()
                .map(|&ct| n * self.turns_per_session.get(ct) as f64 * self.priors.get(ct)[c.index()])
                .sum();
            if expected < 1.0 {
                return Err(SynthError::Infeasible { class: c, expected });
            }
        }
        Ok(())
    }
}

/// Lag bound keeping every annotated span non-empty: true spans are at least
/// [`MIN_TURN_MS`] long and each side moves by at most the lag.
pub const MAX_LAG_MS: i64 = 900;
pub const MIN_TURN_MS: i64 = 2000;
const SESSION_START_MS: i64 = 1000;

/// Ground truth stored next to a generated corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub spec: SynthSpec,
    pub sessions: Vec<SessionTruth>,
    pub class_counts: ClassCounts,
    /// Couples whose Hostile prior is non-zero.
    pub hostile_couples: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionTruth {
    pub session_id: String,
    /// True `(start_ms, end_ms)` per turn.
    pub spans: Vec<(i64, i64)>,
}

/// Everything a generation run produces, before it is written to disk.
#[derive(Clone, Debug)]
pub struct Generated {
    pub corpus: Corpus,
    pub words: BTreeMap<String, Vec<WordTiming>>,
    pub frames: BTreeMap<String, SessionFrames>,
    pub acoustic: FeatureTable,
    pub lexical: FeatureTable,
    pub sidecar: Sidecar,
}

const SHARED_VOCAB: &[&str] = &[
    "the", "and", "you", "we", "it", "that", "about", "just", "what", "know", "think", "really", "so", "well", "like",
    "time", "then", "going", "said", "mean", "right", "okay", "yeah", "maybe", "there", "when", "because", "but",
    "with", "have",
];
const HOSTILE_VOCAB: &[&str] = &[
    "never", "always", "stop", "blame", "fault", "ridiculous", "annoying", "whatever", "stupid", "angry", "sick",
    "tired", "wrong", "careless", "lazy",
];
const CONSTRUCTIVE_VOCAB: &[&str] = &[
    "plan", "schedule", "doctor", "appointment", "option", "decide", "together", "budget", "idea", "try", "could",
    "should", "week", "help", "talk",
];
const POSITIVE_VOCAB: &[&str] = &[
    "love", "great", "thanks", "appreciate", "wonderful", "happy", "proud", "nice", "glad", "sweet", "laugh", "fun",
    "enjoy", "good", "care",
];

fn class_vocab(c: BehaviorClass) -> &'static [&'static str] {
    match c {
        BehaviorClass::Hostile => HOSTILE_VOCAB,
        BehaviorClass::Constructive => CONSTRUCTIVE_VOCAB,
        BehaviorClass::Positive => POSITIVE_VOCAB,
    }
}

/// Labels of one session as a Markov chain with stationary law `pi`.
/// Constructive never sticks; other classes stay with probability `p_stay`,
/// and a leaving step draws from `q_k ~ pi_k (1 - a_k)`.
pub fn markov_labels(pi: [f64; NUM_CLASSES], p_stay: f64, n: usize, rng: &mut seed::Rng) -> Vec<BehaviorClass> {
    let stay: [f64; NUM_CLASSES] = BehaviorClass::ALL.map(|c| if c == BehaviorClass::Constructive { 0.0 } else { p_stay });
    let q: [f64; NUM_CLASSES] = std::array::from_fn(|k| pi[k] * (1.0 - stay[k]));
    let draw = |w: &[f64; NUM_CLASSES], rng: &mut seed::Rng| {
        let total: f64 = w.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for c in BehaviorClass::ALL {
            acc += w[c.index()];
            if u < acc {
                return c;
            }
        }
        BehaviorClass::Constructive
    };
    let mut out = Vec::with_capacity(n);
    let mut cur = draw(&pi, rng);
    for i in 0..n {
        if i > 0 && rng.random::<f64>() >= stay[cur.index()] {
            cur = draw(&q, rng);
        }
        out.push(cur);
    }
    out
}

fn code_for(class: BehaviorClass, rng: &mut seed::Rng) -> BehaviorCode {
    let high = rng.random::<bool>();
    match (class, high) {
        (BehaviorClass::Hostile, true) => BehaviorCode::HighHostile,
        (BehaviorClass::Hostile, false) => BehaviorCode::LowHostile,
        (BehaviorClass::Constructive, _) => BehaviorCode::ConstructiveProblemDiscussion,
        (BehaviorClass::Positive, true) => BehaviorCode::HighPositive,
        (BehaviorClass::Positive, false) => BehaviorCode::LowPositive,
    }
}

/// Gaussian vector with class mean `shift / sqrt(2)` on axis `class`, so
/// class means are `shift` apart.
fn gaussian(dim: usize, class: Option<BehaviorClass>, shift: f64, rng: &mut seed::Rng) -> Vec<f64> {
    let offset = shift / std::f64::consts::SQRT_2;
    (0..dim)
        .map(|d| {
            let z: f64 = rng.sample(StandardNormal);
            z + if class.is_some_and(|c| c.index() == d) { offset } else { 0.0 }
        })
        .collect()
}

struct DraftTurn {
    speaker: usize,
    code: BehaviorCode,
    words: Vec<(String, i64, i64)>,
}

fn priors_for_couple(spec: &SynthSpec, content: Content, hostile_ok: bool, fraction: f64) -> [f64; NUM_CLASSES] {
    let mut p = spec.priors.get(content);
    let h = BehaviorClass::Hostile.index();
    let c = BehaviorClass::Constructive.index();
    let target = if hostile_ok { (p[h] / fraction).min(p[h] + p[c]) } else { 0.0 };
    p[c] += p[h] - target;
    p[h] = target;
    p
}

/// Generates a corpus in memory.
pub fn generate(spec: &SynthSpec) -> Result<Generated, SynthError> {
    spec.validate()?;
    let couples: Vec<String> = (0..spec.n_couples).map(|k| format!("c{k:03}")).collect();

    let mut order: Vec<usize> = (0..spec.n_couples).collect();
    order.shuffle(&mut seed::rng_at(spec.seed, &[0]));
    let (fraction, hostile_set): (f64, Vec<bool>) = match spec.hostile_couple_fraction {
        None => (1.0, vec![true; spec.n_couples]),
        Some(f) => {
            let m = ((f * spec.n_couples as f64).ceil() as usize).clamp(1, spec.n_couples);
            let mut set = vec![false; spec.n_couples];
            order[..m].iter().for_each(|&i| set[i] = true);
            (m as f64 / spec.n_couples as f64, set)
        }
    };

    let channels = recipe::default_recipe().entries.iter().map(|(c, _)| c.clone()).collect::<Vec<_>>();
    let mut speakers = Vec::new();
    let mut sessions = Vec::new();
    let mut words_out = BTreeMap::new();
    let mut frames_out = BTreeMap::new();
    let mut truth = Vec::new();
    let mut acoustic = FeatureTable::new(spec.acoustic_dim);
    let mut lexical = FeatureTable::new(spec.lexical_dim);
    let mut counts = ClassCounts::default();

    for (k, couple) in couples.iter().enumerate() {
        let mut rng = seed::rng_at(spec.seed, &[1, k as u64]);
        let male_patient = rng.random::<bool>();
        let ids = [format!("{couple}_p"), format!("{couple}_c")];
        speakers.push(Speaker {
            id: ids[0].clone(),
            couple_id: couple.clone(),
            gender: if male_patient { Gender::Male } else { Gender::Female },
            role: Role::Patient,
        });
        speakers.push(Speaker {
            id: ids[1].clone(),
            couple_id: couple.clone(),
            gender: if male_patient { Gender::Female } else { Gender::Male },
            role: Role::Caregiver,
        });

        for (ci, content) in Content::ALL.into_iter().enumerate() {
            let session_id = format!("{couple}_{content}");
            let mut rng = seed::rng_at(spec.seed, &[2, k as u64, ci as u64]);
            let pi = priors_for_couple(spec, content, hostile_set[k], fraction);
            let labels = markov_labels(pi, spec.p_stay, spec.turns_per_session.get(content), &mut rng);

            // interleave excluded-code turns
            let mut codes: Vec<(BehaviorCode, Option<BehaviorClass>)> = Vec::new();
            for &c in &labels {
                while rng.random::<f64>() < spec.excluded_rate {
                    let code = if rng.random::<bool>() { BehaviorCode::DysphoricAffect } else { BehaviorCode::Other };
                    codes.push((code, None));
                }
                codes.push((code_for(c, &mut rng), Some(c)));
                counts[c] += 1;
            }

            let first_speaker = rng.random_range(0..2usize);
            let mut t = SESSION_START_MS;
            let mut drafts = Vec::with_capacity(codes.len());
            for (i, &(code, class)) in codes.iter().enumerate() {
                if i > 0 {
                    t += rng.random_range(100..=1200);
                }
                let n_words = rng.random_range(4..=12usize);
                let mut words = Vec::with_capacity(n_words);
                let start = t;
                for w in 0..n_words {
                    if w > 0 {
                        t += rng.random_range(0..=150);
                    }
                    let vocab = match class {
                        Some(c) if rng.random::<f64>() < spec.lexical_signal => class_vocab(c),
                        _ => SHARED_VOCAB,
                    };
                    let word = vocab[rng.random_range(0..vocab.len())].to_string();
                    let dur = rng.random_range(150..=500);
                    words.push((word, t, t + dur));
                    t += dur;
                }
                if t - start < MIN_TURN_MS {
                    t = start + MIN_TURN_MS;
                    if let Some(last) = words.last_mut() {
                        last.2 = t;
                    }
                }
                drafts.push(DraftTurn { speaker: (first_speaker + i) % 2, code, words });
            }

            // true boundaries: first word start, midpoints of the gaps, last word end
            let n = drafts.len();
            let mut spans: Vec<(i64, i64)> =
                drafts.iter().map(|d| (d.words[0].1, d.words.last().map_or(0, |w| w.2))).collect();
            for i in 0..n.saturating_sub(1) {
                let b = (spans[i].1 + spans[i + 1].0).div_euclid(2);
                spans[i].1 = b;
                spans[i + 1].0 = b;
            }
            let mut lag = || if spec.lag_ms == 0 { 0 } else { rng.random_range(-spec.lag_ms..=spec.lag_ms) };
            // lags for the session start, every shared boundary, and the end
            let lags: Vec<i64> = (0..=n).map(|_| lag()).collect();

            let mut turns = Vec::with_capacity(n);
            let mut session_words = Vec::new();
            for (i, d) in drafts.iter().enumerate() {
                let text_words: Vec<&str> = d.words.iter().map(|w| w.0.as_str()).collect();
                let mut text = text_words.join(" ");
                if let Some(f) = text.get(0..1) {
                    text = format!("{}{}.", f.to_uppercase(), &text[1..]);
                }
                turns.push(Turn {
                    index: i,
                    speaker_id: ids[d.speaker].clone(),
                    start_ms: spans[i].0 + lags[i],
                    end_ms: spans[i].1 + lags[i + 1],
                    text,
                    code: d.code,
                });
                for (w, s, e) in &d.words {
                    session_words.push(WordTiming { word: w.clone(), start_ms: *s, end_ms: *e, turn: None });
                }
            }

            let mut frng = seed::rng_at(spec.seed, &[3, k as u64, ci as u64]);
            for (i, &(_, class)) in codes.iter().enumerate() {
                let key = TurnKey::new(session_id.clone(), i);
                acoustic
                    .insert(key.clone(), gaussian(spec.acoustic_dim, class, spec.mean_shift, &mut frng))
                    .expect("finite draw");
                lexical
                    .insert(key, gaussian(spec.lexical_dim, class, spec.mean_shift, &mut frng))
                    .expect("finite draw");
            }
            if spec.emit_frames {
                let end = spans.last().map_or(SESSION_START_MS, |s| s.1) + SESSION_START_MS;
                frames_out.insert(session_id.clone(), session_frames(spec, &channels, &codes, &spans, end, &mut frng));
            }

            truth.push(SessionTruth { session_id: session_id.clone(), spans });
            words_out.insert(session_id.clone(), session_words);
            sessions.push(Session { id: session_id, couple_id: couple.clone(), content, turns });
        }
    }

    let hostile_couples = couples.iter().zip(&hostile_set).filter(|(_, &h)| h).map(|(c, _)| c.clone()).collect();
    let corpus = Corpus::new(speakers, sessions).map_err(|e| SynthError::Invalid(format!("generated corpus: {e}")))?;
    Ok(Generated {
        corpus,
        words: words_out,
        frames: frames_out,
        acoustic,
        lexical,
        sidecar: Sidecar { spec: spec.clone(), sessions: truth, class_counts: counts, hostile_couples },
    })
}

/// Frame descriptors over the whole session. Inside a turn each channel is
/// a per-turn Gaussian level plus frame noise; the first three channels
/// carry the class signal.
fn session_frames(
    spec: &SynthSpec,
    channels: &[String],
    codes: &[(BehaviorCode, Option<BehaviorClass>)],
    spans: &[(i64, i64)],
    end_ms: i64,
    rng: &mut seed::Rng,
) -> SessionFrames {
    let levels: Vec<Vec<f64>> =
        codes.iter().map(|&(_, class)| gaussian(channels.len(), class, spec.mean_shift, rng)).collect();
    let mut frame_ms = Vec::new();
    let mut values = Vec::new();
    let mut turn = 0usize;
    let mut t = 0;
    while t < end_ms {
        while turn < spans.len() && spans[turn].1 <= t {
            turn += 1;
        }
        let inside = turn < spans.len() && spans[turn].0 <= t;
        for ch in 0..channels.len() {
            let z: f64 = rng.sample(StandardNormal);
            let v = if inside { levels[turn][ch] + 0.5 * z } else { 0.5 * z };
            // four decimals keep the files compact
            values.push((v * 1e4).round() / 1e4);
        }
        frame_ms.push(t);
        t += spec.frame_step_ms;
    }
    let frames = FrameMatrix::new(channels.to_vec(), frame_ms.len(), values).expect("finite frames");
    SessionFrames { frame_ms, frames }
}

/// Writes a generated corpus under `dir`: corpus files, word timings,
/// frames, feature tables, `truth.json` and `manifest.json`.
pub fn write_generated(g: &Generated, dir: &Path) -> Result<Manifest, IoError> {
    let spec = &g.sidecar.spec;
    let mut features = FeaturePaths::default();
    if spec.emit_features {
        let a = PathBuf::from("acoustic.csv");
        let l = PathBuf::from("lexical.csv");
        io::write_feature_table(&dir.join(&a), &g.acoustic)?;
        io::write_feature_table(&dir.join(&l), &g.lexical)?;
        features = FeaturePaths { acoustic: Some(a), lexical: Some(l) };
    }
    let mut manifest = io::write_corpus_files(&g.corpus, dir, features)?;
    for entry in &mut manifest.sessions {
        let stem = entry.turns.to_string_lossy().trim_end_matches(".turns.csv").to_string();
        if spec.emit_words {
            if let Some(w) = g.words.get(&entry.session_id) {
                let p = PathBuf::from(format!("{stem}.words.json"));
                io::write_words(&dir.join(&p), w)?;
                entry.words = Some(p);
            }
        }
        if let Some(f) = g.frames.get(&entry.session_id) {
            let p = PathBuf::from(format!("{stem}.frames.csv"));
            io::write_frames(&dir.join(&p), f)?;
            entry.frames = Some(p);
        }
    }
    io::write_json(&dir.join("truth.json"), &g.sidecar)?;
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Result of checking a corpus against its generation sidecar.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub violations: Vec<String>,
    pub checked_turns: usize,
    /// Turns whose corrected span differs from the true span by more than
    /// 1 ms.
    pub span_mismatches: usize,
    pub max_span_error_ms: i64,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.span_mismatches == 0
    }
}

/// Checks every corpus invariant, then realigns each session from its word
/// timings and compares the corrected spans with the stored truth.
pub fn verify(
    speakers: &[Speaker],
    sessions: &[Session],
    words: &BTreeMap<String, Vec<WordTiming>>,
    sidecar: &Sidecar,
) -> VerifyReport {
    let mut report = VerifyReport {
        violations: violations(speakers, sessions).iter().map(ToString::to_string).collect(),
        ..Default::default()
    };
    let truth: BTreeMap<&str, &SessionTruth> = sidecar.sessions.iter().map(|s| (s.session_id.as_str(), s)).collect();
    for s in sessions {
        let Some(t) = truth.get(s.id.as_str()) else {
            report.violations.push(format!("session `{}` is missing from the sidecar", s.id));
            continue;
        };
        if t.spans.len() != s.turns.len() {
            report.violations.push(format!("session `{}`: sidecar has {} turns, corpus {}", s.id, t.spans.len(), s.turns.len()));
            continue;
        }
        let Some(w) = words.get(&s.id) else { continue };
        match align_session(&s.turns, w) {
            Ok(corrected) => {
                for (turn, &(ts, te)) in corrected.turns.iter().zip(&t.spans) {
                    if corrected.flagged.contains(&turn.index) {
                        continue;
                    }
                    report.checked_turns += 1;
                    let err = (turn.start_ms - ts).abs().max((turn.end_ms - te).abs());
                    report.max_span_error_ms = report.max_span_error_ms.max(err);
                    if err > 1 {
                        report.span_mismatches += 1;
                    }
                }
            }
            Err(e) => report.violations.push(format!("session `{}`: {e}", s.id)),
        }
    }
    report
}

/// Reads a generated corpus directory without validating it, then verifies.
pub fn verify_dir(dir: &Path) -> Result<VerifyReport, IoError> {
    let manifest = Manifest::read(&dir.join("manifest.json"))?;
    let sidecar: Sidecar = io::read_json(&dir.join("truth.json"))?;
    let speakers = io::read_speakers(&manifest.resolve(&manifest.speakers))?;
    let mut sessions = Vec::new();
    let mut words = BTreeMap::new();
    for entry in &manifest.sessions {
        sessions.push(io::read_session(&manifest, entry)?.0);
        if let Some(p) = &entry.words {
            words.insert(entry.session_id.clone(), io::read_words(&manifest.resolve(p))?);
        }
    }
    Ok(verify(&speakers, &sessions, &words, &sidecar))
}

/// Share of minority-label turns with a same-label neighbor within
/// `distance` turns, next to the share expected under independent labels
/// with the same marginals.
pub fn neighbor_clustering(corpus: &Corpus, distance: usize) -> (f64, f64) {
    let mut hits = 0usize;
    let mut total = 0usize;
    let mut counts = ClassCounts::default();
    let mut seqs = Vec::new();
    for s in corpus.sessions() {
        let labels: Vec<Option<BehaviorClass>> = s.turns.iter().map(|t| t.code.class()).collect();
        labels.iter().flatten().for_each(|&c| counts[c] += 1);
        seqs.push(labels);
    }
    let n = counts.total() as f64;
    let mut baseline = 0.0;
    for labels in &seqs {
        for (i, l) in labels.iter().enumerate() {
            let Some(c) = l.filter(|c| c.is_target()) else { continue };
            total += 1;
            let lo = i.saturating_sub(distance);
            let hi = (i + distance).min(labels.len() - 1);
            let neighbors = (lo..=hi).filter(|&j| j != i && labels[j].is_some()).count();
            if (lo..=hi).any(|j| j != i && labels[j] == Some(c)) {
                hits += 1;
            }
            let p = counts.get(c) as f64 / n;
            baseline += 1.0 - (1.0 - p).powi(neighbors as i32);
        }
    }
    if total == 0 {
        return (0.0, 0.0);
    }
    (hits as f64 / total as f64, baseline / total as f64)
}

// ---------------------------------------------------------------- fixture

/// Per-cell class counts (Hostile, Constructive, Positive) of the reference
/// annotation, by gender, role and content.
pub const REFERENCE_NONE: ClassCounts = ClassCounts([176, 13450, 1369]);
pub const REFERENCE_MALE: ClassCounts = ClassCounts([72, 6673, 715]);
pub const REFERENCE_FEMALE: ClassCounts = ClassCounts([104, 6777, 654]);
pub const REFERENCE_PATIENT: ClassCounts = ClassCounts([76, 6670, 728]);
pub const REFERENCE_CAREGIVER: ClassCounts = ClassCounts([100, 6780, 641]);
pub const REFERENCE_NEUTRAL: ClassCounts = NEUTRAL_COUNTS;
pub const REFERENCE_STRESS: ClassCounts = STRESS_COUNTS;

/// Splits `total` over a 2x2x2 gender x role x content table whose one-way
/// margins are `male`, `patient` and `neutral`. Cell order is
/// `[g][r][c]` with index 0 for Male, Patient, Neutral.
fn fill_cells(total: u64, male: u64, patient: u64, neutral: u64) -> [[[u64; 2]; 2]; 2] {
    let female = total - male;
    let mp = male.saturating_add(patient).saturating_sub(total).max(male.min(patient) / 2);
    let gr = [[mp, male - mp], [patient - mp, female - (patient - mp)]];
    let mut cells = [[[0u64; 2]; 2]; 2];
    let mut left = neutral;
    for g in 0..2 {
        for r in 0..2 {
            let n = gr[g][r].min(left);
            left -= n;
            cells[g][r] = [n, gr[g][r] - n];
        }
    }
    cells
}

/// A corpus of 85 couples whose class counts under every partition scheme
/// equal the reference table. Couples either pair a male patient with a
/// female caregiver or the reverse; excluded-code turns pad sessions so
/// speakers alternate.
pub fn reference_fixture() -> Corpus {
    const COUPLES: usize = 85;
    let mut cells = [[[[0u64; NUM_CLASSES]; 2]; 2]; 2];
    for c in BehaviorClass::ALL {
        let i = c.index();
        let filled = fill_cells(REFERENCE_NONE.0[i], REFERENCE_MALE.0[i], REFERENCE_PATIENT.0[i], REFERENCE_NEUTRAL.0[i]);
        for g in 0..2 {
            for r in 0..2 {
                for ct in 0..2 {
                    cells[g][r][ct][i] = filled[g][r][ct];
                }
            }
        }
    }

    // couple type 0: male patient + female caregiver; type 1: the reverse
    let kind = |k: usize| k % 2;
    let mut speakers = Vec::new();
    for k in 0..COUPLES {
        let couple = format!("f{k:03}");
        let (pg, cg) = if kind(k) == 0 { (Gender::Male, Gender::Female) } else { (Gender::Female, Gender::Male) };
        speakers.push(Speaker { id: format!("{couple}_p"), couple_id: couple.clone(), gender: pg, role: Role::Patient });
        speakers.push(Speaker { id: format!("{couple}_c"), couple_id: couple, gender: cg, role: Role::Caregiver });
    }

    // labels[couple][content][role]
    let mut labels = vec![[[Vec::new(), Vec::new()], [Vec::new(), Vec::new()]]; COUPLES];
    for (g, by_g) in cells.iter().enumerate() {
        for (r, by_r) in by_g.iter().enumerate() {
            // a male patient or female caregiver lives in type-0 couples
            let t = usize::from((g == 0) != (r == 0));
            let members: Vec<usize> = (0..COUPLES).filter(|&k| kind(k) == t).collect();
            for (ct, by_ct) in by_r.iter().enumerate() {
                let mut slot = 0usize;
                for c in BehaviorClass::ALL {
                    for _ in 0..by_ct[c.index()] {
                        labels[members[slot % members.len()]][ct][r].push(c);
                        slot += 1;
                    }
                }
            }
        }
    }

    let mut sessions = Vec::new();
    for (k, per_content) in labels.into_iter().enumerate() {
        let couple = format!("f{k:03}");
        for (ct, [patient, caregiver]) in per_content.into_iter().enumerate() {
            let content = Content::ALL[ct];
            let mut turns = Vec::new();
            let (mut pi, mut ci) = (patient.into_iter(), caregiver.into_iter());
            let mut remaining = true;
            let mut role = 0;
            while remaining {
                let next = if role == 0 { pi.next() } else { ci.next() };
                let code = match next {
                    Some(BehaviorClass::Hostile) => BehaviorCode::LowHostile,
                    Some(BehaviorClass::Constructive) => BehaviorCode::ConstructiveProblemDiscussion,
                    Some(BehaviorClass::Positive) => BehaviorCode::HighPositive,
                    None => BehaviorCode::Other,
                };
                let i = turns.len() as i64;
                turns.push(Turn {
                    index: turns.len(),
                    speaker_id: format!("{couple}_{}", if role == 0 { "p" } else { "c" }),
                    start_ms: i * 1000,
                    end_ms: i * 1000 + 900,
                    text: String::new(),
                    code,
                });
                role = 1 - role;
                remaining = pi.len() + ci.len() > 0;
            }
            sessions.push(Session { id: format!("{couple}_{content}"), couple_id: couple.clone(), content, turns });
        }
    }
    Corpus::new(speakers, sessions).expect("fixture is valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use turnclass_core::corpus::{class_counts, merge_labels, partition, Indexing, PartitionKey, PartitionScheme};

    fn small() -> SynthSpec {
        SynthSpec { n_couples: 4, turns_per_session: TurnsPerSession { neutral: 30, stress: 30 }, ..Default::default() }
    }

    #[test]
    fn markov_chain_is_stationary_at_the_prior() {
        let pi = [0.05, 0.8, 0.15];
        let mut rng = seed::rng(4);
        let labels = markov_labels(pi, 0.7, 200_000, &mut rng);
        let counts: ClassCounts = labels.into_iter().collect();
        for c in BehaviorClass::ALL {
            let f = counts.get(c) as f64 / 200_000.0;
            assert!((f - pi[c.index()]).abs() < 0.01, "{c}: {f}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.acoustic, b.acoustic);
        assert_eq!(a.words, b.words);
        let c = generate(&SynthSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.corpus, c.corpus);
    }

    #[test]
    fn fresh_corpus_verifies_clean() {
        let g = generate(&small()).unwrap();
        let r = verify(g.corpus.speakers(), g.corpus.sessions(), &g.words, &g.sidecar);
        assert!(r.is_clean(), "{r:?}");
        assert_eq!(r.checked_turns, g.corpus.sessions().iter().map(|s| s.turns.len()).sum::<usize>());
        assert!(r.max_span_error_ms <= 1);
    }

    #[test]
    fn corrupted_overlap_is_one_violation() {
        let g = generate(&small()).unwrap();
        let (speakers, mut sessions) = g.corpus.clone().into_parts();
        let prev_end = sessions[1].turns[4].end_ms;
        sessions[1].turns[5].start_ms = prev_end - 50;
        let r = verify(&speakers, &sessions, &BTreeMap::new(), &g.sidecar);
        assert_eq!(r.violations.len(), 1, "{:?}", r.violations);
        assert!(r.violations[0].contains("turn 5"), "{}", r.violations[0]);
        assert!(r.violations[0].contains(&sessions[1].id));
    }

    #[test]
    fn sparsity_limits_hostile_couples() {
        let spec = SynthSpec { hostile_couple_fraction: Some(0.25), n_couples: 8, ..small() };
        let g = generate(&spec).unwrap();
        assert_eq!(g.sidecar.hostile_couples.len(), 2);
        let ds = merge_labels(&g.corpus, Indexing::default());
        for (couple, counts) in ds.couple_counts() {
            if !g.sidecar.hostile_couples.contains(&couple) {
                assert_eq!(counts.get(BehaviorClass::Hostile), 0);
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(SynthSpec { p_stay: 1.0, ..small() }.validate(), Err(SynthError::Invalid(_))));
        let tiny = SynthSpec { n_couples: 1, turns_per_session: TurnsPerSession { neutral: 5, stress: 5 }, ..small() };
        assert!(matches!(tiny.validate(), Err(SynthError::Infeasible { class: BehaviorClass::Hostile, .. })));
    }

    #[test]
    fn fixture_matches_reference_cells() {
        let ds = merge_labels(&reference_fixture(), Indexing::default());
        assert_eq!(class_counts(&ds), REFERENCE_NONE);
        let want = [
            (PartitionScheme::Gender, PartitionKey::Gender(Gender::Male), REFERENCE_MALE),
            (PartitionScheme::Gender, PartitionKey::Gender(Gender::Female), REFERENCE_FEMALE),
            (PartitionScheme::Role, PartitionKey::Role(Role::Patient), REFERENCE_PATIENT),
            (PartitionScheme::Role, PartitionKey::Role(Role::Caregiver), REFERENCE_CAREGIVER),
            (PartitionScheme::Content, PartitionKey::Content(Content::Neutral), REFERENCE_NEUTRAL),
            (PartitionScheme::Content, PartitionKey::Content(Content::Stress), REFERENCE_STRESS),
        ];
        for (scheme, key, counts) in want {
            let parts = partition(&ds, scheme).unwrap();
            assert_eq!(class_counts(&parts.parts[&key]), counts, "{key}");
        }
        assert_eq!(ds.couple_counts().len(), 85);
    }
}
