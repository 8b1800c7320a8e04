//! Interchange file formats.
//!
//! A corpus is described by a JSON manifest whose paths are relative to the
//! manifest's directory. Every reader reports problems with the file and,
//! for CSV input, the line they were found on.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use turnclass_core::align::{BoundaryCorrection, BoundaryCrossing, WordTiming};
use turnclass_core::corpus::{Content, Corpus, CorpusError, Gender, Role, Session, Speaker, Turn};
use turnclass_core::eval::CurveRow;
use turnclass_core::features::{FeatureTable, FrameMatrix, Functional, FunctionalRecipe, TurnKey};
use turnclass_core::model::{Mlp, MlpConfig};
use turnclass_core::{BehaviorClass, BehaviorCode};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Record { path: PathBuf, line: u64, message: String },
    #[error("{}: {message}", path.display())]
    Content { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: refusing to overwrite existing output", .0.display())]
    Exists(PathBuf),
}

impl IoError {
    fn file(path: &Path, source: std::io::Error) -> Self {
        IoError::File { path: path.to_path_buf(), source }
    }

    fn record(path: &Path, line: u64, message: impl ToString) -> Self {
        IoError::Record { path: path.to_path_buf(), line, message: message.to_string() }
    }

    fn content(path: &Path, message: impl ToString) -> Self {
        IoError::Content { path: path.to_path_buf(), message: message.to_string() }
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>, IoError> {
    let file = File::open(path).map_err(|e| IoError::file(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::Headers).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IoError::file(path, io),
        kind => IoError::record(path, line, format!("{kind:?}")),
    }
}

/// Reads CSV rows into `T`, pairing each with its 1-based line number.
fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<(u64, T)>, IoError> {
    let mut rdr = csv_reader(path)?;
    let found = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.len() < header.len() || header.iter().zip(found.iter()).any(|(a, b)| a != &b) {
        return Err(IoError::record(path, 1, format!("expected header `{}`", header.join(","))));
    }
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                let row = record.deserialize(Some(&found)).map_err(|e| IoError::record(path, line, e))?;
                out.push((line, row));
            }
            Err(e) => return Err(csv_error(path, e)),
        }
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| IoError::file(dir, e))?;
    }
    let file = File::options()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::AlreadyExists => IoError::Exists(path.to_path_buf()),
            _ => IoError::file(path, e),
        })?;
    Ok(BufWriter::new(file))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, IoError> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn finish(path: &Path, mut w: csv::Writer<BufWriter<File>>) -> Result<(), IoError> {
    w.flush().map_err(|e| IoError::file(path, e))
}

/// Writes `value` as pretty JSON followed by a newline. Fails if `path`
/// already exists.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| IoError::Json { path: path.into(), source: e })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| IoError::file(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::Json { path: path.into(), source: e })
}

/// Writes a text file, failing if it already exists.
pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| IoError::file(path, e))
}

fn wrap_csv(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |e| csv_error(path, e)
}

// ---------------------------------------------------------------- manifest

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturePaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acoustic: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexical: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub session_id: String,
    pub couple_id: String,
    pub content: Content,
    pub turns: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
}

/// Corpus manifest. Relative paths resolve against `base`, the manifest's
/// directory, which is not serialized.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub speakers: PathBuf,
    pub sessions: Vec<SessionEntry>,
    #[serde(default)]
    pub features: FeaturePaths,
    #[serde(skip)]
    pub base: PathBuf,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest, IoError> {
        let mut m: Manifest = read_json(path)?;
        m.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// A copy with absolute paths, so it can be written anywhere.
    pub fn rebased(&self) -> Manifest {
        let r = |p: &PathBuf| {
            let p = self.resolve(p);
            std::path::absolute(&p).unwrap_or(p)
        };
        let ro = |p: &Option<PathBuf>| p.as_ref().map(r);
        Manifest {
            speakers: r(&self.speakers),
            sessions: self
                .sessions
                .iter()
                .map(|s| SessionEntry {
                    turns: r(&s.turns),
                    transcript: ro(&s.transcript),
                    words: ro(&s.words),
                    frames: ro(&s.frames),
                    ..s.clone()
                })
                .collect(),
            features: FeaturePaths { acoustic: ro(&self.features.acoustic), lexical: ro(&self.features.lexical) },
            base: PathBuf::new(),
        }
    }

    pub fn entry(&self, session_id: &str) -> Option<&SessionEntry> {
        self.sessions.iter().find(|s| s.session_id == session_id)
    }
}

// ---------------------------------------------------------------- speakers

pub const SPEAKERS_HEADER: [&str; 4] = ["speaker_id", "couple_id", "gender", "role"];
pub const TURNS_HEADER: [&str; 5] = ["index", "speaker_id", "start_ms", "end_ms", "code"];
pub const TRANSCRIPT_HEADER: [&str; 3] = ["index", "speaker_id", "text"];

#[derive(Deserialize)]
struct SpeakerRow {
    speaker_id: String,
    couple_id: String,
    gender: String,
    role: String,
}

pub fn read_speakers(path: &Path) -> Result<Vec<Speaker>, IoError> {
    read_rows::<SpeakerRow>(path, &SPEAKERS_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let gender: Gender = r.gender.parse().map_err(|e| IoError::record(path, line, format!("gender: {e}")))?;
            let role: Role = r.role.parse().map_err(|e| IoError::record(path, line, format!("role: {e}")))?;
            Ok(Speaker { id: r.speaker_id, couple_id: r.couple_id, gender, role })
        })
        .collect()
}

pub fn write_speakers(path: &Path, speakers: &[Speaker]) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    w.write_record(SPEAKERS_HEADER).map_err(wrap_csv(path))?;
    for s in speakers {
        w.write_record([s.id.as_str(), &s.couple_id, s.gender.as_str(), s.role.as_str()]).map_err(wrap_csv(path))?;
    }
    finish(path, w)
}

// ---------------------------------------------------------------- turns

#[derive(Deserialize)]
struct TurnRow {
    index: usize,
    speaker_id: String,
    start_ms: i64,
    end_ms: i64,
    code: String,
}

/// Turns in file order with their line numbers; text is left empty.
pub fn read_turns(path: &Path) -> Result<Vec<(u64, Turn)>, IoError> {
    read_rows::<TurnRow>(path, &TURNS_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let code: BehaviorCode = r.code.parse().map_err(|e| IoError::record(path, line, format!("code: {e}")))?;
            let turn = Turn {
                index: r.index,
                speaker_id: r.speaker_id,
                start_ms: r.start_ms,
                end_ms: r.end_ms,
                text: String::new(),
                code,
            };
            Ok((line, turn))
        })
        .collect()
}

pub fn write_turns(path: &Path, turns: &[Turn]) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    w.write_record(TURNS_HEADER).map_err(wrap_csv(path))?;
    for t in turns {
        w.write_record([
            t.index.to_string(),
            t.speaker_id.clone(),
            t.start_ms.to_string(),
            t.end_ms.to_string(),
            t.code.as_str().to_string(),
        ])
        .map_err(wrap_csv(path))?;
    }
    finish(path, w)
}

#[derive(Deserialize)]
struct TranscriptRow {
    index: usize,
    speaker_id: String,
    text: String,
}

/// Transcript rows keyed by turn index: `(line, speaker_id, text)`.
pub fn read_transcript(path: &Path) -> Result<BTreeMap<usize, (u64, String, String)>, IoError> {
    let mut out = BTreeMap::new();
    for (line, r) in read_rows::<TranscriptRow>(path, &TRANSCRIPT_HEADER)? {
        if out.insert(r.index, (line, r.speaker_id, r.text)).is_some() {
            return Err(IoError::record(path, line, format!("duplicate turn index {}", r.index)));
        }
    }
    Ok(out)
}

pub fn write_transcript(path: &Path, turns: &[Turn]) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    w.write_record(TRANSCRIPT_HEADER).map_err(wrap_csv(path))?;
    for t in turns {
        w.write_record([t.index.to_string().as_str(), &t.speaker_id, &t.text]).map_err(wrap_csv(path))?;
    }
    finish(path, w)
}

// ---------------------------------------------------------------- corpus

fn session_turn(e: &CorpusError) -> Option<(&str, usize)> {
    match e {
        CorpusError::NonContiguousIndex { session, found, .. } => Some((session, *found)),
        CorpusError::EmptySpan { session, turn, .. }
        | CorpusError::Overlap { session, turn, .. }
        | CorpusError::SameSpeakerAdjacent { session, turn, .. }
        | CorpusError::UnknownSpeaker { session, turn, .. }
        | CorpusError::ForeignSpeaker { session, turn, .. } => Some((session, *turn)),
        _ => None,
    }
}

/// Reads a session's turns and transcript.
pub fn read_session(manifest: &Manifest, entry: &SessionEntry) -> Result<(Session, BTreeMap<usize, u64>), IoError> {
    let turns_path = manifest.resolve(&entry.turns);
    let rows = read_turns(&turns_path)?;
    let lines: BTreeMap<usize, u64> = rows.iter().rev().map(|(l, t)| (t.index, *l)).collect();
    let mut turns: Vec<Turn> = rows.into_iter().map(|(_, t)| t).collect();
    if let Some(tp) = &entry.transcript {
        let path = manifest.resolve(tp);
        let mut transcript = read_transcript(&path)?;
        for t in &mut turns {
            let (line, speaker, text) = transcript
                .remove(&t.index)
                .ok_or_else(|| IoError::content(&path, format!("no transcript row for turn {}", t.index)))?;
            if speaker != t.speaker_id {
                return Err(IoError::record(
                    &path,
                    line,
                    format!("turn {} speaker `{speaker}` differs from `{}` in the turns file", t.index, t.speaker_id),
                ));
            }
            t.text = text;
        }
        if let Some((idx, (line, _, _))) = transcript.into_iter().next() {
            return Err(IoError::record(&path, line, format!("transcript turn {idx} has no annotated segment")));
        }
    }
    let session = Session { id: entry.session_id.clone(), couple_id: entry.couple_id.clone(), content: entry.content, turns };
    Ok((session, lines))
}

/// Loads and validates the corpus described by a manifest.
pub fn load_corpus(manifest_path: &Path) -> Result<Corpus, IoError> {
    read_corpus(&Manifest::read(manifest_path)?)
}

pub fn read_corpus(manifest: &Manifest) -> Result<Corpus, IoError> {
    let speakers_path = manifest.resolve(&manifest.speakers);
    let speakers = read_speakers(&speakers_path)?;
    let mut sessions = Vec::with_capacity(manifest.sessions.len());
    let mut lines = BTreeMap::new();
    for entry in &manifest.sessions {
        let (s, l) = read_session(manifest, entry)?;
        lines.insert(s.id.clone(), (manifest.resolve(&entry.turns), l));
        sessions.push(s);
    }
    Corpus::new(speakers, sessions).map_err(|e| {
        if let Some((path, line)) = session_turn(&e).and_then(|(s, t)| {
            let (path, l) = lines.get(s)?;
            Some((path, *l.get(&t)?))
        }) {
            IoError::record(path, line, &e)
        } else {
            let path = match &e {
                CorpusError::UnknownCouple { session, .. } | CorpusError::DuplicateSession(session) => {
                    lines.get(session).map_or(speakers_path.clone(), |(p, _)| p.clone())
                }
                _ => speakers_path.clone(),
            };
            IoError::content(&path, &e)
        }
    })
}

/// File stem for a session id: ASCII alphanumerics, `-` and `_` are kept.
pub fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes speakers, per-session turn and transcript files, and
/// `manifest.json` under `dir`. Existing files are never overwritten.
pub fn write_corpus(corpus: &Corpus, dir: &Path, features: FeaturePaths) -> Result<Manifest, IoError> {
    let manifest = write_corpus_files(corpus, dir, features)?;
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// [`write_corpus`] without the manifest file, for callers that add
/// per-session entries first.
pub fn write_corpus_files(corpus: &Corpus, dir: &Path, features: FeaturePaths) -> Result<Manifest, IoError> {
    let speakers = PathBuf::from("speakers.csv");
    write_speakers(&dir.join(&speakers), corpus.speakers())?;
    let mut entries = Vec::new();
    for (k, s) in corpus.sessions().iter().enumerate() {
        let stem = format!("sessions/{k:04}_{}", file_stem(&s.id));
        let turns = PathBuf::from(format!("{stem}.turns.csv"));
        let transcript = PathBuf::from(format!("{stem}.transcript.csv"));
        write_turns(&dir.join(&turns), &s.turns)?;
        write_transcript(&dir.join(&transcript), &s.turns)?;
        entries.push(SessionEntry {
            session_id: s.id.clone(),
            couple_id: s.couple_id.clone(),
            content: s.content,
            turns,
            transcript: Some(transcript),
            words: None,
            frames: None,
        });
    }
    Ok(Manifest { speakers, sessions: entries, features, base: dir.to_path_buf() })
}

// ---------------------------------------------------------------- words

pub fn read_words(path: &Path) -> Result<Vec<WordTiming>, IoError> {
    read_json(path)
}

pub fn write_words(path: &Path, words: &[WordTiming]) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, words).map_err(|e| IoError::Json { path: path.into(), source: e })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| IoError::file(path, e))
}

// ---------------------------------------------------------------- frames

/// Frame descriptors of one session: frame times and the frame matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionFrames {
    pub frame_ms: Vec<i64>,
    pub frames: FrameMatrix,
}

impl SessionFrames {
    /// Frames whose time lies in `[start_ms, end_ms)`.
    pub fn span(&self, start_ms: i64, end_ms: i64) -> FrameMatrix {
        let lo = self.frame_ms.partition_point(|&t| t < start_ms);
        let hi = self.frame_ms.partition_point(|&t| t < end_ms);
        self.frames.slice(lo..hi.max(lo))
    }
}

pub fn read_frames(path: &Path) -> Result<SessionFrames, IoError> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.get(0) != Some("frame_ms") || header.len() < 2 {
        return Err(IoError::record(path, 1, "expected header `frame_ms,<channel>,...`"));
    }
    let channels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut frame_ms = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let t: i64 = rec[0].trim().parse().map_err(|e| IoError::record(path, line, format!("frame_ms: {e}")))?;
        if frame_ms.last().is_some_and(|&p| t <= p) {
            return Err(IoError::record(path, line, "frame times must increase"));
        }
        frame_ms.push(t);
        for (j, field) in rec.iter().enumerate().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|e| IoError::record(path, line, format!("{}: {e}", channels[j - 1])))?;
            values.push(v);
        }
    }
    let frames = FrameMatrix::new(channels, frame_ms.len(), values).map_err(|e| IoError::content(path, e))?;
    Ok(SessionFrames { frame_ms, frames })
}

pub fn write_frames(path: &Path, frames: &SessionFrames) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["frame_ms".to_string()];
    header.extend(frames.frames.channels().iter().cloned());
    w.write_record(&header).map_err(wrap_csv(path))?;
    let cols: Vec<Vec<f64>> = (0..frames.frames.channels().len()).map(|j| frames.frames.column(j)).collect();
    for (i, t) in frames.frame_ms.iter().enumerate() {
        let mut rec = Vec::with_capacity(cols.len() + 1);
        rec.push(t.to_string());
        rec.extend(cols.iter().map(|c| c[i].to_string()));
        w.write_record(&rec).map_err(wrap_csv(path))?;
    }
    finish(path, w)
}

// ---------------------------------------------------------------- feature tables

/// Reads `session_id,turn_index,v0..v{d-1}`; the dimension comes from the
/// header and, when given, must equal `expected_dim`.
pub fn read_feature_table(path: &Path, expected_dim: Option<usize>) -> Result<FeatureTable, IoError> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let dim = header.len().saturating_sub(2);
    let ok = header.get(0) == Some("session_id")
        && header.get(1) == Some("turn_index")
        && header.iter().skip(2).enumerate().all(|(i, h)| h == format!("v{i}"));
    if !ok || dim == 0 {
        return Err(IoError::record(path, 1, "expected header `session_id,turn_index,v0,...`"));
    }
    if let Some(d) = expected_dim.filter(|&d| d != dim) {
        return Err(IoError::record(path, 1, format!("dimension {dim}, expected {d}")));
    }
    let mut table = FeatureTable::new(dim);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let turn: usize = rec[1].trim().parse().map_err(|e| IoError::record(path, line, format!("turn_index: {e}")))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::record(path, line, e))?;
        table
            .insert(TurnKey::new(&rec[0], turn), values)
            .map_err(|e| IoError::record(path, line, e))?;
    }
    Ok(table)
}

/// Values are written in shortest round-trip form, so reading back gives
/// bitwise-equal vectors.
pub fn write_feature_table(path: &Path, table: &FeatureTable) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["session_id".to_string(), "turn_index".to_string()];
    header.extend((0..table.dim).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(wrap_csv(path))?;
    for (key, values) in &table.rows {
        let mut rec = Vec::with_capacity(values.len() + 2);
        rec.push(key.session_id.clone());
        rec.push(key.turn_index.to_string());
        rec.extend(values.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(wrap_csv(path))?;
    }
    finish(path, w)
}

// ---------------------------------------------------------------- recipe

/// Channel name to functional list, in file order.
pub fn parse_recipe(json: &str) -> Result<FunctionalRecipe, String> {
    let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(json).map_err(|e| e.to_string())?;
    let mut entries = Vec::with_capacity(map.len());
    for (channel, list) in map {
        let names: Vec<String> = serde_json::from_value(list).map_err(|e| format!("{channel}: {e}"))?;
        let fs = names
            .iter()
            .map(|n| n.parse::<Functional>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("{channel}: {e}"))?;
        entries.push((channel, fs));
    }
    Ok(FunctionalRecipe { entries })
}

pub fn read_recipe(path: &Path) -> Result<FunctionalRecipe, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    parse_recipe(&text).map_err(|m| IoError::content(path, m))
}

pub fn recipe_json(recipe: &FunctionalRecipe) -> String {
    let mut map = serde_json::Map::new();
    for (ch, fs) in &recipe.entries {
        map.insert(ch.clone(), fs.iter().map(|f| f.as_str()).collect::<Vec<_>>().into());
    }
    serde_json::to_string_pretty(&map).expect("string map serializes")
}

// ---------------------------------------------------------------- labels

/// A turn-level label row of a prediction or truth file.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct LabelRow {
    pub session_id: String,
    pub turn_index: usize,
    pub label: BehaviorClass,
}

#[derive(Deserialize)]
struct RawLabelRow {
    session_id: String,
    turn_index: usize,
    label: String,
}

pub const LABELS_HEADER: [&str; 3] = ["session_id", "turn_index", "label"];

/// Labels may be class names or ordinal code names.
pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>, IoError> {
    read_rows::<RawLabelRow>(path, &LABELS_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let label = r.label.parse().map_err(|e| IoError::record(path, line, format!("label: {e}")))?;
            Ok(LabelRow { session_id: r.session_id, turn_index: r.turn_index, label })
        })
        .collect()
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    w.write_record(LABELS_HEADER).map_err(wrap_csv(path))?;
    for r in rows {
        w.write_record([r.session_id.as_str(), &r.turn_index.to_string(), r.label.as_str()]).map_err(wrap_csv(path))?;
    }
    finish(path, w)
}

// ---------------------------------------------------------------- reports

pub fn write_corrections(path: &Path, rows: &[(String, BoundaryCorrection)]) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    w.write_record(["session_id", "turn_index", "direction", "shift_ms"]).map_err(wrap_csv(path))?;
    for (s, c) in rows {
        w.write_record([s.as_str(), &c.turn_index.to_string(), c.direction.as_str(), &c.shift_ms.to_string()])
            .map_err(wrap_csv(path))?;
    }
    finish(path, w)
}

pub fn write_crossings(path: &Path, rows: &[(String, BoundaryCrossing)]) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    w.write_record(["session_id", "turn_index", "word", "start_ms", "end_ms"]).map_err(wrap_csv(path))?;
    for (s, c) in rows {
        w.write_record([s.as_str(), &c.turn_index.to_string(), &c.word, &c.start_ms.to_string(), &c.end_ms.to_string()])
            .map_err(wrap_csv(path))?;
    }
    finish(path, w)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

pub const CURVE_HEADER: [&str; 5] = ["window_size", "hostile_recall", "positive_recall", "constructive_recall", "uar"];

/// Plot data; an empty field marks a class without true samples.
pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = CURVE_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let rec = |c: BehaviorClass| opt(r.recall[c.index()]);
        out.push_str(&format!(
            "{},{},{},{},{:.6}\n",
            r.window,
            rec(BehaviorClass::Hostile),
            rec(BehaviorClass::Positive),
            rec(BehaviorClass::Constructive),
            r.uar
        ));
    }
    out
}

// ---------------------------------------------------------------- checkpoints

pub const CHECKPOINT_FORMAT: &str = "turnclass-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: MlpConfig,
    pub layers: Vec<CheckpointLayer>,
}

impl Checkpoint {
    pub fn from_model(model: &Mlp) -> Checkpoint {
        let layers = (0..model.num_layers())
            .map(|l| {
                let (inputs, outputs, w, b) = model.layer(l);
                CheckpointLayer { inputs, outputs, weights: w.to_vec(), bias: b.to_vec() }
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config().clone(),
            layers,
        }
    }

    pub fn into_model(self) -> Result<Mlp, String> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(format!("unsupported checkpoint {} v{}", self.format, self.version));
        }
        let params: Vec<f64> = self.layers.into_iter().flat_map(|l| l.weights.into_iter().chain(l.bias)).collect();
        Mlp::from_params(self.config, params).map_err(|e| e.to_string())
    }
}

pub fn write_checkpoint(path: &Path, model: &Mlp) -> Result<(), IoError> {
    write_json(path, &Checkpoint::from_model(model))
}

pub fn read_checkpoint(path: &Path) -> Result<Mlp, IoError> {
    let ck: Checkpoint = read_json(path)?;
    ck.into_model().map_err(|m| IoError::content(path, m))
}
