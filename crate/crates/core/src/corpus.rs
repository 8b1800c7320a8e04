//! Couples, sessions and turns; label merging and partitioning.
//!
//! A [`Corpus`] is validated once at construction and immutable afterwards.
//! Structural problems are rejected, never repaired: boundary repair belongs
//! to [`crate::align`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::labels::{BehaviorClass, BehaviorCode, ClassCounts, UnknownLabel};

macro_rules! two_way_enum {
    ($name:ident { $a:ident => $sa:literal, $b:ident => $sb:literal }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        #[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
        #[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
        pub enum $name {
            $a,
            $b,
        }

        impl $name {
            pub const ALL: [$name; 2] = [$name::$a, $name::$b];

            pub fn as_str(self) -> &'static str {
                match self {
                    $name::$a => $sa,
                    $name::$b => $sb,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownLabel;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $name::ALL
                    .into_iter()
                    .find(|v| v.as_str().eq_ignore_ascii_case(s))
                    .ok_or_else(|| UnknownLabel(s.into()))
            }
        }
    };
}

two_way_enum!(Gender { Male => "male", Female => "female" });
two_way_enum!(Role { Patient => "patient", Caregiver => "caregiver" });
two_way_enum!(Content { Neutral => "neutral", Stress => "stress" });

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Speaker {
    pub id: String,
    pub couple_id: String,
    pub gender: Gender,
    pub role: Role,
}

/// One floor-holding by one speaker.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Turn {
    pub index: usize,
    pub speaker_id: String,
    pub start_ms: i64,
    pub end_ms: i64,
    pub text: String,
    pub code: BehaviorCode,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Session {
    pub id: String,
    pub couple_id: String,
    pub content: Content,
    pub turns: Vec<Turn>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("speaker `{0}` is defined more than once")]
    DuplicateSpeaker(String),
    #[error("couple `{couple}` has {found} speakers, expected 2")]
    CoupleSize { couple: String, found: usize },
    #[error("couple `{0}` does not have one patient and one caregiver")]
    CoupleRoles(String),
    #[error("session `{0}` is defined more than once")]
    DuplicateSession(String),
    #[error("session `{session}` references unknown couple `{couple}`")]
    UnknownCouple { session: String, couple: String },
    #[error("session `{session}`: turn at position {position} has index {found}")]
    NonContiguousIndex { session: String, position: usize, found: usize },
    #[error("session `{session}` turn {turn}: end {end_ms} ms is not after start {start_ms} ms")]
    EmptySpan { session: String, turn: usize, start_ms: i64, end_ms: i64 },
    #[error("session `{session}` turn {turn}: starts at {start_ms} ms before previous turn ends at {prev_end_ms} ms")]
    Overlap { session: String, turn: usize, prev_end_ms: i64, start_ms: i64 },
    #[error("session `{session}` turn {turn}: speaker `{speaker}` also holds the previous turn")]
    SameSpeakerAdjacent { session: String, turn: usize, speaker: String },
    #[error("session `{session}` turn {turn}: unknown speaker `{speaker}`")]
    UnknownSpeaker { session: String, turn: usize, speaker: String },
    #[error("session `{session}` turn {turn}: speaker `{speaker}` belongs to another couple")]
    ForeignSpeaker { session: String, turn: usize, speaker: String },
    #[error("dataset is empty")]
    EmptyDataset,
}

/// A validated collection of speakers and sessions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    speakers: Vec<Speaker>,
    sessions: Vec<Session>,
}

/// Every structural violation in the given speakers and sessions, in
/// discovery order.
pub fn violations(speakers: &[Speaker], sessions: &[Session]) -> Vec<CorpusError> {
    let mut errs = Vec::new();
    let mut by_id: BTreeMap<&str, &Speaker> = BTreeMap::new();
    let mut couples: BTreeMap<&str, Vec<&Speaker>> = BTreeMap::new();
    for s in speakers {
        if by_id.insert(&s.id, s).is_some() {
            errs.push(CorpusError::DuplicateSpeaker(s.id.clone()));
            continue;
        }
        couples.entry(&s.couple_id).or_default().push(s);
    }
    for (couple, members) in &couples {
        if members.len() != 2 {
            errs.push(CorpusError::CoupleSize { couple: (*couple).into(), found: members.len() });
        } else if members[0].role == members[1].role {
            errs.push(CorpusError::CoupleRoles((*couple).into()));
        }
    }

    let mut seen_sessions = BTreeSet::new();
    for session in sessions {
        if !seen_sessions.insert(session.id.as_str()) {
            errs.push(CorpusError::DuplicateSession(session.id.clone()));
        }
        if !couples.contains_key(session.couple_id.as_str()) {
            errs.push(CorpusError::UnknownCouple {
                session: session.id.clone(),
                couple: session.couple_id.clone(),
            });
        }
        let mut prev: Option<&Turn> = None;
        for (pos, turn) in session.turns.iter().enumerate() {
            let sid = || session.id.clone();
            if turn.index != pos {
                errs.push(CorpusError::NonContiguousIndex { session: sid(), position: pos, found: turn.index });
            }
            if turn.end_ms <= turn.start_ms {
                errs.push(CorpusError::EmptySpan {
                    session: sid(),
                    turn: turn.index,
                    start_ms: turn.start_ms,
                    end_ms: turn.end_ms,
                });
            }
            match by_id.get(turn.speaker_id.as_str()) {
                None => errs.push(CorpusError::UnknownSpeaker {
                    session: sid(),
                    turn: turn.index,
                    speaker: turn.speaker_id.clone(),
                }),
                Some(sp) if sp.couple_id != session.couple_id => errs.push(CorpusError::ForeignSpeaker {
                    session: sid(),
                    turn: turn.index,
                    speaker: turn.speaker_id.clone(),
                }),
                Some(_) => {}
            }
            if let Some(p) = prev {
                if turn.start_ms < p.end_ms {
                    errs.push(CorpusError::Overlap {
                        session: sid(),
                        turn: turn.index,
                        prev_end_ms: p.end_ms,
                        start_ms: turn.start_ms,
                    });
                }
                if turn.speaker_id == p.speaker_id {
                    errs.push(CorpusError::SameSpeakerAdjacent {
                        session: sid(),
                        turn: turn.index,
                        speaker: turn.speaker_id.clone(),
                    });
                }
            }
            prev = Some(turn);
        }
    }
    errs
}

impl Corpus {
    /// Validates and wraps; fails with the first violation found.
    pub fn new(speakers: Vec<Speaker>, sessions: Vec<Session>) -> Result<Corpus, CorpusError> {
        if let Some(e) = violations(&speakers, &sessions).into_iter().next() {
            return Err(e);
        }
        Ok(Corpus { speakers, sessions })
    }

    pub fn speakers(&self) -> &[Speaker] {
        &self.speakers
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    pub fn speaker(&self, id: &str) -> Option<&Speaker> {
        self.speakers.iter().find(|s| s.id == id)
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.iter().find(|s| s.id == id)
    }

    /// Couple ids in sorted order.
    pub fn couples(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.speakers.iter().map(|s| s.couple_id.as_str()).collect();
        set.into_iter().collect()
    }

    pub fn into_parts(self) -> (Vec<Speaker>, Vec<Session>) {
        (self.speakers, self.sessions)
    }

    /// Replaces sessions, re-running validation.
    pub fn with_sessions(&self, sessions: Vec<Session>) -> Result<Corpus, CorpusError> {
        Corpus::new(self.speakers.clone(), sessions)
    }
}

/// How sample positions, used for tolerance windows, are assigned.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Indexing {
    /// Positions are the original turn indices; excluded turns leave gaps.
    #[default]
    ExcludeAfterIndexing,
    /// Positions are re-ranked over the retained turns of each session.
    ExcludeBeforeIndexing,
}

/// One labeled turn with its speaker and interaction context.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Sample {
    pub session_id: String,
    pub couple_id: String,
    pub content: Content,
    pub turn_index: usize,
    /// Position in the session sequence used for window distances.
    pub position: usize,
    pub speaker_id: String,
    pub gender: Gender,
    pub role: Role,
    pub code: BehaviorCode,
    pub class: BehaviorClass,
    pub text: String,
    pub start_ms: i64,
    pub end_ms: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LabeledDataset {
    pub samples: Vec<Sample>,
}

/// Maps every ordinal turn to its merged class and drops the rest.
pub fn merge_labels(corpus: &Corpus, indexing: Indexing) -> LabeledDataset {
    let mut samples = Vec::new();
    for session in &corpus.sessions {
        let mut rank = 0;
        for turn in &session.turns {
            let Some(class) = turn.code.class() else { continue };
            // validated corpus: the speaker exists
            let speaker = corpus.speaker(&turn.speaker_id).expect("validated speaker");
            let position = match indexing {
                Indexing::ExcludeAfterIndexing => turn.index,
                Indexing::ExcludeBeforeIndexing => rank,
            };
            rank += 1;
            samples.push(Sample {
                session_id: session.id.clone(),
                couple_id: session.couple_id.clone(),
                content: session.content,
                turn_index: turn.index,
                position,
                speaker_id: turn.speaker_id.clone(),
                gender: speaker.gender,
                role: speaker.role,
                code: turn.code,
                class,
                text: turn.text.clone(),
                start_ms: turn.start_ms,
                end_ms: turn.end_ms,
            });
        }
    }
    LabeledDataset { samples }
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<BehaviorClass> {
        self.samples.iter().map(|s| s.class).collect()
    }

    /// Re-applies the code-to-class map. Identity on merged data.
    pub fn merge_labels(self) -> LabeledDataset {
        let samples = self
            .samples
            .into_iter()
            .filter_map(|mut s| {
                s.class = s.code.class()?;
                Some(s)
            })
            .collect();
        LabeledDataset { samples }
    }

    /// Per-couple class counts, sorted by couple id.
    pub fn couple_counts(&self) -> Vec<(String, ClassCounts)> {
        let mut map: BTreeMap<&str, ClassCounts> = BTreeMap::new();
        for s in &self.samples {
            map.entry(&s.couple_id).or_default()[s.class] += 1;
        }
        map.into_iter().map(|(k, v)| (k.into(), v)).collect()
    }
}

pub fn class_counts(dataset: &LabeledDataset) -> ClassCounts {
    dataset.samples.iter().map(|s| s.class).collect()
}

/// Attribute a dataset is split on before training one model per part.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PartitionScheme {
    #[default]
    None,
    Gender,
    Role,
    Content,
}

impl PartitionScheme {
    pub const ALL: [PartitionScheme; 4] = [
        PartitionScheme::None,
        PartitionScheme::Gender,
        PartitionScheme::Role,
        PartitionScheme::Content,
    ];

    pub fn key(self, sample: &Sample) -> PartitionKey {
        match self {
            PartitionScheme::None => PartitionKey::All,
            PartitionScheme::Gender => PartitionKey::Gender(sample.gender),
            PartitionScheme::Role => PartitionKey::Role(sample.role),
            PartitionScheme::Content => PartitionKey::Content(sample.content),
        }
    }

    /// Every key the scheme can produce.
    pub fn keys(self) -> Vec<PartitionKey> {
        match self {
            PartitionScheme::None => alloc::vec![PartitionKey::All],
            PartitionScheme::Gender => Gender::ALL.into_iter().map(PartitionKey::Gender).collect(),
            PartitionScheme::Role => Role::ALL.into_iter().map(PartitionKey::Role).collect(),
            PartitionScheme::Content => Content::ALL.into_iter().map(PartitionKey::Content).collect(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PartitionScheme::None => "none",
            PartitionScheme::Gender => "gender",
            PartitionScheme::Role => "role",
            PartitionScheme::Content => "content",
        }
    }
}

impl fmt::Display for PartitionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PartitionScheme {
    type Err = UnknownLabel;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PartitionScheme::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownLabel(s.into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PartitionKey {
    All,
    Gender(Gender),
    Role(Role),
    Content(Content),
}

impl fmt::Display for PartitionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionKey::All => f.write_str("all"),
            PartitionKey::Gender(g) => g.fmt(f),
            PartitionKey::Role(r) => r.fmt(f),
            PartitionKey::Content(c) => c.fmt(f),
        }
    }
}

/// A part that lacks samples of some class. Permitted, but worth a warning.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionWarning {
    pub key: PartitionKey,
    pub missing: Vec<BehaviorClass>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partitioned {
    pub parts: BTreeMap<PartitionKey, LabeledDataset>,
    pub warnings: Vec<PartitionWarning>,
}

/// Splits `dataset` into disjoint parts by `scheme`, preserving sample order
/// within each part.
pub fn partition(dataset: &LabeledDataset, scheme: PartitionScheme) -> Result<Partitioned, CorpusError> {
    if dataset.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let mut parts: BTreeMap<PartitionKey, LabeledDataset> = BTreeMap::new();
    for s in &dataset.samples {
        parts.entry(scheme.key(s)).or_default().samples.push(s.clone());
    }
    let warnings = parts
        .iter()
        .filter_map(|(key, part)| {
            let missing: Vec<_> = class_counts(part).missing().collect();
            (!missing.is_empty()).then_some(PartitionWarning { key: *key, missing })
        })
        .collect();
    Ok(Partitioned { parts, warnings })
}
