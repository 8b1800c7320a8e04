//! Turn boundary correction from word-level alignment timings.
//!
//! Annotated turn spans are replaced by the span of the words the transcript
//! assigns to each turn. Where two aligned turns are adjacent the shared
//! boundary sits at the midpoint between the last word of one and the first
//! word of the next (integer milliseconds, rounded down). Words are never
//! split; transcript order decides which turn a word belongs to.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::corpus::Turn;
use crate::text::{normalize_token, normalize_tokens};

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WordTiming {
    pub word: String,
    pub start_ms: i64,
    pub end_ms: i64,
    /// Index of the transcript turn the word belongs to, once assigned.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub turn: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AlignError {
    /// Positions are 1-based over the normalized token sequence.
    #[error("token mismatch at position {position}: transcript has {expected:?}, alignment has {found:?}")]
    TokenMismatch { position: usize, expected: Option<String>, found: Option<String> },
    #[error("word {position} starts at {start_ms} ms, before the previous word")]
    UnorderedWords { position: usize, start_ms: i64 },
    #[error("word {position} references turn {turn}, but the session has {turns} turns")]
    TurnOutOfRange { position: usize, turn: usize, turns: usize },
    #[error("word {position} has no turn assignment")]
    Unassigned { position: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordAssignment {
    pub words: Vec<WordTiming>,
    /// Turns whose text normalizes to no tokens.
    pub unalignable: Vec<usize>,
}

/// Assigns each word to a transcript turn by walking both token sequences in
/// order. The normalized word sequence must equal the concatenated
/// normalized transcript exactly.
pub fn assign_words_to_turns<S: AsRef<str>>(words: &[WordTiming], transcript: &[S]) -> Result<WordAssignment, AlignError> {
    check_order(words)?;
    let mut out = Vec::with_capacity(words.len());
    let mut unalignable = Vec::new();
    let mut cursor = 0usize;
    for (turn, text) in transcript.iter().enumerate() {
        let tokens = normalize_tokens(text.as_ref());
        if tokens.is_empty() {
            unalignable.push(turn);
        }
        for token in tokens {
            let Some(word) = words.get(cursor) else {
                return Err(AlignError::TokenMismatch { position: cursor + 1, expected: Some(token), found: None });
            };
            let norm = normalize_token(&word.word);
            if norm != token {
                return Err(AlignError::TokenMismatch { position: cursor + 1, expected: Some(token), found: Some(norm) });
            }
            out.push(WordTiming { turn: Some(turn), ..word.clone() });
            cursor += 1;
        }
    }
    if let Some(extra) = words.get(cursor) {
        return Err(AlignError::TokenMismatch {
            position: cursor + 1,
            expected: None,
            found: Some(normalize_token(&extra.word)),
        });
    }
    Ok(WordAssignment { words: out, unalignable })
}

fn check_order(words: &[WordTiming]) -> Result<(), AlignError> {
    for (i, pair) in words.windows(2).enumerate() {
        if pair[1].start_ms < pair[0].start_ms {
            return Err(AlignError::UnorderedWords { position: i + 2, start_ms: pair[1].start_ms });
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Direction {
    Forward,
    Backward,
    None,
}

impl Direction {
    fn of(shift: i64) -> Direction {
        match shift {
            s if s > 0 => Direction::Forward,
            s if s < 0 => Direction::Backward,
            _ => Direction::None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
            Direction::None => "none",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How one turn moved. `direction` and `shift_ms` describe the end boundary,
/// or the start boundary when the end did not move.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BoundaryCorrection {
    pub turn_index: usize,
    pub old_start_ms: i64,
    pub old_end_ms: i64,
    pub new_start_ms: i64,
    pub new_end_ms: i64,
    pub direction: Direction,
    pub shift_ms: i64,
}

/// A word that straddles the annotated span of the turn it was assigned to.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BoundaryCrossing {
    pub turn_index: usize,
    pub word: String,
    pub start_ms: i64,
    pub end_ms: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrectedSession {
    pub turns: Vec<Turn>,
    pub corrections: Vec<BoundaryCorrection>,
    /// Turns with no assigned words; their spans are clamped into the gap
    /// left by their neighbors and they are dropped from emitted samples.
    pub flagged: Vec<usize>,
    pub crossings: Vec<BoundaryCrossing>,
}

/// Replaces annotated spans with word spans. `words` must carry turn
/// assignments indexing into `segments`.
pub fn correct_boundaries(segments: &[Turn], words: &[WordTiming]) -> Result<CorrectedSession, AlignError> {
    // (first word start, last word end) per turn
    let mut spans: Vec<Option<(i64, i64)>> = alloc::vec![None; segments.len()];
    let mut crossings = Vec::new();
    for (pos, w) in words.iter().enumerate() {
        let turn = w.turn.ok_or(AlignError::Unassigned { position: pos + 1 })?;
        let seg = segments.get(turn).ok_or(AlignError::TurnOutOfRange {
            position: pos + 1,
            turn,
            turns: segments.len(),
        })?;
        spans[turn] = Some(match spans[turn] {
            None => (w.start_ms, w.end_ms),
            Some((s, e)) => (s.min(w.start_ms), e.max(w.end_ms)),
        });
        if w.start_ms < seg.start_ms || w.end_ms > seg.end_ms {
            crossings.push(BoundaryCrossing {
                turn_index: seg.index,
                word: w.word.clone(),
                start_ms: w.start_ms,
                end_ms: w.end_ms,
            });
        }
    }

    let mut turns: Vec<Turn> = segments.to_vec();
    let aligned: Vec<usize> = (0..segments.len()).filter(|&i| spans[i].is_some()).collect();
    for &i in &aligned {
        let (s, e) = spans[i].unwrap_or_default();
        turns[i].start_ms = s;
        turns[i].end_ms = e;
    }
    for pair in aligned.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b == a + 1 {
            let boundary = (turns[a].end_ms + turns[b].start_ms).div_euclid(2);
            turns[a].end_ms = boundary;
            turns[b].start_ms = boundary;
        }
    }

    let flagged: Vec<usize> = (0..segments.len()).filter(|&i| spans[i].is_none()).collect();
    for &i in &flagged {
        let lo = i.checked_sub(1).map_or(i64::MIN, |p| turns[p].end_ms);
        let hi = turns.get(i + 1).map_or(i64::MAX, |n| n.start_ms);
        let start = turns[i].start_ms.clamp(lo, hi.max(lo));
        let end = turns[i].end_ms.clamp(start, hi.max(start));
        turns[i].start_ms = start;
        turns[i].end_ms = end;
    }

    let corrections = segments
        .iter()
        .zip(&turns)
        .map(|(old, new)| {
            let end_shift = new.end_ms - old.end_ms;
            let shift = if end_shift != 0 { end_shift } else { new.start_ms - old.start_ms };
            BoundaryCorrection {
                turn_index: old.index,
                old_start_ms: old.start_ms,
                old_end_ms: old.end_ms,
                new_start_ms: new.start_ms,
                new_end_ms: new.end_ms,
                direction: Direction::of(shift),
                shift_ms: shift,
            }
        })
        .collect();

    Ok(CorrectedSession { turns, corrections, flagged, crossings })
}

/// Word assignment followed by boundary correction for one session. Turn
/// texts serve as the transcript.
pub fn align_session(segments: &[Turn], words: &[WordTiming]) -> Result<CorrectedSession, AlignError> {
    let assigned = if words.iter().all(|w| w.turn.is_some()) && !words.is_empty() {
        words.to_vec()
    } else {
        let texts: Vec<&str> = segments.iter().map(|t| t.text.as_str()).collect();
        assign_words_to_turns(words, &texts)?.words
    };
    correct_boundaries(segments, &assigned)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledText {
    pub turn_index: usize,
    pub speaker_id: String,
    pub text: String,
    pub code: crate::labels::BehaviorCode,
    pub start_ms: i64,
    pub end_ms: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmittedSamples {
    pub rows: Vec<LabeledText>,
    pub omitted: usize,
}

/// One row per aligned turn with non-empty text, in session order.
pub fn emit_labeled_samples(session: &CorrectedSession) -> EmittedSamples {
    let mut rows = Vec::new();
    let mut omitted = 0;
    for t in &session.turns {
        if session.flagged.contains(&t.index) || normalize_tokens(&t.text).is_empty() {
            omitted += 1;
            continue;
        }
        rows.push(LabeledText {
            turn_index: t.index,
            speaker_id: t.speaker_id.clone(),
            text: t.text.clone(),
            code: t.code,
            start_ms: t.start_ms,
            end_ms: t.end_ms,
        });
    }
    EmittedSamples { rows, omitted }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::BehaviorCode;
    use alloc::vec;

    fn w(word: &str, s: i64, e: i64) -> WordTiming {
        WordTiming { word: word.into(), start_ms: s, end_ms: e, turn: None }
    }

    fn seg(i: usize, s: i64, e: i64, text: &str) -> Turn {
        Turn {
            index: i,
            speaker_id: if i % 2 == 0 { "a".into() } else { "b".into() },
            start_ms: s,
            end_ms: e,
            text: text.into(),
            code: BehaviorCode::ConstructiveProblemDiscussion,
        }
    }

    #[test]
    fn assigns_in_order() {
        let words = [w("hi", 0, 100), w("there", 120, 300), w("yes", 500, 700)];
        let a = assign_words_to_turns(&words, &["hi there", "yes"]).unwrap();
        let turns: Vec<_> = a.words.iter().map(|w| w.turn.unwrap()).collect();
        assert_eq!(turns, [0, 0, 1]);
    }

    #[test]
    fn missing_final_word_reports_position_three() {
        let words = [w("hi", 0, 100), w("there", 120, 300)];
        let err = assign_words_to_turns(&words, &["hi there", "yes"]).unwrap_err();
        assert_eq!(err, AlignError::TokenMismatch { position: 3, expected: Some("yes".into()), found: None });
    }

    #[test]
    fn extra_and_wrong_words() {
        let words = [w("Hi,", 0, 100), w("yes", 120, 300), w("no", 400, 500)];
        assert!(matches!(
            assign_words_to_turns(&words, &["hi", "yes"]),
            Err(AlignError::TokenMismatch { position: 3, expected: None, .. })
        ));
        assert!(matches!(
            assign_words_to_turns(&words, &["hi", "yep no"]),
            Err(AlignError::TokenMismatch { position: 2, .. })
        ));
    }

    #[test]
    fn empty_turn_is_unalignable() {
        let words = [w("hi", 0, 100), w("yes", 500, 700)];
        let a = assign_words_to_turns(&words, &["hi", "...", "yes"]).unwrap();
        assert_eq!(a.unalignable, vec![1]);
        assert_eq!(a.words[1].turn, Some(2));
    }

    #[test]
    fn late_annotation_moves_backward() {
        // annotated boundary at 5000 ms; last word of turn 0 ends 3900, first of turn 1 starts 4200
        let segs = [seg(0, 1000, 5000, "one two"), seg(1, 5000, 8000, "three")];
        let words = [w("one", 1000, 2000), w("two", 2100, 3900), w("three", 4200, 8000)];
        let c = align_session(&segs, &words).unwrap();
        assert_eq!(c.turns[0].end_ms, 4050);
        assert_eq!(c.turns[1].start_ms, 4050);
        assert_eq!(c.corrections[0].direction, Direction::Backward);
        assert_eq!(c.corrections[0].shift_ms, -950);
        assert_eq!(c.corrections[1].direction, Direction::Backward);
    }

    #[test]
    fn early_annotation_moves_forward() {
        let segs = [seg(0, 1000, 3800, "one two"), seg(1, 3800, 8000, "three")];
        let words = [w("one", 1000, 2000), w("two", 2100, 3900), w("three", 4200, 8000)];
        let c = align_session(&segs, &words).unwrap();
        assert_eq!(c.turns[0].end_ms, 4050);
        assert_eq!(c.corrections[0].direction, Direction::Forward);
        assert_eq!(c.corrections[0].shift_ms, 250);
        // "two" ends after the annotated end of turn 0
        assert_eq!(c.crossings.len(), 1);
        assert_eq!(c.crossings[0].word, "two");
    }

    #[test]
    fn word_spans_are_a_fixed_point() {
        let segs = [seg(0, 0, 1000, "a b"), seg(1, 1000, 1800, "c"), seg(2, 1800, 2500, "d")];
        let words = [w("a", 0, 400), w("b", 500, 1000), w("c", 1000, 1800), w("d", 1800, 2500)];
        let c = align_session(&segs, &words).unwrap();
        assert!(c.corrections.iter().all(|k| k.direction == Direction::None));
        assert!(c.crossings.is_empty());
        let again = align_session(&c.turns, &words).unwrap();
        assert_eq!(again.turns, c.turns);
    }

    #[test]
    fn flagged_turn_is_clamped_and_omitted() {
        let segs = [seg(0, 0, 1000, "a"), seg(1, 1000, 1500, "--"), seg(2, 1500, 3000, "b")];
        let words = [w("a", 0, 900), w("b", 1700, 2900)];
        let c = align_session(&segs, &words).unwrap();
        assert_eq!(c.flagged, vec![1]);
        assert!(c.turns[0].end_ms <= c.turns[1].start_ms);
        assert!(c.turns[1].end_ms <= c.turns[2].start_ms);
        let emitted = emit_labeled_samples(&c);
        assert_eq!(emitted.omitted, 1);
        assert_eq!(emitted.rows.iter().map(|r| r.turn_index).collect::<Vec<_>>(), [0, 2]);
        assert_eq!((emitted.rows[1].start_ms, emitted.rows[1].end_ms), (1700, 2900));
    }

    #[test]
    fn emits_rows_in_order() {
        let segs = [seg(0, 0, 1000, "a"), seg(1, 1000, 2000, "b"), seg(2, 2000, 3000, "c")];
        let words = [w("a", 100, 900), w("b", 1100, 1900), w("c", 2100, 2900)];
        let c = align_session(&segs, &words).unwrap();
        let e = emit_labeled_samples(&c);
        assert_eq!(e.rows.len(), 3);
        assert_eq!(e.omitted, 0);
        assert_eq!((e.rows[0].start_ms, e.rows[0].end_ms), (100, 1000));
        assert_eq!((e.rows[1].start_ms, e.rows[1].end_ms), (1000, 2000));
    }

    #[test]
    fn unordered_words_rejected() {
        let words = [w("a", 500, 600), w("b", 100, 200)];
        assert!(matches!(assign_words_to_turns(&words, &["a b"]), Err(AlignError::UnorderedWords { position: 2, .. })));
    }
}
