//! Corpus-level boundary correction and feature extraction.

use std::collections::BTreeMap;

use rayon::prelude::*;

use turnclass_core::align::{align_session, emit_labeled_samples, AlignError, BoundaryCorrection, BoundaryCrossing, WordTiming};
use turnclass_core::corpus::{Corpus, CorpusError, LabeledDataset};
use turnclass_core::features::{fallback_embed, functionals, FeatureError, FeatureTable, FunctionalRecipe, TurnKey};

use crate::io::SessionFrames;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("session `{session}`: {source}")]
    Align { session: String, source: AlignError },
    #[error("corrected corpus is invalid: {0}")]
    Corpus(#[from] CorpusError),
    #[error("session `{session}` turn {turn}: {source}")]
    Feature { session: String, turn: usize, source: FeatureError },
    #[error("session `{0}` has no frame descriptors")]
    NoFrames(String),
    #[error("no features for session `{session}` turn {turn}")]
    MissingKey { session: String, turn: usize },
}

#[derive(Clone, Debug)]
pub struct AlignedCorpus {
    pub corpus: Corpus,
    pub corrections: Vec<(String, BoundaryCorrection)>,
    pub crossings: Vec<(String, BoundaryCrossing)>,
    /// Turns without aligned words, by session.
    pub flagged: Vec<(String, usize)>,
    /// Turns that would not yield a labeled text sample.
    pub omitted: usize,
}

/// Corrects every session that has word timings; other sessions pass
/// through unchanged. Sessions are processed in parallel.
pub fn align_corpus(corpus: &Corpus, words: &BTreeMap<String, Vec<WordTiming>>) -> Result<AlignedCorpus, PipelineError> {
    let results: Vec<_> = corpus
        .sessions()
        .par_iter()
        .map(|s| match words.get(&s.id) {
            None => Ok((s.clone(), None)),
            Some(w) => align_session(&s.turns, w)
                .map(|c| {
                    let mut session = s.clone();
                    session.turns = c.turns.clone();
                    (session, Some(c))
                })
                .map_err(|e| PipelineError::Align { session: s.id.clone(), source: e }),
        })
        .collect();

    let mut sessions = Vec::with_capacity(results.len());
    let mut out = AlignedCorpus {
        corpus: corpus.clone(),
        corrections: Vec::new(),
        crossings: Vec::new(),
        flagged: Vec::new(),
        omitted: 0,
    };
    for r in results {
        let (session, corrected) = r?;
        if let Some(c) = corrected {
            out.omitted += emit_labeled_samples(&c).omitted;
            out.corrections.extend(c.corrections.into_iter().map(|x| (session.id.clone(), x)));
            out.crossings.extend(c.crossings.into_iter().map(|x| (session.id.clone(), x)));
            out.flagged.extend(c.flagged.into_iter().map(|i| (session.id.clone(), i)));
        }
        sessions.push(session);
    }
    out.corpus = corpus.with_sessions(sessions)?;
    Ok(out)
}

/// Functionals over each turn's frames, selected by the turn's span.
pub fn acoustic_features(
    corpus: &Corpus,
    frames: &BTreeMap<String, SessionFrames>,
    recipe: &FunctionalRecipe,
) -> Result<FeatureTable, PipelineError> {
    let rows: Vec<Vec<(TurnKey, Vec<f64>)>> = corpus
        .sessions()
        .par_iter()
        .map(|s| {
            let f = frames.get(&s.id).ok_or_else(|| PipelineError::NoFrames(s.id.clone()))?;
            s.turns
                .iter()
                .map(|t| {
                    let v = functionals(&f.span(t.start_ms, t.end_ms), recipe).map_err(|e| PipelineError::Feature {
                        session: s.id.clone(),
                        turn: t.index,
                        source: e,
                    })?;
                    Ok((TurnKey::new(s.id.clone(), t.index), v.values))
                })
                .collect()
        })
        .collect::<Result<_, PipelineError>>()?;
    let mut table = FeatureTable::new(recipe.output_dim());
    for (key, values) in rows.into_iter().flatten() {
        let (session, turn) = (key.session_id.clone(), key.turn_index);
        table.insert(key, values).map_err(|e| PipelineError::Feature { session, turn, source: e })?;
    }
    Ok(table)
}

/// Hashed bag-of-words vectors of every turn's text.
pub fn fallback_lexical(corpus: &Corpus, dim: usize, seed: u64) -> FeatureTable {
    let mut table = FeatureTable::new(dim);
    for s in corpus.sessions() {
        for t in &s.turns {
            table.rows.insert(TurnKey::new(s.id.clone(), t.index), fallback_embed(&t.text, dim, seed).values);
        }
    }
    table
}

/// Fails on the first dataset sample without a row in `table`.
pub fn check_coverage(table: &FeatureTable, dataset: &LabeledDataset) -> Result<(), PipelineError> {
    match dataset.samples.iter().find(|s| table.get(&s.session_id, s.turn_index).is_none()) {
        Some(s) => Err(PipelineError::MissingKey { session: s.session_id.clone(), turn: s.turn_index }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recipe::default_recipe;
    use crate::synth::{generate, SynthSpec, TurnsPerSession};
    use turnclass_core::align::Direction;
    use turnclass_core::corpus::{merge_labels, Indexing};

    fn spec() -> SynthSpec {
        SynthSpec {
            n_couples: 2,
            turns_per_session: TurnsPerSession { neutral: 25, stress: 25 },
            priors: crate::synth::ContentPriors { neutral: [0.1, 0.7, 0.2], stress: [0.1, 0.7, 0.2] },
            emit_frames: true,
            ..Default::default()
        }
    }

    #[test]
    fn alignment_recovers_true_spans() {
        let g = generate(&spec()).unwrap();
        let a = align_corpus(&g.corpus, &g.words).unwrap();
        assert!(a.flagged.is_empty());
        for (s, truth) in a.corpus.sessions().iter().zip(&g.sidecar.sessions) {
            for (t, &(ts, te)) in s.turns.iter().zip(&truth.spans) {
                assert_eq!((t.start_ms, t.end_ms), (ts, te));
            }
        }
        // realigning corrected data moves nothing
        let again = align_corpus(&a.corpus, &g.words).unwrap();
        assert!(again.corrections.iter().all(|(_, c)| c.direction == Direction::None));
    }

    #[test]
    fn words_reproduce_turn_text() {
        let g = generate(&spec()).unwrap();
        for s in g.corpus.sessions() {
            let texts: Vec<&str> = s.turns.iter().map(|t| t.text.as_str()).collect();
            let assigned = turnclass_core::align::assign_words_to_turns(&g.words[&s.id], &texts).unwrap();
            for (i, t) in s.turns.iter().enumerate() {
                let joined: Vec<&str> =
                    assigned.words.iter().filter(|w| w.turn == Some(i)).map(|w| w.word.as_str()).collect();
                assert_eq!(turnclass_core::text::normalize_tokens(&t.text), joined);
            }
        }
    }

    #[test]
    fn acoustic_features_cover_every_turn() {
        let g = generate(&spec()).unwrap();
        let a = align_corpus(&g.corpus, &g.words).unwrap();
        let table = acoustic_features(&a.corpus, &g.frames, &default_recipe()).unwrap();
        assert_eq!(table.dim, 88);
        let ds = merge_labels(&a.corpus, Indexing::default());
        check_coverage(&table, &ds).unwrap();
        assert!(acoustic_features(&a.corpus, &BTreeMap::new(), &default_recipe()).is_err());
    }

    #[test]
    fn coverage_names_missing_turn() {
        let g = generate(&spec()).unwrap();
        let ds = merge_labels(&g.corpus, Indexing::default());
        let mut table = fallback_lexical(&g.corpus, 16, 0);
        let first = &ds.samples[0];
        table.rows.remove(&TurnKey::new(first.session_id.clone(), first.turn_index));
        let err = check_coverage(&table, &ds).unwrap_err().to_string();
        assert!(err.contains(&first.session_id) && err.contains(&format!("turn {}", first.turn_index)), "{err}");
    }
}
