use proptest::prelude::*;

use turnclass_core::corpus::{class_counts, partition, Content, Gender, LabeledDataset, PartitionScheme, Role, Sample};
use turnclass_core::eval::{windowed_confusion, ConfusionMatrix, ScoredTurn, WindowOptions, WindowSpec};
use turnclass_core::features::{functionals, FrameMatrix, Functional, FunctionalRecipe};
use turnclass_core::folds::make_fold_plan;
use turnclass_core::model::{Mlp, MlpConfig};
use turnclass_core::{BehaviorClass, BehaviorCode, ClassCounts, Matrix};

fn class() -> impl Strategy<Value = BehaviorClass> {
    (0usize..3).prop_map(|i| BehaviorClass::from_index(i).unwrap())
}

fn code() -> impl Strategy<Value = BehaviorCode> {
    (0usize..7).prop_map(|i| BehaviorCode::ALL[i])
}

fn sample() -> impl Strategy<Value = Sample> {
    (0u8..4, 0u8..2, any::<bool>(), any::<bool>(), any::<bool>(), 0usize..5, 0usize..50).prop_map(
        |(couple, sess, male, patient, stress, ord, idx)| {
            let code = BehaviorCode::ORDINAL[ord];
            Sample {
                session_id: format!("c{couple}_s{sess}"),
                couple_id: format!("c{couple}"),
                content: if stress { Content::Stress } else { Content::Neutral },
                turn_index: idx,
                position: idx,
                speaker_id: format!("c{couple}_{}", u8::from(patient)),
                gender: if male { Gender::Male } else { Gender::Female },
                role: if patient { Role::Patient } else { Role::Caregiver },
                code,
                class: code.class().unwrap(),
                text: String::new(),
                start_ms: 0,
                end_ms: 1,
            }
        },
    )
}

/// Brute-force window scan: for each turn, look at every turn of the same
/// session within the index distance.
fn oracle(items: &[ScoredTurn], w: usize, same_speaker: bool) -> ConfusionMatrix {
    let h = (w - 1) / 2;
    let mut cm = ConfusionMatrix::default();
    for a in items {
        let mut pred = a.pred;
        if a.truth != BehaviorClass::Constructive {
            let found = items.iter().any(|b| {
                b.session == a.session
                    && a.position.abs_diff(b.position) <= h
                    && b.pred == a.truth
                    && (!same_speaker || b.speaker == a.speaker)
            });
            if found {
                pred = a.truth;
            }
        }
        cm.0[a.truth.index()][pred.index()] += 1;
    }
    cm
}

fn sequences() -> impl Strategy<Value = Vec<ScoredTurn>> {
    prop::collection::vec((0u32..2, 0u32..2, class(), class()), 1..=20).prop_map(|v| {
        let mut next = [0usize; 2];
        v.into_iter()
            .map(|(session, speaker, truth, pred)| {
                let position = next[session as usize];
                // occasional gaps from excluded turns
                next[session as usize] += 1 + (speaker as usize & usize::from(truth == pred));
                ScoredTurn { session, speaker, position, truth, pred }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn windowed_matches_brute_force(items in sequences(), half in 0usize..6, same in any::<bool>()) {
        let w = 2 * half + 1;
        let opts = WindowOptions { same_speaker: same };
        prop_assert_eq!(windowed_confusion(&items, WindowSpec::new(w).unwrap(), opts), oracle(&items, w, same));
    }

    #[test]
    fn window_one_is_exact(items in sequences()) {
        let truth: Vec<_> = items.iter().map(|t| t.truth).collect();
        let pred: Vec<_> = items.iter().map(|t| t.pred).collect();
        let exact = ConfusionMatrix::from_pairs(&truth, &pred).unwrap();
        prop_assert_eq!(windowed_confusion(&items, WindowSpec::EXACT, WindowOptions::default()), exact);
    }

    #[test]
    fn windowed_recall_monotone(items in sequences()) {
        let mut prev: Option<ConfusionMatrix> = None;
        for w in [1, 3, 5, 7, 9, 11] {
            let cm = windowed_confusion(&items, WindowSpec::new(w).unwrap(), WindowOptions::default());
            if let Some(p) = prev {
                for c in BehaviorClass::ALL {
                    prop_assert!(cm.recall(c).unwrap_or(0.0) >= p.recall(c).unwrap_or(0.0));
                }
            }
            prev = Some(cm);
        }
    }

    #[test]
    fn absent_class_does_not_change_uar(a in 1u64..50, b in 0u64..50, c in 0u64..50, d in 1u64..50, absent in 0usize..3) {
        // two present classes, the third neither true nor predicted
        let present: Vec<usize> = (0..3).filter(|&i| i != absent).collect();
        let mut cm = ConfusionMatrix::default();
        cm.0[present[0]][present[0]] = a;
        cm.0[present[0]][present[1]] = b;
        cm.0[present[1]][present[0]] = c;
        cm.0[present[1]][present[1]] = d;
        let two_class = (a as f64 / (a + b) as f64 + d as f64 / (c + d) as f64) / 2.0;
        prop_assert!((cm.uar().unwrap() - two_class).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>(), rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 1..8)) {
        let m = Mlp::init(MlpConfig::new(4, &[6, 5], seed)).unwrap();
        let p = m.forward(&Matrix::from_rows(&rows, 4)).unwrap();
        for row in p.iter_rows() {
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn partition_is_a_disjoint_cover(samples in prop::collection::vec(sample(), 1..60)) {
        let ds = LabeledDataset { samples };
        for scheme in PartitionScheme::ALL {
            let parts = partition(&ds, scheme).unwrap();
            let total: ClassCounts = parts.parts.values().map(class_counts).sum();
            prop_assert_eq!(total, class_counts(&ds));
            let mut joined: Vec<String> = parts.parts.values().flat_map(|p| p.samples.iter().map(|s| format!("{s:?}"))).collect();
            let mut orig: Vec<String> = ds.samples.iter().map(|s| format!("{s:?}")).collect();
            joined.sort();
            orig.sort();
            prop_assert_eq!(joined, orig);
        }
    }

    #[test]
    fn merge_is_idempotent(samples in prop::collection::vec(sample(), 0..40)) {
        let ds = LabeledDataset { samples };
        prop_assert_eq!(ds.clone().merge_labels(), ds);
    }

    #[test]
    fn remerge_drops_only_excluded(rows in prop::collection::vec((sample(), code()), 0..40)) {
        let samples: Vec<Sample> = rows.into_iter().map(|(mut s, c)| { s.code = c; s }).collect();
        let expected = samples.iter().filter(|s| s.code.is_ordinal()).count();
        let kept = LabeledDataset { samples }.merge_labels();
        prop_assert_eq!(kept.len(), expected);
        prop_assert!(kept.samples.iter().all(|s| Some(s.class) == s.code.class()));
    }

    #[test]
    fn order_statistics_are_permutation_invariant(values in prop::collection::vec(-100.0f64..100.0, 1..40), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let fs = vec![Functional::Mean, Functional::Cv, Functional::P20, Functional::P50, Functional::P80, Functional::RangeP20P80];
        let recipe = FunctionalRecipe { entries: vec![("x".into(), fs)] };
        let mut shuffled = values.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = functionals(&FrameMatrix::new(vec!["x".into()], values.len(), values).unwrap(), &recipe).unwrap();
        let b = functionals(&FrameMatrix::new(vec!["x".into()], shuffled.len(), shuffled).unwrap(), &recipe).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn positive_scaling(values in prop::collection::vec(0.1f64..100.0, 1..40), k in 0.01f64..100.0) {
        let fs = vec![Functional::Mean, Functional::P20, Functional::P50, Functional::P80, Functional::RangeP20P80, Functional::Cv];
        let recipe = FunctionalRecipe { entries: vec![("x".into(), fs)] };
        let scaled: Vec<f64> = values.iter().map(|v| v * k).collect();
        let a = functionals(&FrameMatrix::new(vec!["x".into()], values.len(), values).unwrap(), &recipe).unwrap();
        let b = functionals(&FrameMatrix::new(vec!["x".into()], scaled.len(), scaled).unwrap(), &recipe).unwrap();
        for i in 0..5 {
            prop_assert!((a.values[i] * k - b.values[i]).abs() <= 1e-9 * b.values[i].abs().max(1.0));
        }
        prop_assert!((a.values[5] - b.values[5]).abs() <= 1e-9);
    }

    #[test]
    fn fold_plans_never_leak(n in 3usize..14, seed in any::<u64>(), hostile in prop::collection::vec(0u64..3, 14)) {
        let couples: Vec<(String, ClassCounts)> = (0..n)
            .map(|i| (format!("c{i:02}"), ClassCounts::new(hostile[i], 20, 1 + hostile[i])))
            .collect();
        if let Ok(plan) = make_fold_plan(&couples, seed) {
            prop_assert_eq!(plan.folds.len(), n);
            for f in &plan.folds {
                prop_assert!(!f.train_couples.contains(&f.test_couple));
                prop_assert!(!f.val_couples.contains(&f.test_couple));
                prop_assert!(f.train_couples.iter().all(|c| !f.val_couples.contains(c)));
                prop_assert_eq!(f.train_couples.len() + f.val_couples.len() + 1, n);
            }
        }
    }
}

#[test]
fn slopes_depend_on_order() {
    let recipe = FunctionalRecipe { entries: vec![("x".into(), vec![Functional::RisingSlopeMean, Functional::FallingSlopeMean])] };
    let a = functionals(&FrameMatrix::new(vec!["x".into()], 4, vec![0.0, 1.0, 2.0, 3.0]).unwrap(), &recipe).unwrap();
    let b = functionals(&FrameMatrix::new(vec!["x".into()], 4, vec![3.0, 0.0, 2.0, 1.0]).unwrap(), &recipe).unwrap();
    assert_eq!(a.values, vec![1.0, 0.0]);
    assert_eq!(b.values, vec![2.0, -2.0]);
}

#[test]
fn chance_converges_to_present_class_expectation() {
    use turnclass_core::eval::chance_uar;
    use BehaviorClass::*;
    // Expected fold UAR is the mean prior of the classes present in the fold.
    let fold = [vec![Constructive; 30], vec![Positive; 5], vec![Hostile; 2]].concat();
    let sessions = [fold.clone(), vec![Constructive; 12], [vec![Constructive; 20], vec![Positive; 3]].concat()];
    let priors = [0.05, 0.8, 0.15];
    let analytic = [(0.05 + 0.8 + 0.15) / 3.0, 0.8, (0.8 + 0.15) / 2.0];
    for (s, want) in sessions.iter().zip(analytic) {
        let est = chance_uar(std::slice::from_ref(s), priors, 100_000, 17).unwrap();
        assert!((est.mean - want).abs() <= 3.0 * est.std_error, "{} vs {want} (se {})", est.mean, est.std_error);
    }
}
