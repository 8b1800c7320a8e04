use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use turnclass::cli::{evaluate_files, run_from};
use turnclass::io::{self, LabelRow};
use turnclass::synth::{self, neighbor_clustering, SynthSpec};
use turnclass_core::corpus::{class_counts, merge_labels, Indexing};
use turnclass_core::BehaviorClass;

fn tree_hash(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, format!("{:x}", Sha256::digest(fs::read(&p).unwrap())));
            }
        }
    }
    out
}

fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec { n_couples: 5, mean_shift: 3.0, emit_frames: true, seed, ..Default::default() }
}

#[test]
fn generated_trees_are_hash_equal() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        synth::write_generated(&synth::generate(&small_spec(4)).unwrap(), &dir.path().join(name)).unwrap();
    }
    let (a, b) = (tree_hash(&dir.path().join("a")), tree_hash(&dir.path().join("b")));
    assert!(a.len() > 10);
    assert_eq!(a, b);
    synth::write_generated(&synth::generate(&small_spec(5)).unwrap(), &dir.path().join("c")).unwrap();
    assert_ne!(a, tree_hash(&dir.path().join("c")));
}

#[test]
fn corpus_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let g = synth::generate(&small_spec(1)).unwrap();
    synth::write_generated(&g, &dir.path().join("first")).unwrap();
    let loaded = io::load_corpus(&dir.path().join("first/manifest.json")).unwrap();
    assert_eq!(loaded, g.corpus);
    io::write_corpus(&loaded, &dir.path().join("second"), Default::default()).unwrap();
    let again = io::load_corpus(&dir.path().join("second/manifest.json")).unwrap();
    assert_eq!(again, loaded);
}

#[test]
fn reference_sized_corpus_matches_proportions() {
    let spec = SynthSpec { emit_words: false, emit_features: false, ..Default::default() };
    let g = synth::generate(&spec).unwrap();
    let ds = merge_labels(&g.corpus, Indexing::default());
    let p = class_counts(&ds).priors();
    let want = [0.0117, 0.897, 0.0913];
    for c in BehaviorClass::ALL {
        assert!((p[c.index()] - want[c.index()]).abs() <= 0.01, "{c}: {} vs {}", p[c.index()], want[c.index()]);
    }
    let (observed, baseline) = neighbor_clustering(&g.corpus, 2);
    assert!(observed > baseline, "clustering {observed} vs independent {baseline}");
}

#[test]
fn cli_workflow_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let path = |p: &str| d.join(p).to_string_lossy().into_owned();
    fs::write(d.join("spec.json"), r#"{"n_couples": 10, "mean_shift": 3.0, "emit_frames": true}"#).unwrap();
    assert_eq!(run_from(["turnclass", "synth", "--spec", &path("spec.json"), "--out", &path("corpus")]), 0);
    assert_eq!(run_from(["turnclass", "verify", "--dir", &path("corpus")]), 0);
    assert_eq!(run_from(["turnclass", "align", "--manifest", &path("corpus/manifest.json"), "--out", &path("aligned")]), 0);
    assert_eq!(
        run_from(["turnclass", "featurize", "--manifest", &path("aligned/manifest.json"), "--out", &path("features"), "--lexical-dim", "32"]),
        0
    );
    let config = r#"{
        "manifest": "features/manifest.json",
        "modality": "fused",
        "fusion": "posterior_mean",
        "schemes": ["none", "content"],
        "grid": {"hidden": [[8]], "batch_sizes": [32], "weight_methods": ["inverse_freq_max"],
                 "decay_factors": [null], "optimizers": ["adam"], "learning_rates": [0.01]},
        "max_epochs": 3,
        "chance_repetitions": 50,
        "save_checkpoints": true
    }"#;
    fs::write(d.join("exp.json"), config).unwrap();
    for out in ["run1", "run2"] {
        assert_eq!(run_from(["turnclass", "run", "--config", &path("exp.json"), "--out", &path(out), "--jobs", "3"]), 0);
    }
    for f in ["report.json", "report.txt", "run.json", "truth.csv", "predictions_none.csv", "predictions_content.csv", "curve_none.csv"] {
        assert!(d.join("run1").join(f).is_file(), "{f}");
    }
    assert!(d.join("run1/checkpoints/none").is_dir());
    let report = |r: &str| fs::read(d.join(r).join("report.json")).unwrap();
    assert_eq!(Sha256::digest(report("run1")), Sha256::digest(report("run2")));

    // outputs are never overwritten
    assert_eq!(run_from(["turnclass", "run", "--config", &path("exp.json"), "--out", &path("run1")]), 2);

    assert_eq!(
        run_from([
            "turnclass", "evaluate", "--pred", &path("run1/predictions_none.csv"), "--truth", &path("run1/truth.csv"),
            "--windows", "1,3,5,7,9,11", "--out", &path("eval"),
        ]),
        0
    );
    let curve = fs::read_to_string(d.join("eval/curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 7);
    assert!(curve.starts_with("window_size,hostile_recall,positive_recall,constructive_recall,uar"));
    assert_eq!(run_from(["turnclass", "report", "--input", &path("run1/report.json"), &path("run2/report.json")]), 0);
}

#[test]
fn cli_exit_codes() {
    assert_eq!(run_from(["turnclass", "--help"]), 0);
    assert_eq!(run_from(["turnclass", "run", "--bogus"]), 1);
    assert_eq!(run_from(["turnclass", "frobnicate"]), 1);
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"n_couples": 0}"#).unwrap();
    let out = dir.path().join("out").to_string_lossy().into_owned();
    assert_eq!(run_from(["turnclass", "synth", "--spec", spec.to_str().unwrap(), "--out", &out]), 1);
    fs::write(&spec, r#"{"couples": 3}"#).unwrap();
    assert_eq!(run_from(["turnclass", "synth", "--spec", spec.to_str().unwrap(), "--out", &out]), 1);
}

#[test]
fn evaluate_rejects_unknown_turns() {
    let dir = tempfile::tempdir().unwrap();
    let row = |s: &str, i, label| LabelRow { session_id: s.into(), turn_index: i, label };
    let truth = [row("s", 0, BehaviorClass::Hostile), row("s", 1, BehaviorClass::Constructive), row("s", 2, BehaviorClass::Positive)];
    io::write_labels(&dir.path().join("truth.csv"), &truth).unwrap();
    let pred = [row("s", 0, BehaviorClass::Constructive), row("s", 1, BehaviorClass::Hostile), row("s", 2, BehaviorClass::Positive)];
    io::write_labels(&dir.path().join("pred.csv"), &pred).unwrap();
    let e = evaluate_files(&dir.path().join("pred.csv"), &dir.path().join("truth.csv"), &[1, 3], false, None).unwrap();
    assert_eq!(e.samples, 3);
    assert!((e.uar - 1.0 / 3.0).abs() < 1e-12);
    // the Hostile miss at turn 0 is caught by the prediction at turn 1
    assert_eq!(e.curve[1].recall[BehaviorClass::Hostile.index()], Some(1.0));

    io::write_labels(&dir.path().join("extra.csv"), &[row("t", 0, BehaviorClass::Hostile)]).unwrap();
    let err = evaluate_files(&dir.path().join("extra.csv"), &dir.path().join("truth.csv"), &[1], false, None).unwrap_err();
    assert!(err.to_string().contains("t turn 0"), "{err}");
    assert!(evaluate_files(&dir.path().join("pred.csv"), &dir.path().join("truth.csv"), &[1], true, None).is_err());
}
