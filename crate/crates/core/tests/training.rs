use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use turnclass_core::model::{train, ClassWeights, Mlp, MlpConfig, OptimizerConfig, OptimizerKind, Split, TrainSettings};
use turnclass_core::{BehaviorClass, Matrix};

const DIM: usize = 8;

fn blobs(n: usize, shift: f64, seed: u64) -> (Matrix, Vec<BehaviorClass>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * DIM);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = BehaviorClass::ALL[i % 3];
        for d in 0..DIM {
            let z: f64 = rng.sample(StandardNormal);
            data.push(z + if d == c.index() { shift } else { 0.0 });
        }
        labels.push(c);
    }
    (Matrix::from_vec(n, DIM, data), labels)
}

fn adam(lr: f64) -> OptimizerConfig {
    OptimizerConfig { kind: OptimizerKind::Adam, learning_rate: lr, decay_factor: Some(0.5), decay_mode: Default::default(), batch_size: 32 }
}

#[test]
fn separable_clusters_are_learned() {
    let (xt, yt) = blobs(300, 5.0, 1);
    let (xv, yv) = blobs(150, 5.0, 2);
    let m = Mlp::init(MlpConfig::new(DIM, &[16, 8], 3)).unwrap();
    let out = train(m, Split::new(&xt, &yt), Split::new(&xv, &yv), &adam(1e-2), &ClassWeights::UNIT, &TrainSettings::default()).unwrap();
    assert!(out.best_val_uar >= 0.95, "val UAR {}", out.best_val_uar);
    assert!(out.history.len() <= 100);
}

#[test]
fn shuffled_labels_stay_near_chance() {
    let (xt, mut yt) = blobs(600, 0.0, 3);
    let (xv, mut yv) = blobs(900, 0.0, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    yt.shuffle(&mut rng);
    yv.shuffle(&mut rng);
    let m = Mlp::init(MlpConfig::new(DIM, &[16], 6)).unwrap();
    let out = train(m, Split::new(&xt, &yt), Split::new(&xv, &yv), &adam(1e-3), &ClassWeights::UNIT, &TrainSettings::default()).unwrap();
    assert!((out.best_val_uar - 1.0 / 3.0).abs() <= 0.1, "val UAR {}", out.best_val_uar);
}

#[test]
fn training_is_bitwise_deterministic() {
    let (xt, yt) = blobs(120, 1.0, 7);
    let (xv, yv) = blobs(60, 1.0, 8);
    let settings = TrainSettings { max_epochs: 20, patience: 5, shuffle_seed: 9 };
    let run = || {
        let m = Mlp::init(MlpConfig::new(DIM, &[12, 6], 10)).unwrap();
        let w = ClassWeights([2.0, 1.0, 1.5]);
        train(m, Split::new(&xt, &yt), Split::new(&xv, &yv), &adam(1e-2), &w, &settings).unwrap()
    };
    let (a, b) = (run(), run());
    let bits = |m: &Mlp| m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.model), bits(&b.model));
    assert_eq!(a.best_epoch, b.best_epoch);
}
