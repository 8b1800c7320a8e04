//! Backpropagation against central finite differences.

use turnclass_core::model::{count_params, weighted_ce_loss, ClassWeights, Mlp, MlpConfig};
use turnclass_core::{BehaviorClass, Matrix};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

fn loss_at(model: &Mlp, x: &Matrix, y: &[BehaviorClass], w: &ClassWeights) -> f64 {
    weighted_ce_loss(&model.forward(x).unwrap(), y, w).unwrap().loss
}

/// Max over parameters of |analytic - numeric| / max(|analytic| + |numeric|, 1e-7).
fn max_relative_error(seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.random_range(2..8);
    let depth = rng.random_range(1..=3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..9)).collect();
    let config = MlpConfig::new(input, &hidden, seed);
    let n_params = count_params(&config).unwrap();
    let mut model = Mlp::init(config).unwrap();
    // non-zero biases so ReLU kinks are not hit at exactly zero
    for p in model.params_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    let n = rng.random_range(3..10);
    let x = Matrix::from_vec(n, input, (0..n * input).map(|_| rng.random_range(-2.0..2.0)).collect());
    let y: Vec<BehaviorClass> = (0..n)
        .map(|_| BehaviorClass::from_index(rng.random_range(0..3)).unwrap())
        .collect();
    let w = ClassWeights([rng.random_range(0.5..5.0), rng.random_range(0.5..5.0), rng.random_range(0.5..5.0)]);

    let analytic = model.backward(&x, &y, &w).unwrap().0;
    let mut worst: f64 = 0.0;
    for i in 0..n_params {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + STEP;
        let up = loss_at(&model, &x, &y, &w);
        model.params_mut()[i] = orig - STEP;
        let down = loss_at(&model, &x, &y, &w);
        model.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let denom = (analytic[i].abs() + numeric.abs()).max(1e-7);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    (worst, n_params)
}

#[test]
fn backprop_matches_finite_differences() {
    for seed in 0..20 {
        let (err, n) = max_relative_error(seed);
        assert!(n <= 1000, "net too large: {n}");
        assert!(err < 1e-4, "seed {seed}: relative error {err:e}");
    }
}
