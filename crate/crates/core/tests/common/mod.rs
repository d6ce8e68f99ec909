#![allow(dead_code)]

use gag_core::model::{Example, GagModel, ModelConfig, Weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central finite-difference gradient of the summed batch loss, entry by entry.
pub fn numeric_gradient(model: &GagModel, batch: &[Example], h: f64) -> Weights {
    let mut grads = model.weights.zeros_like();
    let mut probe = model.clone();
    let num_tensors = model.weights.tensors().len();
    for t in 0..num_tensors {
        let len = model.weights.tensors()[t].len();
        for i in 0..len {
            let original = model.weights.tensors()[t][i];
            probe.weights.tensors_mut()[t][i] = original + h;
            let plus = probe.batch_loss(batch).unwrap();
            probe.weights.tensors_mut()[t][i] = original - h;
            let minus = probe.batch_loss(batch).unwrap();
            probe.weights.tensors_mut()[t][i] = original;
            grads.tensors_mut()[t][i] = (plus - minus) / (2.0 * h);
        }
    }
    grads
}

/// Largest violation of `|a - n| <= max(rel * max(|a|, |n|), abs)`; <= 0 means pass.
pub fn worst_violation(analytic: &Weights, numeric: &Weights, rel: f64, abs: f64) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (ta, tn) in analytic.tensors().iter().zip(numeric.tensors()) {
        for (a, n) in ta.iter().zip(tn) {
            let allowed = (rel * a.abs().max(n.abs())).max(abs);
            worst = worst.max((a - n).abs() - allowed);
        }
    }
    worst
}

/// A random small model and batch: d <= 8, <= 6 items, <= 3 users, graphs of <= 3 nodes.
pub fn random_small_case(seed: u64) -> (GagModel, Vec<Example>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(2..=8);
    let items = rng.gen_range(3..=6);
    let users = rng.gen_range(1..=3);
    let config = ModelConfig {
        embed_dim: d,
        num_layers: rng.gen_range(1..=3),
        learning_rate: 0.003,
        batch_size: 4,
        rng_seed: seed,
        edge_out_uses_receiver: rng.gen_bool(0.3),
    };
    let model = GagModel::init(config, items, users).unwrap();
    let batch = (0..rng.gen_range(1..=3))
        .map(|_| {
            let palette: Vec<usize> = (0..3).map(|_| rng.gen_range(0..items)).collect();
            let len = rng.gen_range(1..=5);
            Example {
                user: rng.gen_range(0..users),
                prefix: (0..len).map(|_| palette[rng.gen_range(0..3)]).collect(),
                target: rng.gen_range(0..items),
            }
        })
        .collect();
    (model, batch)
}
