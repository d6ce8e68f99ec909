use gag_core::harness::{generate, SynthConfig};
use gag_core::model::{checkpoint, prefix_examples, target_rank, Example, GagModel, ModelConfig};
use gag_core::reservoir::{online_update, UpdateSet};
use gag_core::{PredictionDistribution, Session};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(d: usize, items: usize, users: usize, seed: u64) -> GagModel {
    let config = ModelConfig {
        embed_dim: d,
        rng_seed: seed,
        batch_size: 16,
        ..ModelConfig::default()
    };
    GagModel::init(config, items, users).unwrap()
}

fn session_loss(model: &GagModel, sessions: &[Session]) -> f64 {
    let examples: Vec<Example> = sessions.iter().flat_map(prefix_examples).collect();
    model.batch_loss(&examples).unwrap()
}

/// Ten sessions from the synthetic generator, ids interned on the fly.
fn synthetic_sessions(seed: u64) -> (Vec<Session>, usize, usize) {
    let log = generate(&SynthConfig {
        sessions: 10,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut items: Vec<String> = Vec::new();
    let mut users: Vec<String> = Vec::new();
    let intern = |table: &mut Vec<String>, name: &str| {
        table.iter().position(|n| n == name).unwrap_or_else(|| {
            table.push(name.to_string());
            table.len() - 1
        })
    };
    let sessions = log
        .sessions
        .iter()
        .enumerate()
        .map(|(k, (user, names))| {
            let u = intern(&mut users, user);
            let ids = names.iter().map(|n| intern(&mut items, n)).collect();
            Session::new(u, ids, k as u64)
        })
        .collect();
    (sessions, items.len(), users.len())
}

#[test]
fn online_update_does_not_increase_loss_on_its_set() {
    let (mut before_total, mut after_total) = (0.0, 0.0);
    for seed in 0..10 {
        let (sessions, items, users) = synthetic_sessions(seed);
        let mut m = model(16, items, users, seed);
        let before = session_loss(&m, &sessions);
        let set = UpdateSet {
            sessions: sessions.clone(),
            forced_count: 0,
            window_size: sessions.len(),
        };
        online_update(&mut m, &set, 1, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let after = session_loss(&m, &sessions);
        before_total += before;
        after_total += after;
    }
    assert!(
        after_total <= before_total,
        "mean loss rose: {before_total} -> {after_total}"
    );
}

#[test]
fn single_session_update_lowers_its_loss() {
    let session = Session::new(0, vec![3, 1, 4, 5, 9], 0);
    let mut m = model(8, 12, 1, 4);
    let before = session_loss(&m, std::slice::from_ref(&session));
    let set = UpdateSet {
        sessions: vec![session.clone()],
        forced_count: 0,
        window_size: 1,
    };
    online_update(&mut m, &set, 200, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(session_loss(&m, &[session]) < before);
}

#[test]
fn overfitting_one_session_ranks_its_target_first() {
    let example = Example {
        user: 1,
        prefix: vec![2, 7, 4],
        target: 6,
    };
    let mut m = model(16, 20, 2, 3);
    for _ in 0..200 {
        m.train_batch(std::slice::from_ref(&example)).unwrap();
    }
    let pred = m.forward_example(&example).unwrap().prediction;
    assert_eq!(target_rank(&pred, example.target), 1);
}

#[test]
fn growing_the_catalog_keeps_old_scores_bitwise() {
    let mut m = model(6, 10, 3, 2);
    let example = Example {
        user: 2,
        prefix: vec![1, 8, 1, 5],
        target: 0,
    };
    let old = m.forward_example(&example).unwrap().prediction.scores;
    m.grow_catalog(12, 3).unwrap();
    let new = m.forward_example(&example).unwrap().prediction.scores;
    assert_eq!(new.len(), 12);
    for (a, b) in old.iter().zip(&new) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn growing_users_keeps_rows_and_zeroes_moments() {
    let mut m = model(4, 10, 3, 9);
    m.train_batch(&[Example {
        user: 0,
        prefix: vec![1, 2],
        target: 3,
    }])
    .unwrap();
    let users_before = m.weights.users.data.clone();
    m.grow_catalog(10, 5).unwrap();
    assert_eq!(
        &m.weights.users.data[..users_before.len()],
        &users_before[..]
    );
    assert!(m.adam.first.users.data[users_before.len()..]
        .iter()
        .all(|&x| x == 0.0));
    let bound = 1.0 / 2.0;
    assert!(m.weights.users.data[users_before.len()..]
        .iter()
        .all(|x| x.abs() <= bound));
}

#[test]
fn softmax_ignores_a_common_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let scores: Vec<f64> = (0..8).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let shift = rng.gen_range(-100.0..100.0);
        let a = PredictionDistribution::from_scores(scores.clone());
        let b = PredictionDistribution::from_scores(scores.iter().map(|s| s + shift).collect());
        for (x, y) in a.probs.iter().zip(&b.probs) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn huge_scores_stay_finite() {
    let pred = PredictionDistribution::from_scores(vec![1e4, 1e4 - 1.0, -1e4]);
    assert!(pred.probs.iter().all(|p| p.is_finite()));
    assert!((pred.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn checkpoint_round_trip_after_training() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut m = model(5, 9, 2, 6);
    for _ in 0..3 {
        m.train_batch(&[Example {
            user: 1,
            prefix: vec![0, 3],
            target: 8,
        }])
        .unwrap();
    }
    checkpoint::save(&m, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back.weights, m.weights);
    assert_eq!(back.adam.step, 3);
    assert_eq!(back.config, m.config);
    assert!(checkpoint::sidecar_path(&path).exists());
}
