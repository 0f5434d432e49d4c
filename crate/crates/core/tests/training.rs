use failsift_core::nn::TrainPhase;
use failsift_core::{dec_fit, init_autoencoder, purity, train_autoencoder, DecConfig, FailureLabel, SgdConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three tight blobs far apart in 12 dimensions.
fn blobs(per: usize, seed: u64) -> (Array2<f64>, Vec<FailureLabel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..3).map(|_| (0..12).map(|_| rng.random_range(-4.0..4.0)).collect()).collect();
    let mut x = Array2::zeros((3 * per, 12));
    let mut truth = Vec::new();
    for c in 0..3 {
        for i in 0..per {
            for j in 0..12 {
                x[[c * per + i, j]] = centres[c][j] + rng.random_range(-0.5..0.5);
            }
            truth.push(FailureLabel::new(format!("mode{c}")));
        }
    }
    (x, truth)
}

fn quick_sgd(seed: u64) -> SgdConfig {
    SgdConfig::desk().with_iterations(800, 800).with_seed(seed)
}

#[test]
fn dec_separates_three_blobs() {
    for seed in 0..3 {
        let (x, truth) = blobs(60, seed);
        let model = init_autoencoder(12, 3, 2, seed).unwrap();
        let trained = train_autoencoder(model, x.view(), &quick_sgd(seed)).unwrap();
        let mut cfg = DecConfig::new(3).with_seed(seed);
        cfg.sgd.learning_rate = 0.01;
        let r = dec_fit(x.view(), trained.model, &cfg).unwrap();
        assert!(purity(&r.labels, &truth).unwrap().overall >= 0.99, "seed {seed}");
        // convergence contract: either the threshold was met or the cap is flagged
        let last = r.history.last().unwrap();
        if r.converged {
            assert!(last.label_change_fraction.unwrap() < cfg.convergence_threshold);
            assert!(!r.hit_iteration_cap);
        } else {
            assert!(r.hit_iteration_cap);
            assert_eq!(r.iterations, cfg.max_iterations);
        }
    }
}

#[test]
fn iteration_cap_is_flagged() {
    // structureless data and a large step keep labels moving
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Array2::from_shape_fn((90, 12), |_| rng.random_range(-1.0..1.0));
    let model = init_autoencoder(12, 3, 2, 4).unwrap();
    let trained = train_autoencoder(model, x.view(), &quick_sgd(4)).unwrap();
    let mut cfg = DecConfig::new(3).with_seed(4);
    cfg.sgd.learning_rate = 0.5;
    cfg.max_iterations = 7;
    cfg.update_interval = 5;
    cfg.convergence_threshold = 1e-12;
    let r = dec_fit(x.view(), trained.model, &cfg).unwrap();
    assert!(r.hit_iteration_cap && !r.converged);
    assert_eq!(r.iterations, 7);
    let its: Vec<usize> = r.history.iter().map(|h| h.iteration).collect();
    assert_eq!(its, vec![0, 5, 7]);
    assert!(r.history[0].label_change_fraction.is_none());
    assert!(r.history[2].label_change_fraction.unwrap() > 0.0);
}

#[test]
fn history_records_the_step_schedule() {
    let (x, _) = blobs(20, 1);
    let mut sgd = quick_sgd(1).with_iterations(450, 450);
    sgd.lr_decay_every = 200;
    let model = init_autoencoder(12, 3, 2, 1).unwrap();
    let out = train_autoencoder(model, x.view(), &sgd).unwrap();
    // two pretraining pairs plus fine-tuning, each recorded at 100, 200, 300, 400, 450
    assert_eq!(out.history.len(), 15);
    for r in &out.history {
        assert_eq!(r.learning_rate, sgd.learning_rate_at(r.step - 1));
    }
    let steps: Vec<usize> = out.history.iter().take(5).map(|r| r.step).collect();
    assert_eq!(steps, vec![100, 200, 300, 400, 450]);
    assert_eq!(out.history[14].phase, TrainPhase::Finetune);
    let ft: Vec<f64> = out.history.iter().filter(|r| r.phase == TrainPhase::Finetune).map(|r| r.loss).collect();
    assert!(ft.last().unwrap() < ft.first().unwrap());
}

#[test]
fn full_schedule_divides_by_ten_every_20000_steps() {
    let p = SgdConfig::full();
    assert_eq!(p.learning_rate_at(0), 0.1);
    assert_eq!(p.learning_rate_at(19_999), 0.1);
    assert!((p.learning_rate_at(20_000) - 0.01).abs() < 1e-15);
    assert!((p.learning_rate_at(99_999) - 1e-5).abs() < 1e-18);
}

#[test]
fn training_is_bit_reproducible() {
    let (x, _) = blobs(20, 2);
    let run = || {
        let model = init_autoencoder(12, 3, 2, 9).unwrap();
        let t = train_autoencoder(model, x.view(), &quick_sgd(9)).unwrap();
        let mut cfg = DecConfig::new(3).with_seed(9);
        cfg.sgd.learning_rate = 0.01;
        let r = dec_fit(x.view(), t.model, &cfg).unwrap();
        (r.model.to_json().unwrap(), r.labels, r.centroids)
    };
    assert_eq!(run(), run());
}
