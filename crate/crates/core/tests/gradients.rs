//! End-to-end gradient checks of the minibatch objective.

mod common;

use common::*;
use sparsevd::ndmath::Rng;
use sparsevd::trainer::Objective;
use sparsevd::varlayers::{ModelNoise, NoiseMode, NoiseScope, Task};

fn check(task: Task, mode: NoiseMode, rate: f64, weight_decay: f64, kl_scale: f64, seed: u64) {
    let vocab = 7;
    let model = random_model(task, vocab, 3, 4, (-4.0, 0.0), seed);
    let batch = random_batch(task, vocab, 3, 2, seed + 1);
    let obj = Objective {
        scope: NoiseScope::new(task, mode, rate),
        kl_scale,
        weight_decay,
        dataset_size: 5,
    };
    let noise = ModelNoise::sample(&model, &obj.scope, &mut Rng::new(seed + 2), 2).unwrap();
    let (err, at) = max_grad_rel_error(&model, &batch, &noise, &obj, 1e-4);
    assert!(err <= 1e-5, "{task:?} {mode:?}: {err:e} at {at}");
}

#[test]
fn dense_objective_with_weight_decay() {
    check(Task::CharLm, NoiseMode::None, 0.0, 0.01, 1.0, 1);
    check(Task::Sentiment, NoiseMode::None, 0.0, 0.01, 1.0, 2);
}

#[test]
fn binary_dropout_objective() {
    check(Task::CharLm, NoiseMode::Vbd, 0.3, 0.001, 1.0, 3);
    check(Task::Sentiment, NoiseMode::Vbd, 0.3, 0.001, 1.0, 4);
}

#[test]
fn sparse_objective_with_dropout_on_the_remaining_layers() {
    check(Task::Sentiment, NoiseMode::SparseVd, 0.25, 0.01, 1.0, 5);
}

#[test]
fn sparse_objective_during_kl_warmup() {
    check(Task::CharLm, NoiseMode::SparseVd, 0.0, 0.0, 0.3, 6);
    check(Task::Sentiment, NoiseMode::SparseVd, 0.0, 0.0, 0.0, 7);
}

#[test]
fn several_noise_draws() {
    for seed in 10..16 {
        check(Task::CharLm, NoiseMode::SparseVd, 0.0, 0.0, 1.0, seed);
    }
}
