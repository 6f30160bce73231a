//! Training-loop contracts on small synthetic runs.

mod common;

use common::*;
use sparsevd::ndmath::Rng;
use sparsevd::trainer::{
    elbo_loss, initial_model, train, Checkpoint, MetricsRecord, Objective, RunStatus, TaskData, TrainConfig,
    TrainOutcome,
};
use sparsevd::varlayers::{ModelNoise, NoiseMode, NoiseScope, Task};

const SMALL: &str = "task = sentiment
data = synthetic
synthVocab = 40
seqLen = 12
hiddenSize = 8
embedSize = 8
batchSize = 16
learningRate = 0.01
trainLimit = 200
";

fn cfg(overrides: &[&str]) -> TrainConfig {
    let mut c = TrainConfig::parse(SMALL).unwrap();
    for o in overrides {
        c.apply_override(o).unwrap();
    }
    c
}

fn run(c: &TrainConfig, init: Option<&sparsevd::varlayers::Model>) -> TrainOutcome {
    let data = TaskData::load(c).unwrap();
    train(c, &data, init, &mut |_: &MetricsRecord, _: &Checkpoint| Ok(())).unwrap()
}

#[test]
fn dense_run_fits_its_training_set() {
    let out = run(&cfg(&["mode=none", "epochs=25", "trainLimit=64"]), None);
    assert_eq!(out.status, RunStatus::Completed);
    let first = out.metrics[1].train_loss.unwrap();
    let last = out.metrics.last().unwrap().train_loss.unwrap();
    assert!(last < 0.5 * first, "{first} -> {last}");
}

#[test]
fn records_cover_every_epoch_and_start_with_the_untrained_model() {
    let out = run(&cfg(&["mode=sparse-vd", "epochs=3"]), None);
    let epochs: Vec<usize> = out.metrics.iter().map(|r| r.epoch).collect();
    assert_eq!(epochs, [0, 1, 2, 3]);
    assert!(out.metrics[0].train_loss.is_none());
    assert!(out.metrics[1..].iter().all(|r| r.train_loss.is_some() && r.sparsity_x.is_some()));
    assert!(out.metrics.iter().all(|r| r.sparsity_y.is_none()), "sentiment head is not sparsified");
    assert_eq!(out.last.meta.epoch, 3);
}

#[test]
fn init_from_copies_means_and_resets_log_variances() {
    let dense = run(&cfg(&["mode=none", "epochs=2"]), None).last.model;
    let sparse_cfg = cfg(&["mode=sparse-vd", "logSigma2Init=-6"]);
    let data = TaskData::load(&sparse_cfg).unwrap();
    let start = initial_model(&sparse_cfg, &data, Some(&dense)).unwrap();
    for ((name, vw), (_, src)) in start.variational_weights().into_iter().zip(dense.variational_weights()) {
        assert_eq!(vw.mean, src.mean, "{name}");
        assert!(vw.log_sigma2.data().iter().all(|&l| l == -6.0), "{name}");
    }
    assert_eq!(start.embedding, dense.embedding);
}

#[test]
fn pretrained_start_reproduces_the_pretrained_quality() {
    let pre_cfg = cfg(&["mode=none", "epochs=3"]);
    let pre = run(&pre_cfg, None);
    let pre_last = pre.metrics.last().unwrap();
    let sparse = run(&cfg(&["mode=sparse-vd", "epochs=1"]), Some(&pre.last.model));
    let zero = &sparse.metrics[0];
    assert!((zero.valid_quality - pre_last.valid_quality).abs() <= 1e-10);
    assert!((zero.test_quality - pre_last.test_quality).abs() <= 1e-10);
}

#[test]
fn mismatched_pretrained_model_is_rejected() {
    let dense = run(&cfg(&["mode=none", "epochs=1", "hiddenSize=6"]), None).last.model;
    let c = cfg(&["mode=sparse-vd", "epochs=1"]);
    let data = TaskData::load(&c).unwrap();
    assert!(train(&c, &data, Some(&dense), &mut |_: &MetricsRecord, _: &Checkpoint| Ok(())).is_err());
}

#[test]
fn seed_changes_the_trajectory() {
    let a = run(&cfg(&["mode=vbd", "vbdRate=0.2", "epochs=2", "seed=1"]), None);
    let b = run(&cfg(&["mode=vbd", "vbdRate=0.2", "epochs=2", "seed=2"]), None);
    assert_ne!(a.metrics, b.metrics);
}

#[test]
fn divergence_keeps_the_last_finite_state() {
    let out = run(&cfg(&["mode=none", "epochs=3", "learningRate=1e300", "clipThreshold=1e300"]), None);
    match &out.status {
        RunStatus::Diverged { epoch, .. } => assert_eq!(*epoch, 1),
        s => panic!("expected divergence, got {s:?}"),
    }
    assert_eq!(out.last.meta.epoch, 0);
    assert!(out.last.model.tensors().iter().all(|t| t.is_finite()));
    assert_eq!(out.metrics.len(), 1);
}

#[test]
fn dense_runs_keep_the_best_validation_state() {
    let out = run(&cfg(&["mode=none", "epochs=6", "learningRate=0.05"]), None);
    let best = out.best.unwrap();
    let min = out.metrics.iter().map(|r| r.valid_quality).fold(f64::INFINITY, f64::min);
    let rec = out.metrics.iter().find(|r| r.epoch == best.meta.epoch).unwrap();
    assert_eq!(rec.valid_quality, min);
}

#[test]
fn loss_terms_combine_with_their_weights() {
    let task = Task::Sentiment;
    let model = random_model(task, 9, 4, 5, (-5.0, 1.0), 3);
    let batch = random_batch(task, 9, 6, 4, 4);
    for (mode, wd, kl_scale) in [(NoiseMode::None, 0.02, 1.0), (NoiseMode::SparseVd, 0.02, 0.4), (NoiseMode::Vbd, 0.1, 1.0)] {
        let obj = Objective {
            scope: NoiseScope::new(task, mode, 0.3),
            kl_scale,
            weight_decay: wd,
            dataset_size: 50,
        };
        let noise = ModelNoise::sample(&model, &obj.scope, &mut Rng::new(5), 4).unwrap();
        let p = elbo_loss(&model, &batch, &noise, &obj).unwrap();
        let want = p.nll + kl_scale * p.kl / 50.0 + wd * p.l2;
        assert!((p.total - want).abs() <= 1e-12 * want.abs().max(1.0), "{mode:?}");
        assert_eq!(p.l2 > 0.0, mode != NoiseMode::None, "{mode:?}");
        assert_eq!(p.kl > 0.0, mode == NoiseMode::SparseVd, "{mode:?}");
    }
}

#[test]
fn weight_decay_skips_sparse_layers() {
    let task = Task::CharLm;
    let model = random_model(task, 9, 4, 5, (-5.0, 1.0), 3);
    let batch = random_batch(task, 9, 6, 4, 4);
    let obj = |wd: f64| Objective {
        scope: NoiseScope::new(task, NoiseMode::SparseVd, 0.0),
        kl_scale: 1.0,
        weight_decay: wd,
        dataset_size: 50,
    };
    let noise = ModelNoise::sample(&model, &obj(0.0).scope, &mut Rng::new(5), 4).unwrap();
    let a = elbo_loss(&model, &batch, &noise, &obj(0.0)).unwrap();
    let b = elbo_loss(&model, &batch, &noise, &obj(0.5)).unwrap();
    assert_eq!(a.total, b.total, "every char-LM matrix is under Sparse VD");
}
