//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

use sparsevd::ndmath::{Rng, Tensor};
use sparsevd::trainer::{elbo_loss, loss_and_grads, Objective};
use sparsevd::varlayers::{Model, ModelNoise, NoiseMode, NoiseScope, SeqBatch, Targets, Task};

/// `∫_0^1 f(u) du` by tanh-sinh quadrature; tolerates integrable endpoint
/// singularities because nodes never touch the endpoints.
pub fn tanh_sinh_unit(f: impl Fn(f64) -> f64) -> f64 {
    let h = 1.0 / 64.0;
    let mut total = 0.0;
    for k in -512i32..=512 {
        let s = k as f64 * h;
        let t = FRAC_PI_2 * s.sinh();
        // u = (1 + tanh t) / 2 written as a logistic so it stays exact near 0
        let u = 1.0 / (1.0 + (-2.0 * t).exp());
        let du = 2.0 * u * (1.0 - u) * FRAC_PI_2 * s.cosh();
        if u <= 0.0 || u >= 1.0 || du == 0.0 || !du.is_finite() {
            continue;
        }
        total += h * du * f(u);
    }
    total
}

/// `∫_a^b f`.
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) * tanh_sinh_unit(|u| f(a + (b - a) * u))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `E log|z + a|` for `z ~ N(0, 1)`, folded onto `u = |z + a| > 0`.
pub fn expected_log_abs_shifted_normal(a: f64) -> f64 {
    let f = |u: f64| u.ln() * (std_normal_pdf(u - a) + std_normal_pdf(u + a));
    tanh_sinh(f, 0.0, 1.0) + tanh_sinh(f, 1.0, a.abs() + 12.0)
}

/// KL from `N(m, α m²)` to the log-uniform prior up to an additive constant,
/// as a function of `log α`: `E log|z + exp(-log α / 2)|`.
pub fn kl_unnormalized(log_alpha: f64) -> f64 {
    expected_log_abs_shifted_normal((-0.5 * log_alpha).exp())
}

/// The same KL shifted to agree with `anchor_value` at `log α = anchor`.
pub fn kl_oracle(log_alpha: f64, anchor: f64, anchor_value: f64) -> f64 {
    kl_unnormalized(log_alpha) - kl_unnormalized(anchor) + anchor_value
}

pub fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                out[i * n + j] += a.get(i, p) * b.get(p, j);
            }
        }
    }
    Tensor::matrix(m, n, out).unwrap()
}

/// Model with random means and log-variances drawn uniformly from `logs2`.
pub fn random_model(task: Task, vocab: usize, embed: usize, hidden: usize, logs2: (f64, f64), seed: u64) -> Model {
    let mut rng = Rng::new(seed);
    let mut model = Model::init(task, vocab, embed, hidden, -6.0, &mut rng).unwrap();
    let names = model.tensor_names();
    for (name, t) in names.iter().zip(model.tensors_mut()) {
        for x in t.data_mut() {
            *x = if name.ends_with(".log_sigma2") {
                logs2.0 + (logs2.1 - logs2.0) * rng.uniform()
            } else {
                0.5 * rng.normal()
            };
        }
    }
    model
}

/// Random time-major batch; char-LM gets next-token targets, sentiment gets
/// scores read at random positions.
pub fn random_batch(task: Task, vocab: usize, t: usize, b: usize, seed: u64) -> SeqBatch {
    let mut rng = Rng::new(seed);
    let tokens: Vec<Vec<usize>> = (0..t).map(|_| (0..b).map(|_| rng.below(vocab)).collect()).collect();
    let targets = match task {
        Task::CharLm => Targets::NextToken((0..t).map(|_| (0..b).map(|_| rng.below(vocab)).collect()).collect()),
        Task::Sentiment => Targets::Score {
            last: (0..b).map(|_| rng.below(t)).collect(),
            value: (0..b).map(|_| rng.uniform()).collect(),
        },
    };
    SeqBatch { tokens, targets }
}

/// Worst relative error between backprop and a five-point central difference
/// over every trainable entry, with the noise frozen.
pub fn max_grad_rel_error(model: &Model, batch: &SeqBatch, noise: &ModelNoise, obj: &Objective, step: f64) -> (f64, String) {
    let (_, grads) = loss_and_grads(model, batch, noise, obj).unwrap();
    let names = model.tensor_names();
    let mut worst = (0.0, String::new());
    for (ti, g) in grads.iter().enumerate() {
        let Some(g) = g else { continue };
        for i in 0..g.len() {
            let at = |delta: f64| {
                let mut m = model.clone();
                m.tensors_mut()[ti].data_mut()[i] += delta;
                elbo_loss(&m, batch, noise, obj).unwrap().total
            };
            let fd = (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
            let a = g.data()[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (rel, format!("{}[{i}]: backprop {a:e}, fd {fd:e}", names[ti]));
            }
        }
    }
    worst
}

pub fn sparse_objective(task: Task, dataset_size: usize) -> Objective {
    Objective {
        scope: NoiseScope::new(task, NoiseMode::SparseVd, 0.0),
        kl_scale: 1.0,
        weight_decay: 0.0,
        dataset_size,
    }
}

/// Per-weight `log α` after each of `steps` Adam updates on the KL term
/// alone, starting from an 8×8 layer with `log σ² = -6`.
pub fn kl_only_trajectory(lr: f64, seed: u64, steps: usize, train_means: bool) -> Vec<Vec<f64>> {
    use sparsevd::ndmath::Graph;
    use sparsevd::sparsity::{log_alpha, KlOp};
    use sparsevd::trainer::{adam_step, AdamState};
    use sparsevd::varlayers::VariationalWeight;

    let mut rng = Rng::new(seed);
    let mut vw = VariationalWeight::from_mean(rng.standard_normal(&[8, 8]).unwrap().map(|m| 0.3 * m), -6.0);
    let la = |vw: &VariationalWeight| -> Vec<f64> {
        vw.mean.data().iter().zip(vw.log_sigma2.data()).map(|(&m, &l)| log_alpha(m, l)).collect()
    };
    let mut state = AdamState::new([&vw.mean, &vw.log_sigma2]);
    let mut out = vec![la(&vw)];
    for _ in 0..steps {
        let mut g = Graph::new();
        let m = g.param(vw.mean.clone());
        let l = g.param(vw.log_sigma2.clone());
        let kl = g.custom(Box::new(KlOp), &[m, l]).unwrap();
        let grads = g.backward(kl).unwrap();
        let dm = if train_means { grads.get(m).cloned() } else { None };
        let gs = vec![dm, grads.get(l).cloned()];
        adam_step(&mut [&mut vw.mean, &mut vw.log_sigma2], &gs, &mut state, lr).unwrap();
        out.push(la(&vw));
    }
    out
}

/// Number of weights whose `log α` never decreases along `traj`.
pub fn monotone_count(traj: &[Vec<f64>]) -> usize {
    (0..traj[0].len())
        .filter(|&i| traj.windows(2).all(|w| w[1][i] >= w[0][i] - 1e-12))
        .count()
}
