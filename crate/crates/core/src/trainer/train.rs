use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndmath::Rng;
use crate::sparsity::{model_sparsity, prune_model};
use crate::varlayers::{Model, ModelNoise, NoiseMode, NoiseScope};

use super::checkpoint::{init_from_checkpoint, Checkpoint, CheckpointMeta};
use super::config::TrainConfig;
use super::data::TaskData;
use super::objective::{loss_and_grads, Objective};
use super::optim::{adam_step, clip_gradients, AdamState};

/// One line of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricsRecord {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch; absent for the pre-training evaluation.
    pub train_loss: Option<f64>,
    /// Mean-weight quality (bits per character or MSE).
    pub valid_quality: f64,
    pub test_quality: f64,
    pub sparsity_x: Option<f64>,
    pub sparsity_h: Option<f64>,
    pub sparsity_y: Option<f64>,
    pub wall_clock: Option<f64>,
    /// KL multiplier in effect during the epoch (Sparse VD runs only).
    #[serde(default)]
    pub kl_scale: Option<f64>,
    /// Test quality after pruning at the configured threshold (Sparse VD runs only).
    #[serde(default)]
    pub test_quality_pruned: Option<f64>,
}

impl MetricsRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    Diverged { epoch: usize, message: String },
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// State after the last completed epoch.
    pub last: Checkpoint,
    /// Best-validation state (mode `none` only).
    pub best: Option<Checkpoint>,
    pub metrics: Vec<MetricsRecord>,
    pub status: RunStatus,
}

/// Called after every evaluation with the record and the current state.
pub type EpochHook<'a> = dyn FnMut(&MetricsRecord, &Checkpoint) -> Result<()> + 'a;

struct Evaluator<'a> {
    cfg: &'a TrainConfig,
    data: &'a TaskData,
    start: Instant,
}

impl Evaluator<'_> {
    fn record(&self, model: &Model, epoch: usize, train_loss: Option<f64>) -> Result<MetricsRecord> {
        let (t, b) = (self.cfg.seq_len, self.cfg.batch_size);
        let valid = self.data.quality(model, "valid", t, b)?;
        let test = self.data.quality(model, "test", t, b)?;
        let sparse = self.cfg.mode == NoiseMode::SparseVd;
        let (sx, sh, sy, pruned) = if sparse {
            let r = model_sparsity(model, self.cfg.threshold)?;
            let pq = self.data.quality(&prune_model(model, self.cfg.threshold)?, "test", t, b)?;
            (Some(r.x), Some(r.h), r.y, Some(pq))
        } else {
            (None, None, None, None)
        };
        Ok(MetricsRecord {
            epoch,
            train_loss,
            valid_quality: valid,
            test_quality: test,
            sparsity_x: sx,
            sparsity_h: sh,
            sparsity_y: sy,
            wall_clock: self.cfg.wallclock.then(|| self.start.elapsed().as_secs_f64()),
            kl_scale: sparse.then(|| self.cfg.kl_scale_at(epoch.max(1))),
            test_quality_pruned: pruned,
        })
    }
}

/// Fresh model for `cfg`, optionally started from pretrained weights.
pub fn initial_model(cfg: &TrainConfig, data: &TaskData, init: Option<&Model>) -> Result<Model> {
    let mut rng = Rng::with_stream(cfg.seed, 0);
    let model = Model::init(
        cfg.task,
        data.model_vocab_size(),
        cfg.embed_size,
        cfg.hidden_size,
        cfg.log_sigma2_init,
        &mut rng,
    )?;
    match init {
        Some(src) => init_from_checkpoint(&model, src, cfg.log_sigma2_init),
        None => Ok(model),
    }
}

/// Run `cfg.epochs` epochs. An evaluation record for epoch 0 (before any
/// update) is emitted first. A non-finite loss or gradient stops the run and
/// returns the state from the last completed epoch.
pub fn train(cfg: &TrainConfig, data: &TaskData, init: Option<&Model>, hook: &mut EpochHook) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = initial_model(cfg, data, init)?;
    let scope = NoiseScope::new(cfg.task, cfg.mode, cfg.vbd_rate);
    let dataset_size = data.train_units(cfg.seq_len)?;
    let mut adam = AdamState::new(model.tensors());
    let mut shuffle_rng = Rng::with_stream(cfg.seed, 1);
    let mut noise_rng = Rng::with_stream(cfg.seed, 2);
    let eval = Evaluator {
        cfg,
        data,
        start: Instant::now(),
    };
    let snapshot = |model: &Model, epoch: usize| Checkpoint {
        model: model.clone(),
        meta: CheckpointMeta {
            task: cfg.task,
            mode: cfg.mode,
            epoch,
            config: cfg.to_text(),
            vocab: data.vocab().clone(),
        },
    };

    let first = eval.record(&model, 0, None)?;
    let mut last = snapshot(&model, 0);
    hook(&first, &last)?;
    let mut best_valid = first.valid_quality;
    let mut best = (cfg.mode == NoiseMode::None).then(|| last.clone());
    let mut metrics = vec![first];
    let mut status = RunStatus::Completed;

    'epochs: for epoch in 1..=cfg.epochs {
        let obj = Objective {
            scope,
            kl_scale: cfg.kl_scale_at(epoch),
            weight_decay: cfg.weight_decay,
            dataset_size,
        };
        let batches = data.train_batches(cfg.seq_len, cfg.batch_size, &mut shuffle_rng)?;
        let mut loss_sum = 0.0;
        for batch in &batches {
            let noise = ModelNoise::sample(&model, &scope, &mut noise_rng, batch.batch_size())?;
            let step = loss_and_grads(&model, batch, &noise, &obj).and_then(|(parts, mut grads)| {
                clip_gradients(&mut grads, cfg.clip_threshold)?;
                adam_step(&mut model.tensors_mut(), &grads, &mut adam, cfg.learning_rate)?;
                Ok(parts)
            });
            match step {
                Ok(parts) => loss_sum += parts.total,
                Err(Error::Divergence(message)) => {
                    status = RunStatus::Diverged { epoch, message };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        if let Some(i) = model.tensors().iter().position(|t| !t.is_finite()) {
            status = RunStatus::Diverged {
                epoch,
                message: format!("parameter {} became non-finite", model.tensor_names()[i]),
            };
            break;
        }
        let rec = eval.record(&model, epoch, Some(loss_sum / batches.len() as f64))?;
        if !rec.valid_quality.is_finite() {
            status = RunStatus::Diverged {
                epoch,
                message: "validation quality is not finite".into(),
            };
            break;
        }
        last = snapshot(&model, epoch);
        if best.is_some() && rec.valid_quality < best_valid {
            best_valid = rec.valid_quality;
            best = Some(last.clone());
        }
        hook(&rec, &last)?;
        metrics.push(rec);
    }
    Ok(TrainOutcome {
        last,
        best,
        metrics,
        status,
    })
}
