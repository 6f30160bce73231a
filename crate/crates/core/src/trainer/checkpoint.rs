use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::datatext::Vocab;
use crate::error::{Error, Result};
use crate::sparsity::{Container, StoredTensor};
use crate::varlayers::{Model, NoiseMode, Task};

/// Metadata stored next to the tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckpointMeta {
    pub task: Task,
    pub mode: NoiseMode,
    pub epoch: usize,
    /// Canonical config text of the run that wrote the checkpoint.
    pub config: String,
    pub vocab: Vocab,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new("checkpoint", json!(self.meta));
        for (name, t) in self.model.tensor_names().into_iter().zip(self.model.tensors()) {
            c.push(name, StoredTensor::Dense(t.clone()));
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != "checkpoint" {
            return Err(Error::Format(format!("expected a checkpoint, found a {}", c.kind)));
        }
        let meta: CheckpointMeta = serde_json::from_value(c.meta.clone())?;
        let model = Model::from_named(meta.task, c.dense_map())?;
        Ok(Self { model, meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        // write then rename so an interrupted save never clobbers the last good file
        let tmp = path.with_extension("tmp");
        self.to_container()?.write(&tmp)?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

/// Start a new run from pretrained weights: every tensor except the
/// log-variances is copied, and all log-variances are set to `log_sigma2`.
pub fn init_from_checkpoint(model: &Model, source: &Model, log_sigma2: f64) -> Result<Model> {
    if model.task != source.task {
        return Err(Error::Shape(format!("checkpoint is for {}, run is {}", source.task, model.task)));
    }
    let (names, src_names) = (model.tensor_names(), source.tensor_names());
    let mut problems = Vec::new();
    for ((n, t), s) in names.iter().zip(model.tensors()).zip(source.tensors()) {
        if t.shape() != s.shape() {
            problems.push(format!("{n}: run {:?}, checkpoint {:?}", t.shape(), s.shape()));
        }
    }
    if names != src_names {
        problems.push("tensor sets differ".into());
    }
    if !problems.is_empty() {
        return Err(Error::Shape(format!("checkpoint does not fit: {}", problems.join("; "))));
    }
    let mut out = source.clone();
    for vw in out.variational_weights_mut() {
        vw.log_sigma2 = crate::ndmath::Tensor::full(vw.shape(), log_sigma2);
    }
    Ok(out)
}
