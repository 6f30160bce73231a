//! Inference on pruned models with CSR weights.

use serde_json::json;

use crate::error::{Error, Result};
use crate::ndmath::{sigmoid, Tensor};
use crate::varlayers::{Model, NoiseMode, NoiseScope, Predictions, SeqBatch, Targets, Task};

use super::container::{Container, StoredTensor};
use super::csr::{to_csr, CsrMatrix};
use super::prune::{prune, prune_mask, PruneMask};
use super::report::{sparsity_report, SparsityReport};

/// Scope used for pruning: the layers that run under Sparse VD for this task.
pub fn sparse_scope(task: Task) -> NoiseScope {
    NoiseScope::new(task, NoiseMode::SparseVd, 0.0)
}

/// Masks of every matrix trained under Sparse VD for the model's task.
pub fn model_masks(model: &Model, threshold: f64) -> Result<Vec<(String, PruneMask)>> {
    sparse_scope(model.task)
        .variational_weights(model)
        .into_iter()
        .map(|(n, vw)| Ok((n, prune_mask(vw, threshold)?)))
        .collect()
}

pub fn model_sparsity(model: &Model, threshold: f64) -> Result<SparsityReport> {
    sparsity_report(&model_masks(model, threshold)?)
}

/// Copy of `model` with pruned means set to exactly zero.
pub fn prune_model(model: &Model, threshold: f64) -> Result<Model> {
    let scope = sparse_scope(model.task);
    let names: Vec<String> = model.variational_weights().into_iter().map(|(n, _)| n).collect();
    let mut out = model.clone();
    for (name, vw) in names.iter().zip(out.variational_weights_mut()) {
        if scope.is_variational(&format!("{name}.log_sigma2")) {
            vw.mean = prune(vw, threshold)?.1;
        }
    }
    Ok(out)
}

/// Gate-fused CSR model: `wx [n×4m]`, `wh [m×4m]`, gate order i, o, f, g.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedModel {
    pub task: Task,
    pub embedding: Option<Tensor>,
    pub wx: CsrMatrix,
    pub wh: CsrMatrix,
    pub bias: Vec<f64>,
    pub h0: Vec<f64>,
    pub c0: Vec<f64>,
    pub head: CsrMatrix,
    pub head_bias: Vec<f64>,
}

/// Concatenate four same-shape matrices (or vectors) along columns.
fn fuse(parts: [&Tensor; 4]) -> Tensor {
    let (r, c) = (parts[0].rows(), parts[0].cols());
    let mut out = Vec::with_capacity(r * c * 4);
    for i in 0..r {
        for p in parts {
            out.extend_from_slice(p.row(i));
        }
    }
    Tensor::new(vec![r, 4 * c], out).expect("nonempty")
}

impl CompressedModel {
    /// Prune at `threshold` and pack.
    pub fn from_model(model: &Model, threshold: f64) -> Result<Self> {
        let p = prune_model(model, threshold)?;
        let l = &p.lstm;
        let bias = fuse([&l.bias[0], &l.bias[1], &l.bias[2], &l.bias[3]]).into_data();
        Ok(Self {
            task: p.task,
            embedding: p.embedding.clone(),
            wx: to_csr(&fuse([&l.wx[0].mean, &l.wx[1].mean, &l.wx[2].mean, &l.wx[3].mean]))?,
            wh: to_csr(&fuse([&l.wh[0].mean, &l.wh[1].mean, &l.wh[2].mean, &l.wh[3].mean]))?,
            bias,
            h0: l.h0.data().to_vec(),
            c0: l.c0.data().to_vec(),
            head: to_csr(&p.head.mean)?,
            head_bias: p.head_bias.data().to_vec(),
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.h0.len()
    }

    /// Sparse export: weight matrices as CSR, everything else dense.
    pub fn to_container(&self, threshold: f64) -> Container {
        let mut c = Container::new("sparse-export", json!({ "task": self.task.as_str() }));
        c.threshold = Some(threshold);
        if let Some(e) = &self.embedding {
            c.push("embedding", StoredTensor::Dense(e.clone()));
        }
        let vec = |v: &[f64]| StoredTensor::Dense(Tensor::vector(v.to_vec()).expect("nonempty"));
        c.push("lstm.wx", StoredTensor::Csr(self.wx.clone()));
        c.push("lstm.wh", StoredTensor::Csr(self.wh.clone()));
        c.push("lstm.bias", vec(&self.bias));
        c.push("lstm.h0", vec(&self.h0));
        c.push("lstm.c0", vec(&self.c0));
        c.push("head", StoredTensor::Csr(self.head.clone()));
        c.push("head.bias", vec(&self.head_bias));
        c
    }

    /// The same tensors with every matrix stored dense; the size baseline for exports.
    pub fn to_dense_container(&self, threshold: f64) -> Container {
        let mut c = self.to_container(threshold);
        c.kind = "dense-export".into();
        for (_, t) in c.tensors.iter_mut() {
            if let StoredTensor::Csr(m) = t {
                *t = StoredTensor::Dense(m.to_dense());
            }
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let task: Task = c
            .meta
            .get("task")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Format("export lacks a task".into()))?
            .parse()?;
        let get = |name: &str| c.get(name).ok_or_else(|| Error::Format(format!("export lacks '{name}'")));
        let csr = |name: &str| -> Result<CsrMatrix> {
            match get(name)? {
                StoredTensor::Csr(m) => Ok(m.clone()),
                StoredTensor::Dense(t) => to_csr(t),
            }
        };
        let vec = |name: &str| -> Result<Vec<f64>> { Ok(get(name)?.to_dense().into_data()) };
        let embedding = match task {
            Task::Sentiment => Some(get("embedding")?.to_dense()),
            Task::CharLm => None,
        };
        let m = Self {
            task,
            embedding,
            wx: csr("lstm.wx")?,
            wh: csr("lstm.wh")?,
            bias: vec("lstm.bias")?,
            h0: vec("lstm.h0")?,
            c0: vec("lstm.c0")?,
            head: csr("head")?,
            head_bias: vec("head.bias")?,
        };
        let h = m.hidden_size();
        if m.wh.rows() != h
            || m.wh.cols() != 4 * h
            || m.wx.cols() != 4 * h
            || m.bias.len() != 4 * h
            || m.c0.len() != h
            || m.head.rows() != h
            || m.head_bias.len() != m.head.cols()
        {
            return Err(Error::Shape("inconsistent sizes in export".into()));
        }
        Ok(m)
    }

    fn step(&self, input: Input, h: &mut [f64], c: &mut [f64]) -> Result<()> {
        let m = h.len();
        let mut pre = self.bias.clone();
        match input {
            Input::Token(t) => {
                if t >= self.wx.rows() {
                    return Err(Error::Shape(format!("token {t} outside input size {}", self.wx.rows())));
                }
                self.wx.add_row_into(t, &mut pre);
            }
            Input::Dense(x) => {
                for (p, v) in pre.iter_mut().zip(self.wx.vecmat(x)?) {
                    *p += v;
                }
            }
        }
        for (p, v) in pre.iter_mut().zip(self.wh.vecmat(h)?) {
            *p += v;
        }
        for j in 0..m {
            let i = sigmoid(pre[j]);
            let o = sigmoid(pre[m + j]);
            let f = sigmoid(pre[2 * m + j]);
            let g = pre[3 * m + j].tanh();
            c[j] = f * c[j] + i * g;
            h[j] = o * c[j].tanh();
        }
        Ok(())
    }

    fn head_out(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.head.vecmat(h)?;
        for (v, b) in y.iter_mut().zip(&self.head_bias) {
            *v += b;
        }
        Ok(y)
    }

    /// Same outputs as the mean-weight forward pass of the pruned dense model.
    pub fn forward(&self, batch: &SeqBatch) -> Result<Predictions> {
        let (t_len, b) = (batch.seq_len(), batch.batch_size());
        if t_len == 0 || b == 0 {
            return Err(Error::Invalid("empty batch".into()));
        }
        match (&batch.targets, self.task) {
            (Targets::NextToken(_), Task::CharLm) => {
                let v = self.head.cols();
                let mut logits = vec![0.0; t_len * b * v];
                for j in 0..b {
                    let (mut h, mut c) = (self.h0.clone(), self.c0.clone());
                    for t in 0..t_len {
                        self.step(Input::Token(batch.tokens[t][j]), &mut h, &mut c)?;
                        let row = (t * b + j) * v;
                        logits[row..row + v].copy_from_slice(&self.head_out(&h)?);
                    }
                }
                Ok(Predictions::Logits(Tensor::new(vec![t_len * b, v], logits)?))
            }
            (Targets::Score { last, .. }, Task::Sentiment) => {
                let e = self.embedding.as_ref().ok_or_else(|| Error::Format("missing embedding".into()))?;
                let mut scores = Vec::with_capacity(b);
                for j in 0..b {
                    let (mut h, mut c) = (self.h0.clone(), self.c0.clone());
                    let end = *last.get(j).ok_or_else(|| Error::Shape("targets do not match batch".into()))?;
                    if end >= t_len {
                        return Err(Error::Shape(format!("last position {end} beyond length {t_len}")));
                    }
                    for t in 0..=end {
                        let tok = batch.tokens[t][j];
                        if tok >= e.rows() {
                            return Err(Error::Shape(format!("token {tok} outside vocabulary")));
                        }
                        self.step(Input::Dense(e.row(tok)), &mut h, &mut c)?;
                    }
                    scores.push(self.head_out(&h)?[0]);
                }
                Ok(Predictions::Scores(scores))
            }
            _ => Err(Error::Invalid("targets do not match model task".into())),
        }
    }
}

enum Input<'a> {
    Token(usize),
    Dense(&'a [f64]),
}
