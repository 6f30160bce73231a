//! The two task networks: a character-level language model (one-hot input,
//! LSTM, softmax head at every step) and a sequence regressor (embedding, LSTM,
//! scalar head on the last non-pad state).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndmath::{orthogonal_init, Graph, Rng, Tensor, Var};

use super::lstm::{LstmUnroller, LstmVarParams, LstmVars, NoisePack, StepInput};
use super::vbd::vbd_mask;
use super::weight::{local_reparam_var, VariationalWeight};
use super::NoiseMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    CharLm,
    Sentiment,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::CharLm => "charlm",
            Task::Sentiment => "sentiment",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "charlm" => Ok(Task::CharLm),
            "sentiment" => Ok(Task::Sentiment),
            _ => Err(Error::Config(format!("unknown task '{s}' (charlm | sentiment)"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerNoise {
    Off,
    Binary,
    Gaussian,
}

/// Which layers carry which kind of noise for a given task and mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseScope {
    pub embed: LayerNoise,
    pub lstm: LayerNoise,
    /// Binary LSTM masks on the input units as well as the hidden units.
    pub lstm_input_masks: bool,
    pub head: LayerNoise,
    pub rate: f64,
}

impl NoiseScope {
    /// Char-LM: binary dropout goes on the recurrent connections only, while
    /// Sparse VD covers every weight matrix including the softmax layer.
    /// Sentiment: binary dropout on every layer; under Sparse VD the LSTM is
    /// Gaussian and the embedding and head keep binary dropout.
    pub fn new(task: Task, mode: NoiseMode, rate: f64) -> Self {
        use LayerNoise::*;
        let (embed, lstm, lstm_input_masks, head) = match (task, mode) {
            (_, NoiseMode::None) => (Off, Off, false, Off),
            (Task::CharLm, NoiseMode::Vbd) => (Off, Binary, false, Off),
            (Task::CharLm, NoiseMode::SparseVd) => (Off, Gaussian, false, Gaussian),
            (Task::Sentiment, NoiseMode::Vbd) => (Binary, Binary, true, Binary),
            (Task::Sentiment, NoiseMode::SparseVd) => (Binary, Gaussian, false, Binary),
        };
        Self {
            embed,
            lstm,
            lstm_input_masks,
            head,
            rate,
        }
    }

    pub fn deterministic() -> Self {
        Self::new(Task::CharLm, NoiseMode::None, 0.0)
    }

    /// Whether the named tensor is a log-variance that is trained and enters the KL.
    pub fn is_variational(&self, name: &str) -> bool {
        if name.starts_with("lstm.") && name.ends_with(".log_sigma2") {
            return self.lstm == LayerNoise::Gaussian;
        }
        name == "head.log_sigma2" && self.head == LayerNoise::Gaussian
    }

    /// Mean tensors whose log-variance is in scope (the KL pairs).
    pub fn variational_weights<'m>(&self, model: &'m Model) -> Vec<(String, &'m VariationalWeight)> {
        model
            .variational_weights()
            .into_iter()
            .filter(|(n, _)| self.is_variational(&format!("{n}.log_sigma2")))
            .collect()
    }

    /// Weight matrices of layers trained with binary dropout; these take the L2 penalty.
    pub fn is_decayed(&self, name: &str) -> bool {
        match name {
            "embedding" => self.embed == LayerNoise::Binary,
            "head.mean" => self.head == LayerNoise::Binary,
            n if n.starts_with("lstm.w") && n.ends_with(".mean") => self.lstm == LayerNoise::Binary,
            _ => false,
        }
    }
}

/// Network parameters. Log-variances are always stored; they only matter for
/// layers that run under Sparse VD.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub task: Task,
    /// Token rows for the sentiment embedding, `[vocab×embed]`.
    pub embedding: Option<Tensor>,
    pub lstm: LstmVarParams,
    /// `[hidden×out]`; `out` is the vocabulary size for char-LM, 1 for sentiment.
    pub head: VariationalWeight,
    pub head_bias: Tensor,
}

impl Model {
    /// Fresh model: orthogonal LSTM and head means, zero biases and initial
    /// states, embedding uniform in ±0.05.
    pub fn init(
        task: Task,
        vocab_size: usize,
        embed_size: usize,
        hidden_size: usize,
        log_sigma2: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if vocab_size == 0 || hidden_size == 0 || (task == Task::Sentiment && embed_size == 0) {
            return Err(Error::Invalid("model sizes must be positive".into()));
        }
        let (embedding, n, out) = match task {
            Task::CharLm => (None, vocab_size, vocab_size),
            Task::Sentiment => {
                let data = (0..vocab_size * embed_size).map(|_| (rng.uniform() - 0.5) * 0.1).collect();
                (Some(Tensor::matrix(vocab_size, embed_size, data)?), embed_size, 1)
            }
        };
        let lstm = LstmVarParams::orthogonal(rng, n, hidden_size, log_sigma2)?;
        let head = VariationalWeight::from_mean(orthogonal_init(rng, hidden_size, out)?, log_sigma2);
        Ok(Self {
            task,
            embedding,
            lstm,
            head,
            head_bias: Tensor::zeros(&[out]),
        })
    }

    pub fn vocab_size(&self) -> usize {
        match &self.embedding {
            Some(e) => e.rows(),
            None => self.lstm.input_size(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.lstm.hidden_size()
    }

    pub fn embed_size(&self) -> usize {
        self.embedding.as_ref().map_or(0, Tensor::cols)
    }

    pub fn output_size(&self) -> usize {
        self.head.cols()
    }

    pub fn validate(&self) -> Result<()> {
        self.lstm.validate()?;
        let (n, m) = (self.lstm.input_size(), self.hidden_size());
        match (self.task, &self.embedding) {
            (Task::CharLm, None) => {}
            (Task::Sentiment, Some(e)) if e.cols() == n => {}
            _ => return Err(Error::Shape("embedding does not match task or LSTM input".into())),
        }
        let out = match self.task {
            Task::CharLm => n,
            Task::Sentiment => 1,
        };
        if self.head.shape() != [m, out] || self.head_bias.len() != out {
            return Err(Error::Shape(format!(
                "head is {:?} with {} biases, want [{m}, {out}]",
                self.head.shape(),
                self.head_bias.len()
            )));
        }
        Ok(())
    }

    /// Parameter names in storage order; aligned with [`Model::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.embedding.is_some() {
            names.push("embedding".to_string());
        }
        for kind in ["wx", "wh"] {
            for gate in super::Gate::ALL {
                names.push(format!("lstm.{kind}.{}.mean", gate.tag()));
                names.push(format!("lstm.{kind}.{}.log_sigma2", gate.tag()));
            }
        }
        for gate in super::Gate::ALL {
            names.push(format!("lstm.bias.{}", gate.tag()));
        }
        names.extend(["lstm.h0", "lstm.c0", "head.mean", "head.log_sigma2", "head.bias"].map(String::from));
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = Vec::new();
        if let Some(e) = &self.embedding {
            v.push(e);
        }
        let l = &self.lstm;
        for w in l.wx.iter().chain(l.wh.iter()) {
            v.push(&w.mean);
            v.push(&w.log_sigma2);
        }
        v.extend(l.bias.iter());
        v.extend([&l.h0, &l.c0, &self.head.mean, &self.head.log_sigma2, &self.head_bias]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::new();
        if let Some(e) = &mut self.embedding {
            v.push(e);
        }
        let l = &mut self.lstm;
        for w in l.wx.iter_mut().chain(l.wh.iter_mut()) {
            v.push(&mut w.mean);
            v.push(&mut w.log_sigma2);
        }
        v.extend(l.bias.iter_mut());
        v.extend([&mut l.h0, &mut l.c0, &mut self.head.mean, &mut self.head.log_sigma2, &mut self.head_bias]);
        v
    }

    /// Every weight matrix that has a posterior, by name (`lstm.wx.i`, ..., `head`).
    pub fn variational_weights(&self) -> Vec<(String, &VariationalWeight)> {
        let mut v = Vec::new();
        for (kind, ws) in [("wx", &self.lstm.wx), ("wh", &self.lstm.wh)] {
            for (gate, w) in super::Gate::ALL.iter().zip(ws.iter()) {
                v.push((format!("lstm.{kind}.{}", gate.tag()), w));
            }
        }
        v.push(("head".to_string(), &self.head));
        v
    }

    pub fn variational_weights_mut(&mut self) -> Vec<&mut VariationalWeight> {
        let l = &mut self.lstm;
        let mut v: Vec<&mut VariationalWeight> = l.wx.iter_mut().chain(l.wh.iter_mut()).collect();
        v.push(&mut self.head);
        v
    }

    /// Rebuild a model of the given task from named tensors.
    pub fn from_named(task: Task, mut named: std::collections::BTreeMap<String, Tensor>) -> Result<Self> {
        let mut take = |name: &str| {
            named
                .remove(name)
                .ok_or_else(|| Error::Format(format!("missing tensor '{name}'")))
        };
        let embedding = match task {
            Task::Sentiment => Some(take("embedding")?),
            Task::CharLm => None,
        };
        let mut vw = |kind: &str, gate: super::Gate| -> Result<VariationalWeight> {
            VariationalWeight::new(
                take(&format!("lstm.{kind}.{}.mean", gate.tag()))?,
                take(&format!("lstm.{kind}.{}.log_sigma2", gate.tag()))?,
            )
        };
        let g = super::Gate::ALL;
        let wx = [vw("wx", g[0])?, vw("wx", g[1])?, vw("wx", g[2])?, vw("wx", g[3])?];
        let wh = [vw("wh", g[0])?, vw("wh", g[1])?, vw("wh", g[2])?, vw("wh", g[3])?];
        let mut take = |name: &str| {
            named
                .remove(name)
                .ok_or_else(|| Error::Format(format!("missing tensor '{name}'")))
        };
        let bias = [take("lstm.bias.i")?, take("lstm.bias.o")?, take("lstm.bias.f")?, take("lstm.bias.g")?];
        let lstm = LstmVarParams::new(wx, wh, bias, take("lstm.h0")?, take("lstm.c0")?)?;
        let head = VariationalWeight::new(take("head.mean")?, take("head.log_sigma2")?)?;
        let head_bias = take("head.bias")?;
        if let Some(extra) = named.keys().next() {
            return Err(Error::Format(format!("unexpected tensor '{extra}'")));
        }
        let m = Self {
            task,
            embedding,
            lstm,
            head,
            head_bias,
        };
        m.validate()?;
        Ok(m)
    }
}

/// A minibatch in time-major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqBatch {
    /// `tokens[t][b]`
    pub tokens: Vec<Vec<usize>>,
    pub targets: Targets,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// `next[t][b]`, the symbol following `tokens[t][b]`.
    NextToken(Vec<Vec<usize>>),
    /// Regression target per sequence, read at position `last[b]`.
    Score { last: Vec<usize>, value: Vec<f64> },
}

impl SeqBatch {
    pub fn batch_size(&self) -> usize {
        self.tokens.first().map_or(0, Vec::len)
    }

    pub fn seq_len(&self) -> usize {
        self.tokens.len()
    }

    /// Number of predictions scored (characters for char-LM, sequences for regression).
    pub fn target_count(&self) -> usize {
        match &self.targets {
            Targets::NextToken(t) => t.iter().map(Vec::len).sum(),
            Targets::Score { value, .. } => value.len(),
        }
    }

    fn validate(&self, model: &Model) -> Result<()> {
        let (t, b) = (self.seq_len(), self.batch_size());
        if t == 0 || b == 0 {
            return Err(Error::Invalid("empty batch".into()));
        }
        let v = model.vocab_size();
        for row in &self.tokens {
            if row.len() != b {
                return Err(Error::Shape("ragged token batch".into()));
            }
            if let Some(bad) = row.iter().find(|&&i| i >= v) {
                return Err(Error::Shape(format!("token {bad} outside vocabulary of {v}")));
            }
        }
        match (&self.targets, model.task) {
            (Targets::NextToken(next), Task::CharLm) => {
                if next.len() != t || next.iter().any(|r| r.len() != b) {
                    return Err(Error::Shape("targets do not match inputs".into()));
                }
            }
            (Targets::Score { last, value }, Task::Sentiment) => {
                if last.len() != b || value.len() != b {
                    return Err(Error::Shape("targets do not match batch".into()));
                }
                if let Some(bad) = last.iter().find(|&&p| p >= t) {
                    return Err(Error::Shape(format!("last position {bad} beyond length {t}")));
                }
            }
            _ => return Err(Error::Invalid("targets do not match model task".into())),
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum HeadNoise {
    None,
    /// Local-reparameterization noise `[batch×out]`, reused at every time step.
    Gaussian(Tensor),
    /// Binary mask on the head's input units `[batch×hidden]`.
    Mask(Tensor),
}

/// All noise for one minibatch.
#[derive(Clone, Debug)]
pub struct ModelNoise {
    /// Binary mask on embedding outputs `[batch×embed]`.
    pub embed: Option<Tensor>,
    pub lstm: NoisePack,
    pub head: HeadNoise,
}

impl ModelNoise {
    pub fn deterministic() -> Self {
        Self {
            embed: None,
            lstm: NoisePack::Deterministic,
            head: HeadNoise::None,
        }
    }

    pub fn sample(model: &Model, scope: &NoiseScope, rng: &mut Rng, batch: usize) -> Result<Self> {
        let (n, m, out) = (model.lstm.input_size(), model.hidden_size(), model.output_size());
        let p = scope.rate;
        let embed = match (scope.embed, &model.embedding) {
            (LayerNoise::Binary, Some(e)) if p > 0.0 => Some(vbd_mask(rng, p, &[batch, e.cols()])?),
            _ => None,
        };
        let lstm = match scope.lstm {
            LayerNoise::Off => NoisePack::Deterministic,
            LayerNoise::Gaussian => NoisePack::sample(NoiseMode::SparseVd, rng, batch, n, m, Default::default())?,
            LayerNoise::Binary => {
                let rates = super::VbdRates {
                    input: if scope.lstm_input_masks { p } else { 0.0 },
                    hidden: p,
                };
                NoisePack::sample(NoiseMode::Vbd, rng, batch, n, m, rates)?
            }
        };
        let head = match scope.head {
            LayerNoise::Off => HeadNoise::None,
            LayerNoise::Gaussian => HeadNoise::Gaussian(rng.standard_normal(&[batch, out])?),
            LayerNoise::Binary if p > 0.0 => HeadNoise::Mask(vbd_mask(rng, p, &[batch, m])?),
            LayerNoise::Binary => HeadNoise::None,
        };
        Ok(Self { embed, lstm, head })
    }
}

/// A [`Model`] bound to graph leaves.
pub struct BoundModel {
    vars: Vec<Var>,
    embedding: Option<Var>,
    lstm: LstmVars,
    head_mean: Var,
    head_log_sigma2: Var,
    head_bias: Var,
}

impl BoundModel {
    /// Bind every tensor; names for which `trainable` is false become constants.
    pub fn bind(g: &mut Graph, model: &Model, trainable: impl Fn(&str) -> bool) -> Self {
        let vars: Vec<Var> = model
            .tensor_names()
            .iter()
            .zip(model.tensors())
            .map(|(name, t)| if trainable(name) { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        let mut it = vars.iter().copied();
        let embedding = model.embedding.as_ref().map(|_| it.next().unwrap());
        let mut pairs = || {
            let v: Vec<Var> = (0..8).map(|_| it.next().unwrap()).collect();
            let mean: [Var; 4] = std::array::from_fn(|k| v[2 * k]);
            let logs2: [Var; 4] = std::array::from_fn(|k| v[2 * k + 1]);
            (mean, logs2)
        };
        let (wx_mean, wx_log_sigma2) = pairs();
        let (wh_mean, wh_log_sigma2) = pairs();
        let bias = std::array::from_fn(|_| it.next().unwrap());
        let mut next = || it.next().unwrap();
        let lstm = LstmVars {
            wx_mean,
            wx_log_sigma2,
            wh_mean,
            wh_log_sigma2,
            bias,
            h0: next(),
            c0: next(),
        };
        let (head_mean, head_log_sigma2, head_bias) = (next(), next(), next());
        Self {
            vars,
            embedding,
            lstm,
            head_mean,
            head_log_sigma2,
            head_bias,
        }
    }

    /// Leaves in [`Model::tensor_names`] order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn lstm(&self) -> &LstmVars {
        &self.lstm
    }

    /// Network outputs: logits `[(T·b)×V]` (row `t·b + j`) for char-LM, scores `[b×1]` for sentiment.
    pub fn forward(&self, g: &mut Graph, model: &Model, batch: &SeqBatch, noise: &ModelNoise) -> Result<Var> {
        batch.validate(model)?;
        let (b, n, m) = (batch.batch_size(), model.lstm.input_size(), model.hidden_size());
        let mut unroller = LstmUnroller::new(g, &self.lstm, n, m, b, &noise.lstm)?;
        match (model.task, &batch.targets) {
            (Task::CharLm, _) => {
                let inputs: Vec<StepInput> = batch.tokens.iter().map(|ids| StepInput::Tokens(ids)).collect();
                let hs = unroller.unroll(g, &inputs)?;
                let t = hs.len();
                let h = g.concat_rows(&hs)?;
                self.head(g, h, noise, b, t)
            }
            (Task::Sentiment, Targets::Score { last, .. }) => {
                let steps = last.iter().max().copied().unwrap_or(0) + 1;
                let table = self.embedding.expect("sentiment model has an embedding");
                let mask = noise.embed.as_ref().map(|z| g.constant(z.clone()));
                let mut inputs = Vec::with_capacity(steps);
                for ids in &batch.tokens[..steps] {
                    let mut e = g.gather_rows(table, ids)?;
                    if let Some(z) = mask {
                        e = g.mul(e, z)?;
                    }
                    inputs.push(StepInput::Dense(e));
                }
                let hs = unroller.unroll(g, &inputs)?;
                let stacked = g.concat_rows(&hs)?;
                let pick: Vec<usize> = last.iter().enumerate().map(|(j, &p)| p * b + j).collect();
                let h = g.gather_rows(stacked, &pick)?;
                self.head(g, h, noise, b, 1)
            }
            _ => Err(Error::Invalid("targets do not match model task".into())),
        }
    }

    /// Dense head over `h [(reps·b)×m]`; per-sequence noise is tiled `reps` times.
    fn head(&self, g: &mut Graph, h: Var, noise: &ModelNoise, b: usize, reps: usize) -> Result<Var> {
        let out = match &noise.head {
            HeadNoise::None => g.matmul(h, self.head_mean)?,
            HeadNoise::Mask(z) => {
                let z = g.constant(tile_rows(z, reps));
                let hz = g.mul(h, z)?;
                g.matmul(hz, self.head_mean)?
            }
            HeadNoise::Gaussian(eps) => {
                if eps.rows() != b {
                    return Err(Error::Shape(format!("head noise has {} rows for batch {b}", eps.rows())));
                }
                let s2 = g.exp(self.head_log_sigma2);
                let e = g.constant(tile_rows(eps, reps));
                local_reparam_var(g, h, self.head_mean, s2, e)?
            }
        };
        g.add_row(out, self.head_bias)
    }

    /// Summed negative log-likelihood of the batch: softmax cross-entropy over
    /// every position for char-LM, squared error for sentiment.
    pub fn nll(&self, g: &mut Graph, output: Var, batch: &SeqBatch) -> Result<Var> {
        match &batch.targets {
            Targets::NextToken(next) => {
                let flat: Vec<usize> = next.iter().flatten().copied().collect();
                g.softmax_xent(output, &flat)
            }
            Targets::Score { value, .. } => {
                let y = g.constant(Tensor::matrix(value.len(), 1, value.clone())?);
                let d = g.sub(output, y)?;
                let d2 = g.square(d);
                Ok(g.sum(d2))
            }
        }
    }
}

fn tile_rows(t: &Tensor, reps: usize) -> Tensor {
    let (r, c) = (t.rows(), t.cols());
    Tensor::from_parts(vec![r * reps, c], t.data().repeat(reps))
}

/// Mean-weight outputs.
#[derive(Clone, Debug, PartialEq)]
pub enum Predictions {
    /// `[(T·b)×V]`, row `t·b + j`.
    Logits(Tensor),
    Scores(Vec<f64>),
}

/// Evaluate with every weight at its posterior mean and no dropout.
pub fn deterministic_forward(model: &Model, batch: &SeqBatch) -> Result<Predictions> {
    let mut g = Graph::new();
    let bound = BoundModel::bind(&mut g, model, |_| false);
    let out = bound.forward(&mut g, model, batch, &ModelNoise::deterministic())?;
    let v = g.value(out).clone();
    Ok(match model.task {
        Task::CharLm => Predictions::Logits(v),
        Task::Sentiment => Predictions::Scores(v.into_data()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::log_sum_exp;
    use crate::varlayers::{lstm_forward, SequenceBatch, VbdRates};

    fn charlm_batch() -> SeqBatch {
        SeqBatch {
            tokens: vec![vec![0, 3], vec![1, 2], vec![4, 4]],
            targets: Targets::NextToken(vec![vec![1, 2], vec![4, 4], vec![0, 1]]),
        }
    }

    fn sentiment_batch() -> SeqBatch {
        SeqBatch {
            tokens: vec![vec![1, 2, 0], vec![3, 0, 4], vec![5, 6, 2], vec![0, 0, 1]],
            targets: Targets::Score {
                last: vec![2, 0, 3],
                value: vec![0.2, 0.9, 0.5],
            },
        }
    }

    #[test]
    fn names_align_with_tensors() {
        for task in [Task::CharLm, Task::Sentiment] {
            let mut m = Model::init(task, 7, 3, 4, -6.0, &mut Rng::new(1)).unwrap();
            let names = m.tensor_names();
            assert_eq!(names.len(), m.tensors().len());
            assert_eq!(names.len(), m.tensors_mut().len());
            let shapes: Vec<Vec<usize>> = m.tensors().iter().map(|t| t.shape().to_vec()).collect();
            let named = names.into_iter().zip(m.tensors().into_iter().cloned()).collect();
            let back = Model::from_named(task, named).unwrap();
            assert_eq!(back, m);
            assert_eq!(shapes.len(), back.tensors().len());
        }
    }

    #[test]
    fn charlm_logits_come_from_lstm_states() {
        let model = Model::init(Task::CharLm, 5, 0, 4, -6.0, &mut Rng::new(2)).unwrap();
        let batch = charlm_batch();
        let Predictions::Logits(logits) = deterministic_forward(&model, &batch).unwrap() else {
            panic!()
        };
        let hs = lstm_forward(
            &model.lstm,
            SequenceBatch::Tokens(&batch.tokens),
            NoiseMode::None,
            VbdRates::default(),
            &mut Rng::new(9),
        )
        .unwrap();
        for (t, h) in hs.iter().enumerate() {
            for j in 0..2 {
                for v in 0..5 {
                    let want: f64 =
                        model.head_bias.data()[v] + (0..4).map(|k| h.get(j, k) * model.head.mean.get(k, v)).sum::<f64>();
                    assert!((logits.get(t * 2 + j, v) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sentiment_reads_last_position() {
        let model = Model::init(Task::Sentiment, 7, 3, 4, -6.0, &mut Rng::new(3)).unwrap();
        let batch = sentiment_batch();
        let Predictions::Scores(s) = deterministic_forward(&model, &batch).unwrap() else {
            panic!()
        };
        // run each sequence alone, truncated at its last position
        for j in 0..3 {
            let Targets::Score { last, .. } = &batch.targets else { unreachable!() };
            let p = last[j];
            let emb = model.embedding.as_ref().unwrap();
            let inputs: Vec<Tensor> = (0..=p)
                .map(|t| Tensor::matrix(1, 3, emb.row(batch.tokens[t][j]).to_vec()).unwrap())
                .collect();
            let hs = lstm_forward(
                &model.lstm,
                SequenceBatch::Dense(&inputs),
                NoiseMode::None,
                VbdRates::default(),
                &mut Rng::new(0),
            )
            .unwrap();
            let h = hs.last().unwrap();
            let want = model.head_bias.data()[0] + (0..4).map(|k| h.get(0, k) * model.head.mean.get(k, 0)).sum::<f64>();
            assert!((s[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_forward_ignores_noise_settings() {
        let model = Model::init(Task::CharLm, 5, 0, 4, -6.0, &mut Rng::new(4)).unwrap();
        let a = deterministic_forward(&model, &charlm_batch()).unwrap();
        let b = deterministic_forward(&model, &charlm_batch()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nll_matches_hand_sums() {
        let model = Model::init(Task::CharLm, 5, 0, 4, -6.0, &mut Rng::new(5)).unwrap();
        let batch = charlm_batch();
        let mut g = Graph::new();
        let bound = BoundModel::bind(&mut g, &model, |_| false);
        let out = bound.forward(&mut g, &model, &batch, &ModelNoise::deterministic()).unwrap();
        let nll = bound.nll(&mut g, out, &batch).unwrap();
        let logits = g.value(out);
        let Targets::NextToken(next) = &batch.targets else { unreachable!() };
        let mut want = 0.0;
        for t in 0..3 {
            for j in 0..2 {
                let row = logits.row(t * 2 + j);
                want += log_sum_exp(row) - row[next[t][j]];
            }
        }
        assert!((g.value(nll).data()[0] - want).abs() < 1e-12);

        let model = Model::init(Task::Sentiment, 7, 3, 4, -6.0, &mut Rng::new(6)).unwrap();
        let batch = sentiment_batch();
        let Predictions::Scores(s) = deterministic_forward(&model, &batch).unwrap() else {
            panic!()
        };
        let mut g = Graph::new();
        let bound = BoundModel::bind(&mut g, &model, |_| false);
        let out = bound.forward(&mut g, &model, &batch, &ModelNoise::deterministic()).unwrap();
        let nll = bound.nll(&mut g, out, &batch).unwrap();
        let want: f64 = s.iter().zip([0.2, 0.9, 0.5]).map(|(p, y)| (p - y).powi(2)).sum();
        assert!((g.value(nll).data()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn every_variational_entry_gets_gradient() {
        for task in [Task::CharLm, Task::Sentiment] {
            let mut rng = Rng::new(7);
            let mut model = Model::init(task, 5, 3, 4, -2.0, &mut rng).unwrap();
            for w in model.variational_weights_mut() {
                w.mean = w.mean.map(|v| v + 0.1);
            }
            // with c0 = 0 the forget gate gets no signal from inputs seen only at t = 0
            model.lstm.c0 = rng.standard_normal(&[4]).unwrap();
            let scope = NoiseScope::new(task, NoiseMode::SparseVd, 0.0);
            let batch = match task {
                Task::CharLm => charlm_batch(),
                Task::Sentiment => SeqBatch {
                    tokens: vec![vec![1, 2], vec![3, 4], vec![0, 2]],
                    targets: Targets::Score { last: vec![2, 2], value: vec![0.1, 0.8] },
                },
            };
            let noise = ModelNoise::sample(&model, &scope, &mut rng, 2).unwrap();
            let mut g = Graph::new();
            let bound = BoundModel::bind(&mut g, &model, |_| true);
            let out = bound.forward(&mut g, &model, &batch, &noise).unwrap();
            let loss = bound.nll(&mut g, out, &batch).unwrap();
            let grads = g.backward(loss).unwrap();
            for (name, &v) in model.tensor_names().iter().zip(bound.vars()) {
                let lstm_var = name.starts_with("lstm.w");
                let head_var = task == Task::CharLm && name.starts_with("head.");
                if !(lstm_var || head_var) {
                    continue;
                }
                let gr = grads.get(v).unwrap_or_else(|| panic!("{name} detached"));
                assert!(gr.data().iter().all(|&x| x != 0.0), "{name} has a zero gradient entry");
            }
        }
    }

    #[test]
    fn scope_table() {
        let s = NoiseScope::new(Task::CharLm, NoiseMode::SparseVd, 0.25);
        assert!(s.is_variational("lstm.wh.f.log_sigma2") && s.is_variational("head.log_sigma2"));
        let s = NoiseScope::new(Task::Sentiment, NoiseMode::SparseVd, 0.3);
        assert!(s.is_variational("lstm.wx.i.log_sigma2") && !s.is_variational("head.log_sigma2"));
        assert!(s.is_decayed("embedding") && s.is_decayed("head.mean") && !s.is_decayed("lstm.wx.i.mean"));
        let s = NoiseScope::new(Task::Sentiment, NoiseMode::Vbd, 0.3);
        assert!(s.is_decayed("lstm.wh.g.mean") && !s.is_variational("lstm.wh.g.log_sigma2"));
        assert!(!NoiseScope::deterministic().is_decayed("embedding"));
    }

    #[test]
    fn mismatched_batch_rejected() {
        let model = Model::init(Task::CharLm, 5, 0, 4, -6.0, &mut Rng::new(8)).unwrap();
        let mut batch = charlm_batch();
        batch.tokens[0][0] = 9;
        assert!(deterministic_forward(&model, &batch).is_err());
        assert!(deterministic_forward(&model, &sentiment_batch()).is_err());
    }
}
