//! Variational LSTM.
//!
//! Gate order everywhere is `i, o, f, g` (input, output, forget, modulation).
//! Under Sparse VD the input-to-hidden product uses the local
//! reparameterization with one `[batch×m]` noise matrix per gate, and the
//! hidden-to-hidden weights are sampled once per gate for the whole minibatch.
//! Both are reused at every time step.

use crate::error::{Error, Result};
use crate::ndmath::{orthogonal_init, sigmoid, CustomOp, Graph, Rng, Tensor, Var};

use super::vbd::vbd_mask;
use super::weight::{sample_weight_var, VariationalWeight, VARIANCE_FLOOR};
use super::NoiseMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Input,
    Output,
    Forget,
    Modulation,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Output, Gate::Forget, Gate::Modulation];

    pub fn tag(self) -> &'static str {
        match self {
            Gate::Input => "i",
            Gate::Output => "o",
            Gate::Forget => "f",
            Gate::Modulation => "g",
        }
    }
}

/// Posterior parameters of one LSTM layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmVarParams {
    /// Input-to-hidden, `[n×m]` per gate.
    pub wx: [VariationalWeight; 4],
    /// Hidden-to-hidden, `[m×m]` per gate.
    pub wh: [VariationalWeight; 4],
    pub bias: [Tensor; 4],
    pub h0: Tensor,
    pub c0: Tensor,
}

impl LstmVarParams {
    pub fn new(
        wx: [VariationalWeight; 4],
        wh: [VariationalWeight; 4],
        bias: [Tensor; 4],
        h0: Tensor,
        c0: Tensor,
    ) -> Result<Self> {
        let p = Self { wx, wh, bias, h0, c0 };
        p.validate()?;
        Ok(p)
    }

    /// Orthogonal means, zero biases and states, constant `log σ²`.
    pub fn orthogonal(rng: &mut Rng, n: usize, m: usize, log_sigma2: f64) -> Result<Self> {
        let mut wx = Vec::with_capacity(4);
        let mut wh = Vec::with_capacity(4);
        for _ in Gate::ALL {
            wx.push(VariationalWeight::from_mean(orthogonal_init(rng, n, m)?, log_sigma2));
            wh.push(VariationalWeight::from_mean(orthogonal_init(rng, m, m)?, log_sigma2));
        }
        Self::new(
            wx.try_into().expect("four gates"),
            wh.try_into().expect("four gates"),
            std::array::from_fn(|_| Tensor::zeros(&[m])),
            Tensor::zeros(&[m]),
            Tensor::zeros(&[m]),
        )
    }

    pub fn input_size(&self) -> usize {
        self.wx[0].rows()
    }

    pub fn hidden_size(&self) -> usize {
        self.wh[0].rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.input_size(), self.hidden_size());
        for (k, gate) in Gate::ALL.iter().enumerate() {
            let t = gate.tag();
            if self.wx[k].shape() != [n, m] {
                return Err(Error::Shape(format!("wx.{t} is {:?}, want [{n}, {m}]", self.wx[k].shape())));
            }
            if self.wh[k].shape() != [m, m] {
                return Err(Error::Shape(format!("wh.{t} is {:?}, want [{m}, {m}]", self.wh[k].shape())));
            }
            if self.bias[k].len() != m {
                return Err(Error::Shape(format!("bias.{t} has {} entries, want {m}", self.bias[k].len())));
            }
        }
        if self.h0.len() != m || self.c0.len() != m {
            return Err(Error::Shape(format!("initial state must have {m} entries")));
        }
        Ok(())
    }
}

/// Dropout rates for the binary-mask mode. Zero disables the mask.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VbdRates {
    pub input: f64,
    pub hidden: f64,
}

/// Noise for one minibatch, fixed across all time steps.
#[derive(Clone, Debug)]
pub enum NoisePack {
    Deterministic,
    /// Sparse VD: input-to-hidden preactivation noise `[batch×m]` and
    /// hidden-to-hidden weight noise `[m×m]`, one of each per gate.
    Gaussian {
        input: [Tensor; 4],
        hidden: [Tensor; 4],
    },
    /// VBD: per-sequence masks on the input `[batch×n]` and hidden `[batch×m]`
    /// units, one of each per gate.
    Binary {
        input: Option<[Tensor; 4]>,
        hidden: Option<[Tensor; 4]>,
    },
}

impl NoisePack {
    pub fn sample(
        mode: NoiseMode,
        rng: &mut Rng,
        batch: usize,
        n: usize,
        m: usize,
        rates: VbdRates,
    ) -> Result<Self> {
        Ok(match mode {
            NoiseMode::None => NoisePack::Deterministic,
            NoiseMode::SparseVd => {
                let input = four(|| rng.standard_normal(&[batch, m]))?;
                let hidden = four(|| rng.standard_normal(&[m, m]))?;
                NoisePack::Gaussian { input, hidden }
            }
            NoiseMode::Vbd => {
                let input = if rates.input > 0.0 {
                    Some(four(|| vbd_mask(rng, rates.input, &[batch, n]))?)
                } else {
                    None
                };
                let hidden = if rates.hidden > 0.0 {
                    Some(four(|| vbd_mask(rng, rates.hidden, &[batch, m]))?)
                } else {
                    None
                };
                NoisePack::Binary { input, hidden }
            }
        })
    }
}

fn four<T>(mut f: impl FnMut() -> Result<T>) -> Result<[T; 4]> {
    Ok([f()?, f()?, f()?, f()?])
}

/// Graph handles for an [`LstmVarParams`].
#[derive(Clone, Debug)]
pub struct LstmVars {
    pub wx_mean: [Var; 4],
    pub wx_log_sigma2: [Var; 4],
    pub wh_mean: [Var; 4],
    pub wh_log_sigma2: [Var; 4],
    pub bias: [Var; 4],
    pub h0: Var,
    pub c0: Var,
}

impl LstmVars {
    /// Bind every tensor as a constant (inference, or tests that only need values).
    pub fn constants(g: &mut Graph, p: &LstmVarParams) -> Self {
        Self::bind(g, p, |g, t| g.constant(t.clone()))
    }

    /// Bind every tensor as a trainable leaf.
    pub fn params(g: &mut Graph, p: &LstmVarParams) -> Self {
        Self::bind(g, p, |g, t| g.param(t.clone()))
    }

    pub fn bind(g: &mut Graph, p: &LstmVarParams, mut leaf: impl FnMut(&mut Graph, &Tensor) -> Var) -> Self {
        let wx_mean = std::array::from_fn(|k| leaf(g, &p.wx[k].mean));
        let wx_log_sigma2 = std::array::from_fn(|k| leaf(g, &p.wx[k].log_sigma2));
        let wh_mean = std::array::from_fn(|k| leaf(g, &p.wh[k].mean));
        let wh_log_sigma2 = std::array::from_fn(|k| leaf(g, &p.wh[k].log_sigma2));
        let bias = std::array::from_fn(|k| leaf(g, &p.bias[k]));
        let h0 = leaf(g, &p.h0);
        let c0 = leaf(g, &p.c0);
        Self {
            wx_mean,
            wx_log_sigma2,
            wh_mean,
            wh_log_sigma2,
            bias,
            h0,
            c0,
        }
    }
}

/// Input at one time step: token ids (one-hot rows) or a dense `[batch×n]` node.
#[derive(Clone, Copy, Debug)]
pub enum StepInput<'a> {
    Tokens(&'a [usize]),
    Dense(Var),
}

/// Noise nodes consumed by one time step; used to check that noise is tied
/// across the sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepTrace {
    pub hidden_weight: Option<Var>,
    pub input_noise: Option<Var>,
}

enum Prepared {
    /// All four gates fused into `[·×4m]` matrices.
    Fused {
        x_mean: Var,
        x_var: Option<Var>,
        x_eps: Option<Var>,
        wh: Var,
    },
    /// Binary masks differ per gate, so products are taken gate by gate.
    Masked {
        x_fused: Var,
        wx: [Var; 4],
        wh: [Var; 4],
        x_masks: Option<[Tensor; 4]>,
        h_masks: Option<[Var; 4]>,
    },
}

/// Per-minibatch state for unrolling an LSTM on a graph.
pub struct LstmUnroller {
    n: usize,
    m: usize,
    batch: usize,
    prepared: Prepared,
    bias: Var,
    h0: Var,
    c0: Var,
    trace: Vec<StepTrace>,
}

impl LstmUnroller {
    /// Sample or fuse the per-minibatch weight views. Called once per minibatch.
    pub fn new(g: &mut Graph, vars: &LstmVars, n: usize, m: usize, batch: usize, noise: &NoisePack) -> Result<Self> {
        let rows = row_views(g, &vars.bias)?;
        let bias = g.concat_cols(&rows)?;
        let prepared = match noise {
            NoisePack::Deterministic => Prepared::Fused {
                x_mean: g.concat_cols(&vars.wx_mean)?,
                x_var: None,
                x_eps: None,
                wh: g.concat_cols(&vars.wh_mean)?,
            },
            NoisePack::Gaussian { input, hidden } => {
                for e in input {
                    expect_shape(e, &[batch, m], "input noise")?;
                }
                let mut sampled = Vec::with_capacity(4);
                for k in 0..4 {
                    expect_shape(&hidden[k], &[m, m], "hidden noise")?;
                    let eps = g.constant(hidden[k].clone());
                    sampled.push(sample_weight_var(g, vars.wh_mean[k], vars.wh_log_sigma2[k], eps)?);
                }
                let x_var: Vec<Var> = vars.wx_log_sigma2.iter().map(|&l| g.exp(l)).collect();
                let eps_parts: Vec<Var> = input.iter().map(|e| g.constant(e.clone())).collect();
                Prepared::Fused {
                    x_mean: g.concat_cols(&vars.wx_mean)?,
                    x_var: Some(g.concat_cols(&x_var)?),
                    x_eps: Some(g.concat_cols(&eps_parts)?),
                    wh: g.concat_cols(&sampled)?,
                }
            }
            NoisePack::Binary { input, hidden } => {
                if let Some(masks) = input {
                    for z in masks {
                        expect_shape(z, &[batch, n], "input mask")?;
                    }
                }
                let h_masks = match hidden {
                    Some(masks) => {
                        let mut vs = Vec::with_capacity(4);
                        for z in masks {
                            expect_shape(z, &[batch, m], "hidden mask")?;
                            vs.push(g.constant(z.clone()));
                        }
                        Some(vs.try_into().expect("four gates"))
                    }
                    None => None,
                };
                Prepared::Masked {
                    x_fused: g.concat_cols(&vars.wx_mean)?,
                    wx: vars.wx_mean,
                    wh: vars.wh_mean,
                    x_masks: input.clone(),
                    h_masks,
                }
            }
        };
        Ok(Self {
            n,
            m,
            batch,
            prepared,
            bias,
            h0: vars.h0,
            c0: vars.c0,
            trace: Vec::new(),
        })
    }

    pub fn trace(&self) -> &[StepTrace] {
        &self.trace
    }

    /// Initial `(h, c)` broadcast over the batch.
    pub fn initial_state(&self, g: &mut Graph) -> Result<(Var, Var)> {
        Ok((g.broadcast_rows(self.h0, self.batch)?, g.broadcast_rows(self.c0, self.batch)?))
    }

    fn input_part(&self, g: &mut Graph, x: StepInput) -> Result<(Var, Option<Var>)> {
        match (&self.prepared, x) {
            (Prepared::Fused { x_mean, x_var, x_eps, .. }, x) => {
                let (mean, var) = match x {
                    StepInput::Tokens(ids) => {
                        self.check_tokens(ids)?;
                        let mean = g.gather_rows(*x_mean, ids)?;
                        // one-hot rows: x² = x, so the variance is a row lookup too
                        let var = x_var.map(|v| g.gather_rows(v, ids)).transpose()?;
                        (mean, var)
                    }
                    StepInput::Dense(xv) => {
                        self.check_dense(g, xv)?;
                        let mean = g.matmul(xv, *x_mean)?;
                        let var = match x_var {
                            Some(v) => {
                                let x2 = g.square(xv);
                                Some(g.matmul(x2, *v)?)
                            }
                            None => None,
                        };
                        (mean, var)
                    }
                };
                match (var, x_eps) {
                    (Some(var), Some(eps)) => {
                        let std = g.safe_sqrt(var, VARIANCE_FLOOR);
                        let noise = g.mul(*eps, std)?;
                        Ok((g.add(mean, noise)?, Some(*eps)))
                    }
                    _ => Ok((mean, None)),
                }
            }
            (Prepared::Masked { x_fused, wx, x_masks, .. }, x) => {
                let Some(masks) = x_masks else {
                    let part = match x {
                        StepInput::Tokens(ids) => {
                            self.check_tokens(ids)?;
                            g.gather_rows(*x_fused, ids)?
                        }
                        StepInput::Dense(xv) => {
                            self.check_dense(g, xv)?;
                            g.matmul(xv, *x_fused)?
                        }
                    };
                    return Ok((part, None));
                };
                let mut parts = Vec::with_capacity(4);
                for k in 0..4 {
                    let part = match x {
                        StepInput::Tokens(ids) => {
                            self.check_tokens(ids)?;
                            // (x ⊙ z)·W for one-hot x scales the selected row by z[b, id]
                            let rows = g.gather_rows(wx[k], ids)?;
                            let mut scale = Vec::with_capacity(self.batch * self.m);
                            for (b, &id) in ids.iter().enumerate() {
                                scale.extend(std::iter::repeat_n(masks[k].get(b, id), self.m));
                            }
                            let s = g.constant(Tensor::matrix(self.batch, self.m, scale)?);
                            g.mul(rows, s)?
                        }
                        StepInput::Dense(xv) => {
                            self.check_dense(g, xv)?;
                            let z = g.constant(masks[k].clone());
                            let xz = g.mul(xv, z)?;
                            g.matmul(xz, wx[k])?
                        }
                    };
                    parts.push(part);
                }
                Ok((g.concat_cols(&parts)?, None))
            }
        }
    }

    fn check_tokens(&self, ids: &[usize]) -> Result<()> {
        if ids.len() != self.batch {
            return Err(Error::Shape(format!("{} tokens for batch of {}", ids.len(), self.batch)));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.n) {
            return Err(Error::Shape(format!("token {bad} outside input size {}", self.n)));
        }
        Ok(())
    }

    fn check_dense(&self, g: &Graph, x: Var) -> Result<()> {
        let s = g.value(x).shape();
        if s != [self.batch, self.n] {
            return Err(Error::Shape(format!("step input {s:?}, want [{}, {}]", self.batch, self.n)));
        }
        Ok(())
    }

    /// One recurrence step; returns `(h_t, c_t)`.
    pub fn step(&mut self, g: &mut Graph, x: StepInput, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
        let m = self.m;
        for (v, what) in [(h_prev, "h_prev"), (c_prev, "c_prev")] {
            let s = g.value(v).shape();
            if s != [self.batch, m] {
                return Err(Error::Shape(format!("{what} is {s:?}, want [{}, {m}]", self.batch)));
            }
        }
        let (x_part, input_noise) = self.input_part(g, x)?;
        let (h_part, hidden_weight) = match &self.prepared {
            Prepared::Fused { wh, .. } => (g.matmul(h_prev, *wh)?, Some(*wh)),
            Prepared::Masked { wh, h_masks, .. } => {
                let mut parts = Vec::with_capacity(4);
                for k in 0..4 {
                    let h = match h_masks {
                        Some(z) => g.mul(h_prev, z[k])?,
                        None => h_prev,
                    };
                    parts.push(g.matmul(h, wh[k])?);
                }
                (g.concat_cols(&parts)?, None)
            }
        };
        let pre = g.add(x_part, h_part)?;
        let pre = g.add_row(pre, self.bias)?;
        let hc = g.custom(Box::new(LstmCell), &[pre, c_prev])?;
        let h = g.slice_cols(hc, 0, m)?;
        let c = g.slice_cols(hc, m, m)?;
        self.trace.push(StepTrace {
            hidden_weight,
            input_noise,
        });
        Ok((h, c))
    }

    /// Run the whole sequence from the trainable initial state; returns every `h_t`.
    pub fn unroll(&mut self, g: &mut Graph, inputs: &[StepInput]) -> Result<Vec<Var>> {
        if inputs.is_empty() {
            return Err(Error::Invalid("empty sequence".into()));
        }
        let (mut h, mut c) = self.initial_state(g)?;
        let mut hs = Vec::with_capacity(inputs.len());
        for &x in inputs {
            (h, c) = self.step(g, x, h, c)?;
            hs.push(h);
        }
        Ok(hs)
    }
}

fn expect_shape(t: &Tensor, want: &[usize], what: &str) -> Result<()> {
    if t.shape() != want {
        return Err(Error::Shape(format!("{what} is {:?}, want {want:?}", t.shape())));
    }
    Ok(())
}

/// View each 1-D bias as a `[1×m]` row so the four can be concatenated.
fn row_views(g: &mut Graph, vs: &[Var; 4]) -> Result<Vec<Var>> {
    vs.iter().map(|&v| g.broadcast_rows(v, 1)).collect()
}

/// Fused gate nonlinearities and state update.
///
/// Inputs: preactivations `[b×4m]` (gate order i, o, f, g) and `c_prev [b×m]`.
/// Output: `[b×2m]` holding `h_t` in the first `m` columns and `c_t` in the rest.
struct LstmCell;

impl CustomOp for LstmCell {
    fn name(&self) -> &'static str {
        "lstm_cell"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let (pre, c_prev) = (inputs[0], inputs[1]);
        let (b, m) = (c_prev.rows(), c_prev.cols());
        if pre.shape() != [b, 4 * m] {
            return Err(Error::Shape(format!("preactivations {:?} for state [{b}, {m}]", pre.shape())));
        }
        let mut out = vec![0.0; b * 2 * m];
        for r in 0..b {
            let a = pre.row(r);
            let cp = c_prev.row(r);
            let (h, c) = out[r * 2 * m..(r + 1) * 2 * m].split_at_mut(m);
            for j in 0..m {
                let i = sigmoid(a[j]);
                let o = sigmoid(a[m + j]);
                let f = sigmoid(a[2 * m + j]);
                let gg = a[3 * m + j].tanh();
                c[j] = f * cp[j] + i * gg;
                h[j] = o * c[j].tanh();
            }
        }
        Tensor::matrix(b, 2 * m, out)
    }

    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let (pre, c_prev) = (inputs[0], inputs[1]);
        let (b, m) = (c_prev.rows(), c_prev.cols());
        let mut d_pre = vec![0.0; b * 4 * m];
        let mut d_c = vec![0.0; b * m];
        for r in 0..b {
            let a = pre.row(r);
            let cp = c_prev.row(r);
            let c = &output.row(r)[m..];
            let gr = grad.row(r);
            let (gh, gc) = gr.split_at(m);
            let dp = &mut d_pre[r * 4 * m..(r + 1) * 4 * m];
            for j in 0..m {
                let i = sigmoid(a[j]);
                let o = sigmoid(a[m + j]);
                let f = sigmoid(a[2 * m + j]);
                let gg = a[3 * m + j].tanh();
                let tc = c[j].tanh();
                let dc = gc[j] + gh[j] * o * (1.0 - tc * tc);
                dp[j] = dc * gg * i * (1.0 - i);
                dp[m + j] = gh[j] * tc * o * (1.0 - o);
                dp[2 * m + j] = dc * cp[j] * f * (1.0 - f);
                dp[3 * m + j] = dc * i * (1.0 - gg * gg);
                d_c[r * m + j] = dc * f;
            }
        }
        vec![
            Tensor::from_parts(vec![b, 4 * m], d_pre),
            Tensor::from_parts(vec![b, m], d_c),
        ]
    }
}

/// A batch of input sequences, time-major.
#[derive(Clone, Copy, Debug)]
pub enum SequenceBatch<'a> {
    /// `tokens[t][b]`
    Tokens(&'a [Vec<usize>]),
    /// `inputs[t]` is `[batch×n]`
    Dense(&'a [Tensor]),
}

impl SequenceBatch<'_> {
    fn len(&self) -> usize {
        match self {
            SequenceBatch::Tokens(t) => t.len(),
            SequenceBatch::Dense(t) => t.len(),
        }
    }

    fn batch(&self) -> usize {
        match self {
            SequenceBatch::Tokens(t) => t.first().map_or(0, Vec::len),
            SequenceBatch::Dense(t) => t.first().map_or(0, Tensor::rows),
        }
    }
}

/// One step on plain tensors with a fixed noise pack.
pub fn lstm_step(
    params: &LstmVarParams,
    x_t: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    noise: &NoisePack,
) -> Result<(Tensor, Tensor)> {
    params.validate()?;
    let mut g = Graph::new();
    let vars = LstmVars::constants(&mut g, params);
    let x = g.constant(x_t.clone());
    let h = g.constant(h_prev.clone());
    let c = g.constant(c_prev.clone());
    let mut un = LstmUnroller::new(&mut g, &vars, params.input_size(), params.hidden_size(), x_t.rows(), noise)?;
    let (h, c) = un.step(&mut g, StepInput::Dense(x), h, c)?;
    Ok((g.value(h).clone(), g.value(c).clone()))
}

/// Unroll over a batch of sequences, sampling one noise pack for the minibatch.
pub fn lstm_forward(
    params: &LstmVarParams,
    batch: SequenceBatch,
    mode: NoiseMode,
    rates: VbdRates,
    rng: &mut Rng,
) -> Result<Vec<Tensor>> {
    params.validate()?;
    if batch.len() == 0 {
        return Err(Error::Invalid("empty sequence".into()));
    }
    let (n, m, b) = (params.input_size(), params.hidden_size(), batch.batch());
    let noise = NoisePack::sample(mode, rng, b, n, m, rates)?;
    lstm_forward_with_noise(params, batch, &noise)
}

pub fn lstm_forward_with_noise(params: &LstmVarParams, batch: SequenceBatch, noise: &NoisePack) -> Result<Vec<Tensor>> {
    if batch.len() == 0 {
        return Err(Error::Invalid("empty sequence".into()));
    }
    let (n, m, b) = (params.input_size(), params.hidden_size(), batch.batch());
    let mut g = Graph::new();
    let vars = LstmVars::constants(&mut g, params);
    let mut un = LstmUnroller::new(&mut g, &vars, n, m, b, noise)?;
    let inputs: Vec<StepInput> = match batch {
        SequenceBatch::Tokens(t) => t.iter().map(|ids| StepInput::Tokens(ids)).collect(),
        SequenceBatch::Dense(t) => t.iter().map(|x| StepInput::Dense(g.constant(x.clone()))).collect(),
    };
    let hs = un.unroll(&mut g, &inputs)?;
    Ok(hs.into_iter().map(|h| g.value(h).clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain_step(p: &LstmVarParams, x: &Tensor, h: &Tensor, c: &Tensor) -> (Tensor, Tensor) {
        // independent reference: per-gate loops, no fusion
        let (b, n, m) = (x.rows(), p.input_size(), p.hidden_size());
        let mut gates = vec![vec![0.0; b * m]; 4];
        for k in 0..4 {
            for r in 0..b {
                for j in 0..m {
                    let mut s = p.bias[k].data()[j];
                    for q in 0..n {
                        s += x.get(r, q) * p.wx[k].mean.get(q, j);
                    }
                    for q in 0..m {
                        s += h.get(r, q) * p.wh[k].mean.get(q, j);
                    }
                    gates[k][r * m + j] = s;
                }
            }
        }
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut hn = Tensor::zeros(&[b, m]);
        let mut cn = Tensor::zeros(&[b, m]);
        for idx in 0..b * m {
            let i = sig(gates[0][idx]);
            let o = sig(gates[1][idx]);
            let f = sig(gates[2][idx]);
            let gg = gates[3][idx].tanh();
            let cv = f * c.data()[idx] + i * gg;
            cn.data_mut()[idx] = cv;
            hn.data_mut()[idx] = o * cv.tanh();
        }
        (hn, cn)
    }

    fn random_params(seed: u64, n: usize, m: usize, logs2: f64) -> LstmVarParams {
        let mut rng = Rng::new(seed);
        let mut p = LstmVarParams::orthogonal(&mut rng, n, m, logs2).unwrap();
        for k in 0..4 {
            p.bias[k] = rng.standard_normal(&[m]).unwrap().map(|v| 0.3 * v);
        }
        p.h0 = rng.standard_normal(&[m]).unwrap().map(|v| 0.2 * v);
        p.c0 = rng.standard_normal(&[m]).unwrap().map(|v| 0.2 * v);
        p
    }

    #[test]
    fn zero_weights_give_half_gates_and_zero_state() {
        let p = LstmVarParams::new(
            std::array::from_fn(|_| VariationalWeight::from_mean(Tensor::zeros(&[3, 2]), -300.0)),
            std::array::from_fn(|_| VariationalWeight::from_mean(Tensor::zeros(&[2, 2]), -300.0)),
            std::array::from_fn(|_| Tensor::zeros(&[2])),
            Tensor::zeros(&[2]),
            Tensor::zeros(&[2]),
        )
        .unwrap();
        let x = Rng::new(1).standard_normal(&[2, 3]).unwrap();
        let z = Tensor::zeros(&[2, 2]);
        let noise = NoisePack::sample(NoiseMode::SparseVd, &mut Rng::new(2), 2, 3, 2, VbdRates::default()).unwrap();
        let (h, c) = lstm_step(&p, &x, &z, &z, &noise).unwrap();
        assert!(h.data().iter().all(|v| v.abs() < 1e-12));
        assert!(c.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn saturated_forget_gate_carries_memory() {
        let mut p = random_params(3, 3, 4, -300.0);
        p.bias[2] = Tensor::full(&[4], 60.0); // forget → 1
        p.bias[0] = Tensor::full(&[4], -60.0); // input → 0
        let mut rng = Rng::new(4);
        let x = rng.standard_normal(&[2, 3]).unwrap().map(|v| 0.1 * v);
        let h = rng.standard_normal(&[2, 4]).unwrap().map(|v| 0.1 * v);
        let c = rng.standard_normal(&[2, 4]).unwrap();
        let (_, c_next) = lstm_step(&p, &x, &h, &c, &NoisePack::Deterministic).unwrap();
        assert!(c_next.max_abs_diff(&c) < 1e-12);
    }

    #[test]
    fn matches_plain_reference_step() {
        let p = random_params(5, 3, 4, -300.0);
        let mut rng = Rng::new(6);
        let x = rng.standard_normal(&[3, 3]).unwrap();
        let h = rng.standard_normal(&[3, 4]).unwrap().map(|v| 0.5 * v);
        let c = rng.standard_normal(&[3, 4]).unwrap();
        let (want_h, want_c) = plain_step(&p, &x, &h, &c);
        for mode in [NoiseMode::None, NoiseMode::SparseVd] {
            let noise = NoisePack::sample(mode, &mut rng, 3, 3, 4, VbdRates::default()).unwrap();
            let (got_h, got_c) = lstm_step(&p, &x, &h, &c, &noise).unwrap();
            assert!(got_h.max_abs_diff(&want_h) <= 1e-12, "{mode:?}");
            assert!(got_c.max_abs_diff(&want_c) <= 1e-12, "{mode:?}");
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = random_params(7, 3, 4, -6.0);
        let x = Tensor::zeros(&[2, 5]);
        let z = Tensor::zeros(&[2, 4]);
        assert!(lstm_step(&p, &x, &z, &z, &NoisePack::Deterministic).is_err());
        let x = Tensor::zeros(&[2, 3]);
        let bad = Tensor::zeros(&[2, 3]);
        assert!(lstm_step(&p, &x, &bad, &z, &NoisePack::Deterministic).is_err());
    }

    fn token_batch() -> Vec<Vec<usize>> {
        vec![vec![0, 2], vec![1, 1], vec![2, 0], vec![0, 0]]
    }

    #[test]
    fn forward_modes() {
        let p = random_params(8, 3, 4, -6.0);
        let toks = token_batch();
        let batch = SequenceBatch::Tokens(&toks);
        let a = lstm_forward(&p, batch, NoiseMode::None, VbdRates::default(), &mut Rng::new(1)).unwrap();
        let b = lstm_forward(&p, batch, NoiseMode::None, VbdRates::default(), &mut Rng::new(2)).unwrap();
        assert_eq!(a, b);

        // VBD with p = 0 is the deterministic network
        let rates = VbdRates { input: 0.0, hidden: 0.0 };
        let v = lstm_forward(&p, batch, NoiseMode::Vbd, rates, &mut Rng::new(3)).unwrap();
        assert_eq!(a.len(), v.len());
        for (x, y) in a.iter().zip(&v) {
            assert!(x.max_abs_diff(y) <= 1e-12);
        }

        // σ² → 0 collapses Sparse VD onto the means
        let mut tiny = p.clone();
        for w in tiny.wx.iter_mut().chain(tiny.wh.iter_mut()) {
            w.log_sigma2 = Tensor::full(w.shape(), -300.0);
        }
        let s = lstm_forward(&tiny, batch, NoiseMode::SparseVd, rates, &mut Rng::new(4)).unwrap();
        for (x, y) in a.iter().zip(&s) {
            assert!(x.max_abs_diff(y) <= 1e-12);
        }

        // noise actually changes something at log σ² = -6
        let s = lstm_forward(&p, batch, NoiseMode::SparseVd, rates, &mut Rng::new(4)).unwrap();
        assert!(a.last().unwrap().max_abs_diff(s.last().unwrap()) > 1e-6);
    }

    #[test]
    fn vbd_masks_on_tokens_match_dense_one_hot() {
        let p = random_params(9, 3, 4, -6.0);
        let toks = token_batch();
        let dense: Vec<Tensor> = toks
            .iter()
            .map(|ids| {
                let mut t = Tensor::zeros(&[2, 3]);
                for (b, &i) in ids.iter().enumerate() {
                    t.set(b, i, 1.0);
                }
                t
            })
            .collect();
        let rates = VbdRates { input: 0.4, hidden: 0.3 };
        let noise = NoisePack::sample(NoiseMode::Vbd, &mut Rng::new(5), 2, 3, 4, rates).unwrap();
        let a = lstm_forward_with_noise(&p, SequenceBatch::Tokens(&toks), &noise).unwrap();
        let b = lstm_forward_with_noise(&p, SequenceBatch::Dense(&dense), &noise).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x.max_abs_diff(y) <= 1e-12);
        }

        let noise = NoisePack::sample(NoiseMode::SparseVd, &mut Rng::new(6), 2, 3, 4, rates).unwrap();
        let a = lstm_forward_with_noise(&p, SequenceBatch::Tokens(&toks), &noise).unwrap();
        let b = lstm_forward_with_noise(&p, SequenceBatch::Dense(&dense), &noise).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x.max_abs_diff(y) <= 1e-12);
        }
    }

    #[test]
    fn empty_sequence_rejected() {
        let p = random_params(10, 3, 4, -6.0);
        let toks: Vec<Vec<usize>> = vec![];
        let r = lstm_forward(&p, SequenceBatch::Tokens(&toks), NoiseMode::None, VbdRates::default(), &mut Rng::new(0));
        assert!(r.is_err());
    }

    #[test]
    fn noise_is_tied_across_time_steps() {
        let p = random_params(11, 3, 4, -6.0);
        let toks = token_batch();
        let noise = NoisePack::sample(NoiseMode::SparseVd, &mut Rng::new(7), 2, 3, 4, VbdRates::default()).unwrap();
        let mut g = Graph::new();
        let vars = LstmVars::constants(&mut g, &p);
        let mut un = LstmUnroller::new(&mut g, &vars, 3, 4, 2, &noise).unwrap();
        let inputs: Vec<StepInput> = toks.iter().map(|t| StepInput::Tokens(t)).collect();
        un.unroll(&mut g, &inputs).unwrap();
        let trace = un.trace();
        assert_eq!(trace.len(), toks.len());
        assert!(trace[0].hidden_weight.is_some() && trace[0].input_noise.is_some());
        assert!(trace.iter().all(|t| *t == trace[0]));
    }
}
