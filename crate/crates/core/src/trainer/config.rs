use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::varlayers::{NoiseMode, Task};

/// Everything needed to reproduce a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub mode: NoiseMode,
    pub hidden_size: usize,
    pub embed_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub clip_threshold: f64,
    pub vbd_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub init_from: Option<String>,
    pub kl_scale: f64,
    /// Linear KL warm-up over this many epochs; 0 disables it.
    pub kl_warmup_epochs: usize,
    /// Window length (char-LM) or padded length (sentiment).
    pub seq_len: usize,
    /// Path prefix for split files, or `synthetic`.
    pub data: String,
    pub synth_seed: u64,
    pub synth_bytes: usize,
    pub synth_vocab: usize,
    /// Use only the first N training units (sequences, or characters for char-LM).
    pub train_limit: Option<usize>,
    pub threshold: f64,
    pub log_sigma2_init: f64,
    /// Record elapsed seconds in metrics (makes them non-reproducible).
    pub wallclock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Sentiment,
            mode: NoiseMode::None,
            hidden_size: 32,
            embed_size: 32,
            batch_size: 32,
            learning_rate: 0.001,
            epochs: 10,
            clip_threshold: 1.0,
            vbd_rate: 0.0,
            weight_decay: 0.0,
            seed: 1,
            init_from: None,
            kl_scale: 1.0,
            kl_warmup_epochs: 0,
            seq_len: 20,
            data: "synthetic".into(),
            synth_seed: 1,
            synth_bytes: 500_000,
            synth_vocab: 100,
            train_limit: None,
            threshold: 3.0,
            log_sigma2_init: -6.0,
            wallclock: false,
        }
    }
}

const KEYS: &[&str] = &[
    "task",
    "mode",
    "hiddenSize",
    "embedSize",
    "batchSize",
    "learningRate",
    "epochs",
    "clipThreshold",
    "vbdRate",
    "weightDecay",
    "seed",
    "initFrom",
    "klScale",
    "klWarmupEpochs",
    "seqLen",
    "data",
    "synthSeed",
    "synthBytes",
    "synthVocab",
    "trainLimit",
    "threshold",
    "logSigma2Init",
    "wallclock",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

impl TrainConfig {
    /// Apply one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "task" => self.task = v.parse()?,
            "mode" => self.mode = v.parse()?,
            "hiddenSize" => self.hidden_size = parse_num(key, v)?,
            "embedSize" => self.embed_size = parse_num(key, v)?,
            "batchSize" => self.batch_size = parse_num(key, v)?,
            "learningRate" => self.learning_rate = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "clipThreshold" => self.clip_threshold = parse_num(key, v)?,
            "vbdRate" => self.vbd_rate = parse_num(key, v)?,
            "weightDecay" => self.weight_decay = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "initFrom" => self.init_from = (!v.is_empty() && v != "none").then(|| v.to_string()),
            "klScale" => self.kl_scale = parse_num(key, v)?,
            "klWarmupEpochs" => self.kl_warmup_epochs = parse_num(key, v)?,
            "seqLen" => self.seq_len = parse_num(key, v)?,
            "data" => self.data = v.to_string(),
            "synthSeed" => self.synth_seed = parse_num(key, v)?,
            "synthBytes" => self.synth_bytes = parse_num(key, v)?,
            "synthVocab" => self.synth_vocab = parse_num(key, v)?,
            "trainLimit" => self.train_limit = (!v.is_empty() && v != "none").then(|| parse_num(key, v)).transpose()?,
            "threshold" => self.threshold = parse_num(key, v)?,
            "logSigma2Init" => self.log_sigma2_init = parse_num(key, v)?,
            "wallclock" => self.wallclock = parse_num(key, v)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown config key '{other}' (known: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Apply a `key=value` override string.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{kv}' is not key=value")))?;
        self.set(k, v)
    }

    /// Parse a flat config: one `key = value` per line, `#` starts a comment.
    /// Keys not present keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            c.set(k, v)?;
        }
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size < 1 {
            return fail("batchSize must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learningRate must be positive, got {}", self.learning_rate));
        }
        if self.epochs < 1 {
            return fail("epochs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.vbd_rate) {
            return fail(format!("vbdRate must be in [0, 1), got {}", self.vbd_rate));
        }
        if !(self.clip_threshold > 0.0) {
            return fail(format!("clipThreshold must be positive, got {}", self.clip_threshold));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weightDecay must be nonnegative".into());
        }
        if !(self.kl_scale >= 0.0 && self.kl_scale.is_finite()) {
            return fail("klScale must be nonnegative".into());
        }
        if self.hidden_size < 1 || self.seq_len < 1 {
            return fail("hiddenSize and seqLen must be at least 1".into());
        }
        if self.task == Task::Sentiment && self.embed_size < 1 {
            return fail("embedSize must be at least 1".into());
        }
        if !self.threshold.is_finite() || !self.log_sigma2_init.is_finite() {
            return fail("threshold and logSigma2Init must be finite".into());
        }
        Ok(())
    }

    /// Canonical `key = value` text; parsing it yields an identical config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("task", self.task.to_string());
        put("mode", self.mode.to_string());
        put("hiddenSize", self.hidden_size.to_string());
        put("embedSize", self.embed_size.to_string());
        put("batchSize", self.batch_size.to_string());
        put("learningRate", self.learning_rate.to_string());
        put("epochs", self.epochs.to_string());
        put("clipThreshold", self.clip_threshold.to_string());
        put("vbdRate", self.vbd_rate.to_string());
        put("weightDecay", self.weight_decay.to_string());
        put("seed", self.seed.to_string());
        put("initFrom", self.init_from.clone().unwrap_or_else(|| "none".into()));
        put("klScale", self.kl_scale.to_string());
        put("klWarmupEpochs", self.kl_warmup_epochs.to_string());
        put("seqLen", self.seq_len.to_string());
        put("data", self.data.clone());
        put("synthSeed", self.synth_seed.to_string());
        put("synthBytes", self.synth_bytes.to_string());
        put("synthVocab", self.synth_vocab.to_string());
        put("trainLimit", self.train_limit.map_or_else(|| "none".into(), |v| v.to_string()));
        put("threshold", self.threshold.to_string());
        put("logSigma2Init", self.log_sigma2_init.to_string());
        put("wallclock", self.wallclock.to_string());
        s
    }

    /// KL multiplier for a 1-based epoch under the warm-up schedule.
    pub fn kl_scale_at(&self, epoch: usize) -> f64 {
        if self.kl_warmup_epochs == 0 {
            self.kl_scale
        } else {
            self.kl_scale * (epoch as f64 / self.kl_warmup_epochs as f64).min(1.0)
        }
    }
}
