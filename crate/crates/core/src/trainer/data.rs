use crate::datatext::{
    batches_from_starts, synth_char_splits, synth_regression_splits, window_starts, CharCorpus, RegBatch, RegCorpus,
    Vocab,
};
use crate::error::{Error, Result};
use crate::ndmath::Rng;
use crate::varlayers::{deterministic_forward, Model, Predictions, SeqBatch, Targets, Task};

use super::config::TrainConfig;

/// Loaded splits for either task.
#[derive(Clone, Debug)]
pub enum TaskData {
    Char(CharCorpus),
    Reg(RegCorpus),
}

impl TaskData {
    /// Load from `<data>.{train,valid,test}.{txt,tsv}` or generate when `data = synthetic`.
    pub fn load(cfg: &TrainConfig) -> Result<Self> {
        let synthetic = cfg.data == "synthetic";
        let mut d = match cfg.task {
            Task::CharLm => {
                let c = if synthetic {
                    let [a, b, c] = synth_char_splits(cfg.synth_seed, cfg.synth_bytes);
                    CharCorpus::from_texts(&a, &b, &c)?
                } else {
                    CharCorpus::load(&cfg.data)?
                };
                TaskData::Char(c)
            }
            Task::Sentiment => {
                let c = if synthetic {
                    let [a, b, c] = synth_regression_splits(cfg.synth_seed, cfg.synth_vocab, cfg.seq_len)?;
                    RegCorpus::from_items(&a, &b, &c, cfg.seq_len)?
                } else {
                    RegCorpus::load(&cfg.data, cfg.seq_len)?
                };
                TaskData::Reg(c)
            }
        };
        if let Some(n) = cfg.train_limit {
            match &mut d {
                TaskData::Char(c) => c.train.truncate(n),
                TaskData::Reg(c) => c.train.truncate(n),
            }
        }
        if d.train_units(cfg.seq_len)? == 0 {
            return Err(Error::Data("training split is empty".into()));
        }
        Ok(d)
    }

    pub fn vocab(&self) -> &Vocab {
        match self {
            TaskData::Char(c) => &c.vocab,
            TaskData::Reg(c) => &c.vocab,
        }
    }

    /// Rows of the model's input table.
    pub fn model_vocab_size(&self) -> usize {
        match self {
            TaskData::Char(c) => c.vocab.size_with_unk(),
            TaskData::Reg(c) => c.vocab.padded_size(),
        }
    }

    /// Number of training sequences (windows for char-LM).
    pub fn train_units(&self, seq_len: usize) -> Result<usize> {
        Ok(match self {
            TaskData::Char(c) => window_starts(c.train.len(), seq_len)?.len(),
            TaskData::Reg(c) => c.train.len(),
        })
    }

    /// Shuffled training minibatches.
    pub fn train_batches(&self, seq_len: usize, batch: usize, rng: &mut Rng) -> Result<Vec<SeqBatch>> {
        match self {
            TaskData::Char(c) => {
                let mut starts = window_starts(c.train.len(), seq_len)?;
                rng.shuffle(&mut starts);
                Ok(batches_from_starts(&c.train, &starts, seq_len, batch)?
                    .iter()
                    .map(|b| b.to_seq_batch())
                    .collect())
            }
            TaskData::Reg(c) => {
                let mut order: Vec<usize> = (0..c.train.len()).collect();
                rng.shuffle(&mut order);
                Ok(order
                    .chunks(batch)
                    .map(|ch| RegBatch::from_examples(ch.iter().map(|&i| &c.train[i])).to_seq_batch())
                    .collect())
            }
        }
    }

    /// Minibatches of a split in corpus order.
    pub fn eval_batches(&self, split: &str, seq_len: usize, batch: usize) -> Result<Vec<SeqBatch>> {
        match self {
            TaskData::Char(c) => {
                let ids = c.split(split)?;
                let starts = window_starts(ids.len(), seq_len)?;
                Ok(batches_from_starts(ids, &starts, seq_len, batch)?
                    .iter()
                    .map(|b| b.to_seq_batch())
                    .collect())
            }
            TaskData::Reg(c) => {
                let ex = c.split(split)?;
                if ex.is_empty() {
                    return Err(Error::Data(format!("split '{split}' is empty")));
                }
                Ok(ex.chunks(batch).map(|ch| RegBatch::from_examples(ch).to_seq_batch()).collect())
            }
        }
    }

    /// Mean-weight quality on a split: bits per character, or MSE.
    pub fn quality(&self, model: &Model, split: &str, seq_len: usize, batch: usize) -> Result<f64> {
        quality(model, &self.eval_batches(split, seq_len, batch)?)
    }
}

/// Bits per character (char-LM) or mean squared error (sentiment) of the
/// mean-weight model over `batches`.
pub fn quality(model: &Model, batches: &[SeqBatch]) -> Result<f64> {
    let (mut total, mut count) = (0.0, 0usize);
    for b in batches {
        let (s, n) = batch_error(&deterministic_forward(model, b)?, b)?;
        total += s;
        count += n;
    }
    if count == 0 {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    Ok(match model.task {
        Task::CharLm => total / count as f64 / std::f64::consts::LN_2,
        Task::Sentiment => total / count as f64,
    })
}

/// Summed NLL in nats (or squared error) and the number of predictions.
pub fn batch_error(pred: &Predictions, batch: &SeqBatch) -> Result<(f64, usize)> {
    match (pred, &batch.targets) {
        (Predictions::Logits(l), Targets::NextToken(next)) => {
            let b = batch.batch_size();
            let mut s = 0.0;
            for (t, row) in next.iter().enumerate() {
                for (j, &y) in row.iter().enumerate() {
                    let r = l.row(t * b + j);
                    s += crate::ndmath::log_sum_exp(r) - r[y];
                }
            }
            Ok((s, batch.target_count()))
        }
        (Predictions::Scores(p), Targets::Score { value, .. }) => {
            Ok((p.iter().zip(value).map(|(a, b)| (a - b).powi(2)).sum(), value.len()))
        }
        _ => Err(Error::Invalid("predictions do not match targets".into())),
    }
}
