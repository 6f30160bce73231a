use std::path::Path;

use crate::error::{Error, Result};
use crate::varlayers::{SeqBatch, Targets};

use super::vocab::{build_vocab, decode_chars, encode_chars, Vocab};

/// A batch of windows, batch-major: `inputs[b][t]`, `targets[b][t] = inputs[b][t+1]`
/// within the underlying stream.
#[derive(Clone, Debug, PartialEq)]
pub struct CharBatch {
    pub inputs: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
}

impl CharBatch {
    pub fn to_seq_batch(&self) -> SeqBatch {
        let t = self.inputs[0].len();
        let tm = |m: &[Vec<usize>]| (0..t).map(|s| m.iter().map(|row| row[s]).collect()).collect();
        SeqBatch {
            tokens: tm(&self.inputs),
            targets: Targets::NextToken(tm(&self.targets)),
        }
    }
}

/// Start offsets of the non-overlapping windows of length `t` that have a
/// following target symbol.
pub fn window_starts(len: usize, t: usize) -> Result<Vec<usize>> {
    if t == 0 {
        return Err(Error::Invalid("window length must be positive".into()));
    }
    if len < t + 1 {
        return Err(Error::Data(format!("corpus of {len} symbols is shorter than one window of {}", t + 1)));
    }
    Ok((0..(len - 1) / t).map(|k| k * t).collect())
}

/// Group the windows starting at `starts` into batches of up to `batch`.
pub fn batches_from_starts(ids: &[usize], starts: &[usize], t: usize, batch: usize) -> Result<Vec<CharBatch>> {
    if batch == 0 {
        return Err(Error::Invalid("batch size must be positive".into()));
    }
    Ok(starts
        .chunks(batch)
        .map(|chunk| CharBatch {
            inputs: chunk.iter().map(|&s| ids[s..s + t].to_vec()).collect(),
            targets: chunk.iter().map(|&s| ids[s + 1..s + t + 1].to_vec()).collect(),
        })
        .collect())
}

/// Consecutive disjoint windows in corpus order; the trailing remainder is
/// dropped and the last batch may be smaller.
pub fn char_windows(ids: &[usize], t: usize, batch: usize) -> Result<Vec<CharBatch>> {
    batches_from_starts(ids, &window_starts(ids.len(), t)?, t, batch)
}

/// Text of one window, for round-trip checks.
pub fn detokenize(vocab: &Vocab, window: &[usize]) -> String {
    decode_chars(vocab, window)
}

/// Train/valid/test character streams sharing the training vocabulary.
#[derive(Clone, Debug)]
pub struct CharCorpus {
    pub vocab: Vocab,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl CharCorpus {
    pub fn from_texts(train: &str, valid: &str, test: &str) -> Result<Self> {
        let vocab = build_vocab(train)?;
        Ok(Self {
            train: encode_chars(&vocab, train),
            valid: encode_chars(&vocab, valid),
            test: encode_chars(&vocab, test),
            vocab,
        })
    }

    /// Reads `<prefix>.train.txt`, `<prefix>.valid.txt`, `<prefix>.test.txt`.
    pub fn load(prefix: &str) -> Result<Self> {
        let [train, valid, test] = ["train", "valid", "test"].map(|s| read_split(prefix, s, "txt"));
        Self::from_texts(&train?, &valid?, &test?)
    }

    pub fn split(&self, name: &str) -> Result<&[usize]> {
        match name {
            "train" => Ok(&self.train),
            "valid" => Ok(&self.valid),
            "test" => Ok(&self.test),
            _ => Err(Error::Data(format!("unknown split '{name}'"))),
        }
    }
}

pub(crate) fn split_path(prefix: &str, split: &str, ext: &str) -> String {
    format!("{prefix}.{split}.{ext}")
}

pub(crate) fn read_split(prefix: &str, split: &str, ext: &str) -> Result<String> {
    let p = split_path(prefix, split, ext);
    std::fs::read_to_string(Path::new(&p)).map_err(|e| Error::Data(format!("cannot read {p}: {e}")))
}
