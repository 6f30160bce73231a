use std::path::Path;

use crate::error::{Error, Result};
use crate::varlayers::{SeqBatch, Targets};

use super::chars::read_split;
use super::vocab::Vocab;

#[derive(Clone, Debug, PartialEq)]
pub struct RegItem {
    pub tokens: Vec<String>,
    pub target: f64,
}

/// Lines that failed to parse, with 1-based line numbers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rejections {
    pub lines: Vec<(usize, String)>,
}

impl Rejections {
    pub fn count(&self) -> usize {
        self.lines.len()
    }
}

/// Parse `text TAB score` lines. Bad lines are skipped and counted.
pub fn parse_regression_tsv(content: &str) -> (Vec<RegItem>, Rejections) {
    let mut items = Vec::new();
    let mut rej = Rejections::default();
    for (no, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let reason = match line.rsplit_once('\t') {
            None => Some("missing tab".to_string()),
            Some((text, score)) => match score.trim().parse::<f64>() {
                Err(_) => Some(format!("unparsable score '{}'", score.trim())),
                Ok(s) if !(0.0..=1.0).contains(&s) => Some(format!("score {s} outside [0, 1]")),
                Ok(s) => {
                    let tokens: Vec<String> = text.split_whitespace().map(String::from).collect();
                    if tokens.is_empty() {
                        Some("no tokens".to_string())
                    } else {
                        items.push(RegItem { tokens, target: s });
                        None
                    }
                }
            },
        };
        if let Some(r) = reason {
            rej.lines.push((no + 1, r));
        }
    }
    (items, rej)
}

pub fn load_regression_tsv(path: impl AsRef<Path>) -> Result<(Vec<RegItem>, Rejections)> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_regression_tsv(&content))
}

/// Token ids padded or truncated to `len`, with the last real position.
#[derive(Clone, Debug, PartialEq)]
pub struct RegExample {
    pub ids: Vec<usize>,
    pub last: usize,
    pub target: f64,
}

pub fn index_items(vocab: &Vocab, items: &[RegItem], len: usize) -> Vec<RegExample> {
    items
        .iter()
        .map(|it| {
            let mut ids: Vec<usize> = it.tokens.iter().take(len).map(|t| vocab.encode(t)).collect();
            let last = ids.len() - 1;
            ids.resize(len, vocab.pad());
            RegExample {
                ids,
                last,
                target: it.target,
            }
        })
        .collect()
}

/// Batch-major regression batch.
#[derive(Clone, Debug, PartialEq)]
pub struct RegBatch {
    pub inputs: Vec<Vec<usize>>,
    pub last: Vec<usize>,
    pub targets: Vec<f64>,
}

impl RegBatch {
    pub fn from_examples<'a>(ex: impl IntoIterator<Item = &'a RegExample>) -> Self {
        let mut b = RegBatch {
            inputs: Vec::new(),
            last: Vec::new(),
            targets: Vec::new(),
        };
        for e in ex {
            b.inputs.push(e.ids.clone());
            b.last.push(e.last);
            b.targets.push(e.target);
        }
        b
    }

    pub fn to_seq_batch(&self) -> SeqBatch {
        let t = self.inputs[0].len();
        SeqBatch {
            tokens: (0..t).map(|s| self.inputs.iter().map(|r| r[s]).collect()).collect(),
            targets: Targets::Score {
                last: self.last.clone(),
                value: self.targets.clone(),
            },
        }
    }
}

/// Train/valid/test regression splits with a training-split word vocabulary.
#[derive(Clone, Debug)]
pub struct RegCorpus {
    pub vocab: Vocab,
    pub train: Vec<RegExample>,
    pub valid: Vec<RegExample>,
    pub test: Vec<RegExample>,
    pub rejected: usize,
}

impl RegCorpus {
    pub fn from_items(train: &[RegItem], valid: &[RegItem], test: &[RegItem], len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Invalid("sequence length must be positive".into()));
        }
        let vocab = Vocab::from_symbols(train.iter().flat_map(|i| i.tokens.iter().map(String::as_str)))?;
        Ok(Self {
            train: index_items(&vocab, train, len),
            valid: index_items(&vocab, valid, len),
            test: index_items(&vocab, test, len),
            vocab,
            rejected: 0,
        })
    }

    /// Reads `<prefix>.train.tsv`, `<prefix>.valid.tsv`, `<prefix>.test.tsv`.
    pub fn load(prefix: &str, len: usize) -> Result<Self> {
        let mut parts = Vec::new();
        let mut rejected = 0;
        for s in ["train", "valid", "test"] {
            let (items, rej) = parse_regression_tsv(&read_split(prefix, s, "tsv")?);
            if items.is_empty() {
                return Err(Error::Data(format!("{prefix}.{s}.tsv has no usable lines")));
            }
            rejected += rej.count();
            parts.push(items);
        }
        let mut c = Self::from_items(&parts[0], &parts[1], &parts[2], len)?;
        c.rejected = rejected;
        Ok(c)
    }

    pub fn split(&self, name: &str) -> Result<&[RegExample]> {
        match name {
            "train" => Ok(&self.train),
            "valid" => Ok(&self.valid),
            "test" => Ok(&self.test),
            _ => Err(Error::Data(format!("unknown split '{name}'"))),
        }
    }
}
