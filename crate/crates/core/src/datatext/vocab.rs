use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symbols in first-appearance order. Index `len()` is reserved for unknown
/// symbols; [`Vocab::padded_size`] adds one more slot for padding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(symbols: Vec<String>) -> Self {
        let index = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self { symbols, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.symbols
    }
}

impl Vocab {
    pub fn from_symbols<'a>(symbols: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut out = Vec::new();
        let mut index = HashMap::new();
        for s in symbols {
            if !index.contains_key(s) {
                index.insert(s.to_string(), out.len());
                out.push(s.to_string());
            }
        }
        if out.is_empty() {
            return Err(Error::Data("cannot build a vocabulary from empty input".into()));
        }
        Ok(Self { symbols: out, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn unk(&self) -> usize {
        self.symbols.len()
    }

    /// Known symbols plus the unknown slot.
    pub fn size_with_unk(&self) -> usize {
        self.symbols.len() + 1
    }

    /// Padding index for fixed-length regression inputs.
    pub fn pad(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn padded_size(&self) -> usize {
        self.symbols.len() + 2
    }

    pub fn encode(&self, s: &str) -> usize {
        self.index.get(s).copied().unwrap_or(self.unk())
    }

    pub fn symbol(&self, i: usize) -> Option<&str> {
        self.symbols.get(i).map(String::as_str)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

/// Character vocabulary of a training split.
pub fn build_vocab(text: &str) -> Result<Vocab> {
    let mut buf = [0u8; 4];
    let chars: Vec<String> = text.chars().map(|c| c.encode_utf8(&mut buf).to_string()).collect();
    Vocab::from_symbols(chars.iter().map(String::as_str))
}

pub fn encode_chars(vocab: &Vocab, text: &str) -> Vec<usize> {
    let mut buf = [0u8; 4];
    text.chars().map(|c| vocab.encode(c.encode_utf8(&mut buf))).collect()
}

pub fn decode_chars(vocab: &Vocab, ids: &[usize]) -> String {
    ids.iter().map(|&i| vocab.symbol(i).unwrap_or("\u{fffd}")).collect()
}
