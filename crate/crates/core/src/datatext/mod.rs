//! Corpora and batching for character-level language modeling and
//! sequence-to-scalar regression.

mod chars;
mod regression;
mod synth;
mod vocab;

pub use chars::{batches_from_starts, char_windows, detokenize, window_starts, CharBatch, CharCorpus};
pub use regression::{
    index_items, load_regression_tsv, parse_regression_tsv, RegBatch, RegCorpus, RegExample, RegItem, Rejections,
};
pub use synth::{
    regression_tsv, synth_char_splits, synth_char_text, synth_regression, synth_regression_splits, write_splits,
    REG_SPLITS,
};
pub use vocab::{build_vocab, decode_chars, encode_chars, Vocab};
