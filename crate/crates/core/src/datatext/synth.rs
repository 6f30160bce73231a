//! Deterministic synthetic corpora for desk-scale runs.

use crate::error::{Error, Result};
use crate::ndmath::Rng;

use super::chars::split_path;
use super::regression::RegItem;

pub const POSITIVE_KEYWORDS: usize = 5;
pub const NEGATIVE_KEYWORDS: usize = 5;
const MAX_KEYWORDS: usize = 3;
/// Standard deviation of the Gaussian noise added to each score.
pub const SCORE_NOISE: f64 = 0.1;

/// Keyword-planted regression items over tokens `w0..w{vocab-1}`.
///
/// `w0..w4` are positive and `w5..w9` negative keywords; every other token is
/// filler. Each item holds 0 to 3 keywords of each polarity at random
/// positions. Its score is `(pos - neg + 3) / 6` plus `N(0, SCORE_NOISE²)`
/// noise, clipped to `[0, 1]`, so even a perfect model keeps a nonzero MSE.
pub fn synth_regression(rng: &mut Rng, n: usize, vocab: usize, len: usize) -> Result<Vec<RegItem>> {
    let kw = POSITIVE_KEYWORDS + NEGATIVE_KEYWORDS;
    if vocab <= kw || len < 2 * MAX_KEYWORDS {
        return Err(Error::Invalid(format!("need vocab > {kw} and length >= {}", 2 * MAX_KEYWORDS)));
    }
    let mut items = Vec::with_capacity(n);
    for _ in 0..n {
        let pos = rng.below(MAX_KEYWORDS + 1);
        let neg = rng.below(MAX_KEYWORDS + 1);
        let mut ids: Vec<usize> = (0..len).map(|_| kw + rng.below(vocab - kw)).collect();
        let mut slots: Vec<usize> = (0..len).collect();
        rng.shuffle(&mut slots);
        for (k, &slot) in slots.iter().take(pos + neg).enumerate() {
            ids[slot] = if k < pos {
                rng.below(POSITIVE_KEYWORDS)
            } else {
                POSITIVE_KEYWORDS + rng.below(NEGATIVE_KEYWORDS)
            };
        }
        let clean = (pos as f64 - neg as f64 + 3.0) / 6.0;
        items.push(RegItem {
            tokens: ids.iter().map(|i| format!("w{i}")).collect(),
            target: (clean + SCORE_NOISE * rng.normal()).clamp(0.0, 1.0),
        });
    }
    Ok(items)
}

pub fn regression_tsv(items: &[RegItem]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&it.tokens.join(" "));
        s.push('\t');
        s.push_str(&it.target.to_string());
        s.push('\n');
    }
    s
}

/// Sizes of the bundled synthetic sentiment splits.
pub const REG_SPLITS: [usize; 3] = [2000, 500, 500];

/// Train, valid and test items from one seed.
pub fn synth_regression_splits(seed: u64, vocab: usize, len: usize) -> Result<[Vec<RegItem>; 3]> {
    let mut rng = Rng::new(seed);
    Ok([
        synth_regression(&mut rng, REG_SPLITS[0], vocab, len)?,
        synth_regression(&mut rng, REG_SPLITS[1], vocab, len)?,
        synth_regression(&mut rng, REG_SPLITS[2], vocab, len)?,
    ])
}

const DETERMINERS: &[&str] = &["the", "a", "this", "that", "every", "some", "no", "one", "her", "his", "our", "their"];
const ADJECTIVES: &[&str] = &[
    "small", "old", "new", "large", "quiet", "bright", "early", "late", "strong", "weak", "public", "private",
    "local", "foreign", "national", "simple", "major", "minor", "recent", "final", "common", "rare", "cold", "warm",
    "dark", "fresh", "heavy", "light", "long", "short", "open", "free", "real", "full", "clear", "basic",
];
const NOUNS: &[&str] = &[
    "market", "company", "price", "year", "share", "bank", "stock", "report", "group", "government", "state",
    "city", "house", "program", "plan", "deal", "week", "month", "rate", "trade", "board", "president", "officer",
    "investor", "director", "system", "country", "issue", "money", "business", "interest", "court", "policy",
    "child", "teacher", "school", "river", "garden", "letter", "window", "road", "train", "village", "doctor",
    "story", "night", "morning", "question", "answer", "paper", "table", "friend", "family", "water", "field",
];
const VERBS: &[&str] = &[
    "said", "sold", "bought", "made", "took", "reported", "expected", "raised", "cut", "held", "found", "called",
    "saw", "gave", "left", "kept", "built", "moved", "opened", "closed", "paid", "lost", "won", "told", "showed",
    "wanted", "needed", "helped", "asked", "watched", "followed", "signed", "changed", "planned", "offered",
];
const PREPOSITIONS: &[&str] = &["in", "on", "at", "for", "with", "from", "after", "before", "near", "about", "under", "over"];
const ADVERBS: &[&str] = &["also", "still", "again", "soon", "never", "often", "quickly", "later", "already", "nearly"];
const NUMBERS: &[&str] = &["two", "three", "four", "five", "ten", "twenty", "hundred", "million", "N"];

/// Zipf-weighted choice: earlier words are more frequent.
fn pick<'a>(rng: &mut Rng, words: &[&'a str]) -> &'a str {
    let total: f64 = (1..=words.len()).map(|i| 1.0 / i as f64).sum();
    let mut u = rng.uniform() * total;
    for (i, w) in words.iter().enumerate() {
        u -= 1.0 / (i + 1) as f64;
        if u <= 0.0 {
            return w;
        }
    }
    words[words.len() - 1]
}

fn noun_phrase(rng: &mut Rng, out: &mut Vec<String>) {
    if rng.uniform() < 0.15 {
        out.push(pick(rng, NUMBERS).into());
    } else {
        out.push(pick(rng, DETERMINERS).into());
    }
    if rng.uniform() < 0.4 {
        out.push(pick(rng, ADJECTIVES).into());
    }
    let mut n = pick(rng, NOUNS).to_string();
    if rng.uniform() < 0.25 {
        n.push('s');
    }
    out.push(n);
}

fn clause(rng: &mut Rng, out: &mut Vec<String>) {
    noun_phrase(rng, out);
    if rng.uniform() < 0.2 {
        out.push(pick(rng, ADVERBS).into());
    }
    out.push(pick(rng, VERBS).into());
    noun_phrase(rng, out);
    if rng.uniform() < 0.5 {
        out.push(pick(rng, PREPOSITIONS).into());
        noun_phrase(rng, out);
    }
}

/// English-like lowercase text from a small probabilistic grammar, roughly
/// `bytes` long. One sentence per line.
pub fn synth_char_text(rng: &mut Rng, bytes: usize) -> String {
    let mut text = String::with_capacity(bytes + 200);
    while text.len() < bytes {
        let mut words = Vec::new();
        clause(rng, &mut words);
        let r = rng.uniform();
        if r < 0.2 {
            words.push(",".into());
            words.push("and".into());
            clause(rng, &mut words);
        } else if r < 0.3 {
            words.push("because".into());
            clause(rng, &mut words);
        }
        let mut s = words.join(" ").replace(" ,", ",");
        s.push_str(" .\n");
        text.push_str(&s);
    }
    text
}

/// Train text of `train_bytes` plus valid and test texts a tenth that size.
pub fn synth_char_splits(seed: u64, train_bytes: usize) -> [String; 3] {
    let mut rng = Rng::new(seed);
    let small = (train_bytes / 10).max(1000);
    [
        synth_char_text(&mut rng, train_bytes),
        synth_char_text(&mut rng, small),
        synth_char_text(&mut rng, small),
    ]
}

/// Write `<prefix>.{train,valid,test}.<ext>`; returns the paths.
pub fn write_splits(prefix: &str, ext: &str, contents: &[String; 3]) -> Result<Vec<String>> {
    let mut paths = Vec::new();
    for (split, body) in ["train", "valid", "test"].iter().zip(contents) {
        let p = split_path(prefix, split, ext);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        paths.push(p);
    }
    Ok(paths)
}
