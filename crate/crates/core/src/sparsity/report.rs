use std::fmt;

use crate::error::{Error, Result};

use super::prune::PruneMask;

/// Percent of zero weights per matrix group: input-to-hidden (`x`),
/// hidden-to-hidden (`h`) and, when present, the output layer (`y`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparsityReport {
    pub x: f64,
    pub h: f64,
    pub y: Option<f64>,
}

impl fmt::Display for SparsityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} \u{2013} {:.2}", self.x, self.h)?;
        if let Some(y) = self.y {
            write!(f, " \u{2013} {y:.2}")?;
        }
        Ok(())
    }
}

/// `100 × (1 − nnz/total)` over a group of masks.
pub fn percent_zero<'a>(masks: impl IntoIterator<Item = &'a PruneMask>) -> Option<f64> {
    let (mut nnz, mut total) = (0usize, 0usize);
    for m in masks {
        nnz += m.nnz();
        total += m.total();
    }
    (total > 0).then(|| 100.0 * (1.0 - nnz as f64 / total as f64))
}

/// Aggregate named masks: names starting with `lstm.wx` count toward `x`,
/// `lstm.wh` toward `h`, and `head` toward `y`.
pub fn sparsity_report(masks: &[(String, PruneMask)]) -> Result<SparsityReport> {
    if masks.is_empty() {
        return Err(Error::Invalid("no masks to report".into()));
    }
    let group = |prefix: &str| percent_zero(masks.iter().filter(|(n, _)| n.starts_with(prefix)).map(|(_, m)| m));
    let (Some(x), Some(h)) = (group("lstm.wx"), group("lstm.wh")) else {
        return Err(Error::Invalid("report needs both input-to-hidden and hidden-to-hidden masks".into()));
    };
    Ok(SparsityReport { x, h, y: group("head") })
}

/// Round to the two decimals shown in reports.
pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}
