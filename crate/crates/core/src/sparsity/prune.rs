use crate::error::{Error, Result};
use crate::ndmath::Tensor;
use crate::varlayers::VariationalWeight;

use super::kl::log_alpha;

pub const DEFAULT_THRESHOLD: f64 = 3.0;

/// Keep/drop pattern for one matrix: entries with `log α` above the threshold are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct PruneMask {
    shape: Vec<usize>,
    keep: Vec<bool>,
    threshold: f64,
    nnz: usize,
}

impl PruneMask {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    pub fn total(&self) -> usize {
        self.keep.len()
    }

    /// Percentage of dropped entries.
    pub fn sparsity(&self) -> f64 {
        100.0 * (1.0 - self.nnz as f64 / self.total() as f64)
    }
}

pub fn prune_mask(vw: &VariationalWeight, threshold: f64) -> Result<PruneMask> {
    if !threshold.is_finite() {
        return Err(Error::Invalid(format!("prune threshold must be finite, got {threshold}")));
    }
    let keep: Vec<bool> = vw
        .mean
        .data()
        .iter()
        .zip(vw.log_sigma2.data())
        .map(|(&m, &l)| log_alpha(m, l) <= threshold)
        .collect();
    let nnz = keep.iter().filter(|&&k| k).count();
    Ok(PruneMask {
        shape: vw.shape().to_vec(),
        keep,
        threshold,
        nnz,
    })
}

/// Drop every weight whose `log α` exceeds `threshold`; survivors keep their means.
pub fn prune(vw: &VariationalWeight, threshold: f64) -> Result<(PruneMask, Tensor)> {
    let mask = prune_mask(vw, threshold)?;
    let data = vw
        .mean
        .data()
        .iter()
        .zip(&mask.keep)
        .map(|(&m, &k)| if k { m } else { 0.0 })
        .collect();
    Ok((mask, Tensor::new(vw.shape().to_vec(), data)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vw_from_log_alpha(la: &[f64]) -> VariationalWeight {
        // m = 1 so log α = log σ²
        VariationalWeight::new(
            Tensor::full(&[1, la.len()], 1.0),
            Tensor::new(vec![1, la.len()], la.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn threshold_three() {
        let (mask, z) = prune(&vw_from_log_alpha(&[3.1, 2.9, 3.0]), 3.0).unwrap();
        assert_eq!(mask.keep(), &[false, true, true]);
        assert_eq!(z.data(), &[0.0, 1.0, 1.0]);
        assert_eq!(mask.nnz(), 2);
    }

    #[test]
    fn everything_at_clamp_is_dropped() {
        let vw = VariationalWeight::from_mean(Tensor::zeros(&[3, 3]), 0.0);
        let (mask, z) = prune(&vw, 3.0).unwrap();
        assert_eq!(mask.nnz(), 0);
        assert_eq!(z, Tensor::zeros(&[3, 3]));
        assert_eq!(mask.sparsity(), 100.0);
    }

    #[test]
    fn non_finite_threshold_rejected() {
        assert!(prune(&vw_from_log_alpha(&[0.0]), f64::NAN).is_err());
        assert!(prune(&vw_from_log_alpha(&[0.0]), f64::INFINITY).is_err());
    }
}
