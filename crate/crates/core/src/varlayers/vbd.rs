use crate::error::{Error, Result};
use crate::ndmath::{Rng, Tensor};

/// Binary dropout mask with inverted scaling: each entry is 0 with probability
/// `p`, otherwise `1 / (1 - p)`, so `E[mask ⊙ v] = v`.
pub fn vbd_mask(rng: &mut Rng, p: f64, shape: &[usize]) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Invalid(format!("dropout rate must be in [0, 1), got {p}")));
    }
    if shape.is_empty() {
        return Err(Error::Invalid("mask shape must be nonempty".into()));
    }
    let n: usize = shape.iter().product();
    if p == 0.0 {
        return Ok(Tensor::full(shape, 1.0));
    }
    let keep = 1.0 / (1.0 - p);
    let data = (0..n)
        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_all_ones() {
        let m = vbd_mask(&mut Rng::new(0), 0.0, &[3, 4]).unwrap();
        assert!(m.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rate_one_rejected() {
        assert!(vbd_mask(&mut Rng::new(0), 1.0, &[2]).is_err());
        assert!(vbd_mask(&mut Rng::new(0), -0.1, &[2]).is_err());
    }

    #[test]
    fn drop_frequency_over_a_million_entries() {
        let m = vbd_mask(&mut Rng::new(77), 0.3, &[1000, 1000]).unwrap();
        let zeros = m.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        assert!((zeros - 0.3).abs() <= 0.002, "{zeros}");
        let kept = 1.0 / 0.7;
        assert!(m.data().iter().all(|&v| v == 0.0 || v == kept));
    }

    #[test]
    fn mask_is_unbiased() {
        let m = vbd_mask(&mut Rng::new(78), 0.25, &[1_000_000]).unwrap();
        let mean = m.sum() / 1e6;
        assert!((mean - 1.0).abs() < 0.005, "{mean}");
    }
}
