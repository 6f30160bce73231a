use crate::error::Result;
use crate::ndmath::{sigmoid, CustomOp, Tensor};
use crate::varlayers::VariationalWeight;

/// `log α` is kept inside `[-LOG_ALPHA_CLAMP, LOG_ALPHA_CLAMP]`.
pub const LOG_ALPHA_CLAMP: f64 = 20.0;

const K1: f64 = 0.64;
const K2: f64 = 1.87;
const K3: f64 = 1.49;

/// Approximate KL divergence from the Gaussian posterior to the log-uniform
/// prior for one weight, as a function of its `log α`. Nonnegative, decreasing,
/// and zero in the `α → ∞` limit.
pub fn kl_per_weight(log_alpha: f64) -> f64 {
    0.5 * (-log_alpha).exp().ln_1p() - K1 * sigmoid(K2 + K3 * log_alpha) + K1
}

/// `d kl_per_weight / d log α`.
pub fn kl_derivative(log_alpha: f64) -> f64 {
    let s = sigmoid(K2 + K3 * log_alpha);
    -0.5 * sigmoid(-log_alpha) - K1 * K3 * s * (1.0 - s)
}

/// `log σ² − log m²`, clamped. A zero mean maps to the upper clamp.
pub fn log_alpha(mean: f64, log_sigma2: f64) -> f64 {
    if mean == 0.0 {
        return LOG_ALPHA_CLAMP;
    }
    (log_sigma2 - (mean * mean).ln()).clamp(-LOG_ALPHA_CLAMP, LOG_ALPHA_CLAMP)
}

/// Elementwise `log α` of one weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LogAlphaMatrix {
    pub values: Tensor,
}

pub fn compute_log_alpha(vw: &VariationalWeight) -> LogAlphaMatrix {
    let data = vw
        .mean
        .data()
        .iter()
        .zip(vw.log_sigma2.data())
        .map(|(&m, &l)| log_alpha(m, l))
        .collect();
    LogAlphaMatrix {
        values: Tensor::new(vw.shape().to_vec(), data).expect("same shape as the weight"),
    }
}

/// Sum of [`kl_per_weight`] over every entry of every matrix.
pub fn kl_total<'a>(weights: impl IntoIterator<Item = &'a VariationalWeight>) -> f64 {
    weights
        .into_iter()
        .flat_map(|vw| vw.mean.data().iter().zip(vw.log_sigma2.data()))
        .map(|(&m, &l)| kl_per_weight(log_alpha(m, l)))
        .sum()
}

/// Graph op: inputs `(mean, log σ²)`, output the scalar KL sum. Where the
/// clamp is active the gradient is zero.
pub struct KlOp;

impl CustomOp for KlOp {
    fn name(&self) -> &'static str {
        "kl"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        inputs[0].expect_same_shape(inputs[1])?;
        let vw = VariationalWeight {
            mean: inputs[0].clone(),
            log_sigma2: inputs[1].clone(),
        };
        Ok(Tensor::scalar(kl_total([&vw])))
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let g = grad.data()[0];
        let (mean, logs2) = (inputs[0], inputs[1]);
        let mut dm = vec![0.0; mean.len()];
        let mut dl = vec![0.0; mean.len()];
        for (i, (&m, &l)) in mean.data().iter().zip(logs2.data()).enumerate() {
            if m == 0.0 {
                continue;
            }
            let raw = l - (m * m).ln();
            if raw.abs() >= LOG_ALPHA_CLAMP {
                continue;
            }
            let d = g * kl_derivative(raw);
            dl[i] = d;
            dm[i] = -2.0 * d / m;
        }
        vec![
            Tensor::new(mean.shape().to_vec(), dm).expect("shape"),
            Tensor::new(mean.shape().to_vec(), dl).expect("shape"),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::Graph;

    #[test]
    fn limits_and_reference_values() {
        assert!(kl_per_weight(20.0) <= 1e-6);
        let want = 0.5 * 2f64.ln() - 0.64 / (1.0 + (-1.87f64).exp()) + 0.64;
        assert!((kl_per_weight(0.0) - want).abs() < 1e-15);
        assert!((kl_per_weight(0.0) - 0.4320).abs() < 1e-4);
        assert!(kl_per_weight(-4.0) > kl_per_weight(0.0) && kl_per_weight(0.0) > kl_per_weight(4.0));
    }

    #[test]
    fn nonincreasing_on_grid() {
        let grid: Vec<f64> = (0..1000).map(|i| -8.0 + 16.0 * i as f64 / 999.0).collect();
        for w in grid.windows(2) {
            assert!(kl_per_weight(w[1]) <= kl_per_weight(w[0]));
            assert!(kl_per_weight(w[1]) >= 0.0);
        }
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        for la in [-6.0, -1.0, 0.0, 0.7, 3.0, 9.0] {
            let h = 1e-6;
            let fd = (kl_per_weight(la + h) - kl_per_weight(la - h)) / (2.0 * h);
            assert!((fd - kl_derivative(la)).abs() < 1e-8, "{la}");
        }
    }

    #[test]
    fn log_alpha_cases() {
        assert_eq!(log_alpha(1.0, 0.0), 0.0);
        assert_eq!(log_alpha(0.0, -6.0), 20.0);
        assert!((log_alpha(0.5, -6.0) - (-6.0 - 2.0 * 0.5f64.ln())).abs() < 1e-15);
        assert!((log_alpha(0.5, -6.0) + 4.6137).abs() < 1e-4);
        assert_eq!(log_alpha(1e-30, 0.0), 20.0);
        assert_eq!(log_alpha(1e10, -40.0), -20.0);
        let vw = VariationalWeight::new(
            Tensor::from_rows(&[&[1.0, 0.0]]).unwrap(),
            Tensor::from_rows(&[&[0.0, 3.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(compute_log_alpha(&vw).values.data(), &[0.0, 20.0]);
    }

    #[test]
    fn totals() {
        let one = VariationalWeight::new(Tensor::scalar(0.3), Tensor::scalar(-2.0)).unwrap();
        assert_eq!(kl_total([&one]), kl_per_weight(log_alpha(0.3, -2.0)));

        let mean = Tensor::from_rows(&[&[1.0, -0.5], &[2.0, 0.1]]).unwrap();
        let logs2 = Tensor::from_rows(&[&[0.0, -1.0], &[1.0, -3.0]]).unwrap();
        let vw = VariationalWeight::new(mean, logs2).unwrap();
        let la = [0.0, -1.0 - 0.25f64.ln(), 1.0 - 4f64.ln(), -3.0 - 0.01f64.ln()];
        let want: f64 = la.iter().map(|&a| kl_per_weight(a)).sum();
        assert!((kl_total([&vw]) - want).abs() < 1e-14);

        let pruned = VariationalWeight::from_mean(Tensor::zeros(&[10, 10]), -6.0);
        assert!(kl_total([&pruned]) <= 1e-6 * 100.0);
    }

    #[test]
    fn op_gradient_matches_closed_form() {
        let mean = Tensor::from_rows(&[&[0.8, -0.3, 0.0], &[1e-12, 2.0, -1.1]]).unwrap();
        let logs2 = Tensor::from_rows(&[&[-2.0, -6.0, 0.0], &[0.0, -1.0, 0.4]]).unwrap();
        let mut g = Graph::new();
        let m = g.param(mean.clone());
        let l = g.param(logs2.clone());
        let kl = g.custom(Box::new(KlOp), &[m, l]).unwrap();
        let grads = g.backward(kl).unwrap();
        let (gm, gl) = (grads.get(m).unwrap(), grads.get(l).unwrap());
        for i in 0..6 {
            let (mv, lv) = (mean.data()[i], logs2.data()[i]);
            let h = 1e-6;
            let f = |m: f64, l: f64| kl_per_weight(log_alpha(m, l));
            let fd_l = (f(mv, lv + h) - f(mv, lv - h)) / (2.0 * h);
            assert!((gl.data()[i] - fd_l).abs() < 1e-7, "logs2 {i}");
            if mv != 0.0 && mv.abs() > 1e-6 {
                let fd_m = (f(mv + h, lv) - f(mv - h, lv)) / (2.0 * h);
                assert!((gm.data()[i] - fd_m).abs() < 1e-6, "mean {i}");
            }
        }
        // zero mean and clamped entries carry no gradient
        assert_eq!(gm.data()[2], 0.0);
        assert_eq!(gl.data()[3], 0.0);
    }
}
