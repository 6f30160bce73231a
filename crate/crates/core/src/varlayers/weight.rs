use crate::error::{Error, Result};
use crate::ndmath::{Graph, Tensor, Var};

/// Lower bound on the preactivation variance before taking its square root.
pub const VARIANCE_FLOOR: f64 = 1e-16;

/// Factorized Gaussian posterior `N(mean, exp(log_sigma2))` over one weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalWeight {
    pub mean: Tensor,
    pub log_sigma2: Tensor,
}

impl VariationalWeight {
    pub fn new(mean: Tensor, log_sigma2: Tensor) -> Result<Self> {
        mean.expect_same_shape(&log_sigma2)?;
        if let Some(i) = log_sigma2.first_non_finite() {
            return Err(Error::Invalid(format!("log sigma^2 entry {i} is not finite")));
        }
        Ok(Self { mean, log_sigma2 })
    }

    /// Posterior centred on `mean` with every `log σ²` set to `log_sigma2`.
    pub fn from_mean(mean: Tensor, log_sigma2: f64) -> Self {
        let log_sigma2 = Tensor::full(mean.shape(), log_sigma2);
        Self { mean, log_sigma2 }
    }

    pub fn shape(&self) -> &[usize] {
        self.mean.shape()
    }

    pub fn rows(&self) -> usize {
        self.mean.rows()
    }

    pub fn cols(&self) -> usize {
        self.mean.cols()
    }

    pub fn sigma2(&self) -> Tensor {
        self.log_sigma2.map(f64::exp)
    }
}

/// `M + exp(logS2 / 2) ⊙ eps` on the graph.
pub fn sample_weight_var(g: &mut Graph, mean: Var, log_sigma2: Var, eps: Var) -> Result<Var> {
    let half = g.scale(log_sigma2, 0.5);
    let sigma = g.exp(half);
    let noise = g.mul(sigma, eps)?;
    g.add(mean, noise)
}

/// Local reparameterization on the graph: `x·M + eps ⊙ sqrt(x²·σ²)`.
pub fn local_reparam_var(g: &mut Graph, x: Var, mean: Var, sigma2: Var, eps: Var) -> Result<Var> {
    let mu = g.matmul(x, mean)?;
    let x2 = g.square(x);
    let var = g.matmul(x2, sigma2)?;
    let std = g.safe_sqrt(var, VARIANCE_FLOOR);
    let noise = g.mul(eps, std)?;
    g.add(mu, noise)
}

/// Draw a weight matrix from the posterior given standard-normal `eps`.
pub fn sample_weight_matrix(vw: &VariationalWeight, eps: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let m = g.constant(vw.mean.clone());
    let l = g.constant(vw.log_sigma2.clone());
    let e = g.constant(eps.clone());
    let w = sample_weight_var(&mut g, m, l, e)?;
    Ok(g.value(w).clone())
}

/// Sample preactivations `x·W` with the noise moved from `W` onto the output.
///
/// `out_bj = Σ_k x_bk m_kj + eps_bj · sqrt(Σ_k x_bk² σ²_kj)`.
pub fn local_reparam_matmul(x: &Tensor, vw: &VariationalWeight, eps: &Tensor) -> Result<Tensor> {
    if x.cols() != vw.rows() || eps.shape() != [x.rows(), vw.cols()] {
        return Err(Error::Shape(format!(
            "local reparam: x {:?}, weight {:?}, eps {:?}",
            x.shape(),
            vw.shape(),
            eps.shape()
        )));
    }
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let m = g.constant(vw.mean.clone());
    let s2 = g.constant(vw.sigma2());
    let e = g.constant(eps.clone());
    let out = local_reparam_var(&mut g, xv, m, s2, e)?;
    Ok(g.value(out).clone())
}
