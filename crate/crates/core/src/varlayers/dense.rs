use crate::error::{Error, Result};
use crate::ndmath::{Graph, Tensor, Var};

use super::weight::{local_reparam_var, VariationalWeight};

/// `x·W + b` with `W` drawn through the local reparameterization. The task
/// head applies its own nonlinearity (identity or softmax) afterwards.
pub fn variational_dense(x: &Tensor, vw: &VariationalWeight, bias: &Tensor, eps: &Tensor) -> Result<Tensor> {
    if x.cols() != vw.rows() || bias.len() != vw.cols() || eps.shape() != [x.rows(), vw.cols()] {
        return Err(Error::Shape(format!(
            "dense: x {:?}, weight {:?}, bias {:?}, eps {:?}",
            x.shape(),
            vw.shape(),
            bias.shape(),
            eps.shape()
        )));
    }
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let m = g.constant(vw.mean.clone());
    let s2 = g.constant(vw.sigma2());
    let b = g.constant(bias.clone());
    let e = g.constant(eps.clone());
    let out = variational_dense_var(&mut g, xv, m, s2, b, e)?;
    Ok(g.value(out).clone())
}

pub fn variational_dense_var(g: &mut Graph, x: Var, mean: Var, sigma2: Var, bias: Var, eps: Var) -> Result<Var> {
    let pre = local_reparam_var(g, x, mean, sigma2, eps)?;
    g.add_row(pre, bias)
}
