//! Dense tensors, reverse-mode differentiation and seeded sampling.

mod graph;
mod init;
pub mod kernels;
mod rng;
mod tensor;

pub use graph::{CustomOp, Gradients, Graph, Var};
pub use graph::log_sum_exp;
pub use init::orthogonal_init;
pub use rng::{sample_standard_normal, Rng};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Plain (unrecorded) matrix product.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.rows() {
        return Err(Error::Shape(format!(
            "matmul {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    kernels::gemm_acc(a.data(), b.data(), &mut out, m, k, n);
    Ok(Tensor::from_parts(vec![m, n], out))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod gradcheck;
