//! Sparse variational dropout for recurrent and dense layers.
//!
//! Each weight carries a Gaussian posterior `N(m, σ²)` trained against a
//! log-uniform prior. Weights whose noise-to-signal ratio `log α = log σ² - log m²`
//! exceeds a threshold are pruned to exact zeros, and the survivors can be
//! packed into CSR matrices for compressed inference.

pub mod cli;
pub mod datatext;
pub mod error;
pub mod ndmath;
pub mod sparsity;
pub mod trainer;
pub mod varlayers;

pub use error::{Error, Result};
