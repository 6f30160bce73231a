//! KL regularizer, `log α` pruning, sparsity statistics, CSR storage and
//! compressed inference.

mod compressed;
mod container;
mod csr;
mod kl;
mod prune;
mod report;

pub use compressed::{model_masks, model_sparsity, prune_model, sparse_scope, CompressedModel};
pub use container::{Container, StoredTensor, FORMAT_VERSION, MAGIC};
pub use csr::{csr_matvec, to_csr, CsrMatrix};
pub use kl::{
    compute_log_alpha, kl_derivative, kl_per_weight, kl_total, log_alpha, KlOp, LogAlphaMatrix, LOG_ALPHA_CLAMP,
};
pub use prune::{prune, prune_mask, PruneMask, DEFAULT_THRESHOLD};
pub use report::{percent_zero, round2, sparsity_report, SparsityReport};
