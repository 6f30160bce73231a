//! Variational dense and LSTM layers, binary-dropout masks, and the two task
//! models built from them.

mod dense;
mod lstm;
mod model;
mod vbd;
mod weight;

use serde::{Deserialize, Serialize};

pub use dense::{variational_dense, variational_dense_var};
pub use lstm::{
    lstm_forward, lstm_forward_with_noise, lstm_step, Gate, LstmUnroller, LstmVarParams, LstmVars, NoisePack,
    SequenceBatch, StepInput, StepTrace, VbdRates,
};
pub use model::{
    deterministic_forward, BoundModel, HeadNoise, Model, ModelNoise, NoiseScope, Predictions, SeqBatch, Targets,
    Task,
};
pub use vbd::vbd_mask;
pub use weight::{
    local_reparam_matmul, local_reparam_var, sample_weight_matrix, sample_weight_var, VariationalWeight,
    VARIANCE_FLOOR,
};

/// How weights are perturbed during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    None,
    Vbd,
    SparseVd,
}

impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::None => "none",
            NoiseMode::Vbd => "vbd",
            NoiseMode::SparseVd => "sparse-vd",
        }
    }
}

impl std::str::FromStr for NoiseMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "none" => Ok(NoiseMode::None),
            "vbd" => Ok(NoiseMode::Vbd),
            "sparse-vd" | "sparsevd" => Ok(NoiseMode::SparseVd),
            _ => Err(crate::Error::Config(format!("unknown mode '{s}' (none | vbd | sparse-vd)"))),
        }
    }
}

impl std::fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
