//! Spectrogram CNN and two-branch selective state-space classifiers.

mod cnn;
mod mamba;
pub mod scan;

use serde::{Deserialize, Serialize};

pub use cnn::{cnn_forward, CnnClassifier, CnnConfig, CnnShape};
pub use mamba::{
    mamba_block, mamba_forward, MambaClassifier, MambaConfig, MambaShape, SequencePair, SsmBlockParams, WheelInputs,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn,
    Mamba,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Mamba => "mamba",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(ModelKind::Cnn),
            "mamba" => Ok(ModelKind::Mamba),
            other => Err(crate::Error::Config(format!("unknown model `{other}` (expected cnn or mamba)"))),
        }
    }
}
