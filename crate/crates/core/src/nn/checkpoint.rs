use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::train::Model;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "terrain-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    fn from_pair((name, t): (String, Tensor)) -> Self {
        NamedTensor { name, shape: t.shape().to_vec(), data: t.into_data() }
    }

    fn to_pair(&self) -> Result<(String, Tensor)> {
        Ok((self.name.clone(), Tensor::new(&self.shape, self.data.clone())?))
    }
}

/// JSON container: architecture header, named parameter tensors, named
/// non-trainable buffers, free-form metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub architecture: serde_json::Value,
    pub parameters: Vec<NamedTensor>,
    pub buffers: Vec<NamedTensor>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn from_model<M: Model>(model: &M, metadata: serde_json::Value) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            architecture: model.architecture(),
            parameters: model.params().named_tensors().into_iter().map(NamedTensor::from_pair).collect(),
            buffers: model.buffers().into_iter().map(NamedTensor::from_pair).collect(),
            metadata,
        }
    }

    /// Loads the stored tensors into a model built from the same architecture.
    pub fn restore_into<M: Model>(&self, model: &mut M) -> Result<()> {
        if model.architecture() != self.architecture {
            return Err(Error::Shape(format!(
                "checkpoint architecture {} does not match model {}",
                self.architecture,
                model.architecture()
            )));
        }
        let params: Vec<_> = self.parameters.iter().map(NamedTensor::to_pair).collect::<Result<_>>()?;
        let buffers: Vec<_> = self.buffers.iter().map(NamedTensor::to_pair).collect::<Result<_>>()?;
        model.params_mut().load_named(&params)?;
        model.load_buffers(&buffers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("{}: unsupported checkpoint format `{}`", path.display(), ck.format)));
        }
        Ok(ck)
    }
}
