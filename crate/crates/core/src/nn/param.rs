use serde::{Deserialize, Serialize};

use super::graph::{Gradients, Graph};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

/// A named trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    value: Tensor,
    grad: Tensor,
}

impl Parameter {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn grad(&self) -> &Tensor {
        &self.grad
    }
}

/// Ordered collection of parameters with unique names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a duplicate name; names are fixed by model constructors.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name `{name}`");
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter { name, value, grad });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Adds the graph's parameter adjoints into the stored gradients.
    /// Returns the names of parameters the loss did not reach; their
    /// gradient contribution is zero.
    pub fn accumulate(&mut self, graph: &Graph, grads: &Gradients) -> Vec<String> {
        let mut reached = vec![false; self.params.len()];
        for (var, id) in graph.params() {
            if let Some(g) = grads.get(var) {
                self.params[id.0].grad.add_assign(g.data());
                reached[id.0] = true;
            }
        }
        self.params
            .iter()
            .zip(reached)
            .filter(|(_, r)| !r)
            .map(|(p, _)| p.name.clone())
            .collect()
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        self.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect()
    }

    /// Replaces every value from `(name, tensor)` pairs. Names and shapes
    /// must match the store exactly.
    pub fn load_named(&mut self, tensors: &[(String, Tensor)]) -> Result<()> {
        if tensors.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "{} tensors for {} parameters",
                tensors.len(),
                self.params.len()
            )));
        }
        for (name, t) in tensors {
            let id = self
                .find(name)
                .ok_or_else(|| Error::Shape(format!("unknown parameter `{name}`")))?;
            let p = &mut self.params[id.0];
            if p.value.shape() != t.shape() {
                return Err(Error::Shape(format!(
                    "parameter `{name}`: stored {:?}, model {:?}",
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.clone();
        }
        Ok(())
    }
}
