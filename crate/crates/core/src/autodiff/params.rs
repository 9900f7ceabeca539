use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable parameters in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn total_size(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Overwrites values from another store with identical names and shapes.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            let j = other
                .find(name)
                .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))?;
            let src = other.get(j);
            if src.shape() != self.values[i].shape() {
                return Err(Error::dim(
                    "load_params",
                    format!("`{name}`: {:?} vs {:?}", src.shape(), self.values[i].shape()),
                ));
            }
            self.values[i] = src.clone();
        }
        Ok(())
    }
}

/// Gradients keyed by parameter; parameters never touched by a loss read as zeros.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub(crate) fn with_capacity(n: usize) -> Self {
        Self {
            grads: vec![None; n],
        }
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, shape: &[usize], g: &[f64]) {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
        }
        match &mut self.grads[id.0] {
            Some(t) => {
                for (a, b) in t.data_mut().iter_mut().zip(g) {
                    *a += b;
                }
            }
            slot @ None => {
                *slot = Some(Tensor::new(shape.to_vec(), g.to_vec()).expect("grad shape"));
            }
        }
    }

    /// Gradient for `id`, or zeros of the parameter's shape when unused.
    pub fn get(&self, id: ParamId, store: &ParamStore) -> Tensor {
        self.grads
            .get(id.0)
            .and_then(Option::as_ref)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.get(id).shape()))
    }

    pub fn get_raw(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Element-wise sum, used to reduce gradients across tapes.
    pub fn add_assign(&mut self, other: &Gradients) {
        if self.grads.len() < other.grads.len() {
            self.grads.resize(other.grads.len(), None);
        }
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g.shape(), g.data());
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.iter_mut().flatten() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }
}
