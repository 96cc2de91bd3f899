use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor, Var};

/// Named parameter tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn push(&mut self, name: String, value: Tensor) -> usize {
        self.names.push(name);
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    /// Total number of scalars whose name starts with `prefix`.
    pub fn count_with_prefix(&self, prefix: &str) -> usize {
        self.iter().filter(|(n, _)| n.starts_with(prefix)).map(|(_, t)| t.len()).sum()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Replaces all values with those of `other`, which must carry the same
    /// names and shapes.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Data("parameter names differ".into()));
        }
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            if dst.shape() != src.shape() {
                return Err(Error::Data("parameter shapes differ".into()));
            }
            dst.clone_from(src);
        }
        Ok(())
    }

    /// Records every parameter on `tape`, trainable when `track_grads`.
    pub fn register(&self, tape: &mut Tape, track_grads: bool) -> Result<Vec<Var>> {
        self.tensors.iter().map(|t| tape.leaf(t.clone(), track_grads)).collect()
    }
}

/// Glorot-uniform matrix of the given shape.
pub(crate) fn glorot(rng: &mut Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    Tensor::from_fn(shape, |_| rng.uniform_range(-limit, limit))
}
