//! Named parameter storage and gradient sets.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn trainable(&self) -> bool {
        self.value.requires_grad()
    }
}

/// Ordered parameter set. Insertion order is the canonical order used by
/// gradients, optimizers and checkpoints.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, ParamId>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        let id = ParamId(self.params.len());
        self.index.insert(name.clone(), id);
        self.params.push(Param { name, value });
        Ok(id)
    }

    /// Registers a parameter initialised uniformly in `[lo, hi)`.
    pub fn uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        range: (f64, f64),
        rng: &mut RngState,
    ) -> Result<ParamId> {
        let value = Tensor::uniform_init(shape, range.0, range.1, rng)?;
        self.insert(name, value)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    /// Replaces a parameter's values, keeping its shape and trainability.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::shape(
                "param_set",
                format!("{}: {:?} vs {:?}", p.name, p.value.shape(), value.shape()),
            ));
        }
        let trainable = p.value.requires_grad();
        p.value = value.with_requires_grad(trainable);
        Ok(())
    }

    pub fn set_trainable(&mut self, id: ParamId, on: bool) {
        self.params[id.0].value.set_requires_grad(on);
    }

    /// Freezes every parameter whose name starts with `prefix`.
    pub fn freeze_prefix(&mut self, prefix: &str) -> usize {
        let mut n = 0;
        for p in &mut self.params {
            if p.name.starts_with(prefix) {
                p.value.set_requires_grad(false);
                n += 1;
            }
        }
        n
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        Gradients {
            grads: self
                .params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect(),
        }
    }
}

/// One gradient tensor per parameter, aligned with [`ParamStore`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    grads: Vec<Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn from_tensors(grads: Vec<Tensor<T>>) -> Self {
        Gradients { grads }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.grads.iter()
    }

    /// Elementwise accumulation; both sets must come from the same store.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x = *x + y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for g in &mut self.grads {
            for x in g.data_mut() {
                *x = *x * factor;
            }
        }
    }

    /// L2 norm over all tensors taken as one flattened vector.
    pub fn global_norm(&self) -> T {
        self.grads
            .iter()
            .fold(T::zero(), |acc, g| acc + g.sum_squares())
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(|g| g.all_finite())
    }

    /// Rescales every gradient by `max_norm / norm` when the global norm
    /// exceeds `max_norm`. Returns the norm measured before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: T) -> Result<T> {
        if !(max_norm > T::zero()) {
            return Err(Error::Config(format!("clip norm must be positive, got {max_norm}")));
        }
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        Ok(norm)
    }
}
