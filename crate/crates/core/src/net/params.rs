use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor, Var};
use crate::random::{mix_seed, str_hash, SeededStream};

/// Named parameter tensors, ordered by name.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore { tensors: BTreeMap::new() }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Zero-mean Gaussian with variance `2 / fan_in`. The draw depends only on
    /// `seed` and the parameter name.
    pub fn insert_he(&mut self, name: &str, shape: &[usize], fan_in: usize, seed: u64) {
        let std = (2.0 / fan_in as f64).sqrt();
        let mut s = SeededStream::new(mix_seed(seed, str_hash(name)), 0);
        let t = Tensor::from_fn(shape, |_| T::from_f64_lossy(std * s.normal()));
        self.tensors.insert(name.to_string(), t);
    }

    pub fn insert_zeros(&mut self, name: &str, shape: &[usize]) {
        self.tensors.insert(name.to_string(), Tensor::zeros(shape));
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors.get_mut(name).ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore { tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect() }
    }

    /// Records every parameter on `tape` as a differentiable leaf.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        Bound { vars: self.tensors.iter().map(|(k, v)| (k.clone(), tape.var(v.clone()))).collect() }
    }
}

/// Parameters recorded on a tape.
pub struct Bound<'t, T: Scalar> {
    vars: HashMap<String, Var<'t, T>>,
}

impl<'t, T: Scalar> Bound<'t, T> {
    pub fn from_vars(vars: HashMap<String, Var<'t, T>>) -> Self {
        Bound { vars }
    }

    pub fn get(&self, name: &str) -> Result<Var<'t, T>> {
        self.vars.get(name).copied().ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var<'t, T>)> {
        self.vars.iter()
    }
}
