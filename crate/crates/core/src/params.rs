//! Named parameter storage and initializers.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat, ordered collection of trainable tensors.
///
/// Values are reference counted so that loading them onto a tape is a pointer
/// copy; mutation goes through copy-on-write and is therefore only cheap once
/// every tape referencing the store has been dropped.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<Tensor>>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(Arc::new(value));
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
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        if value.shape() != self.values[id.0].shape() {
            return Err(Error::shape("param set", self.values[id.0].shape(), value.shape()));
        }
        self.values[id.0] = Arc::new(value);
        Ok(())
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v.as_ref()))
    }

    pub(crate) fn shared_values(&self) -> &[Arc<Tensor>] {
        &self.values
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

pub fn fill_gaussian<R: Rng + ?Sized>(t: &mut Tensor, std: f64, rng: &mut R) {
    let normal = Normal::new(0.0, std).expect("finite std");
    for x in t.data_mut() {
        *x = normal.sample(rng);
    }
}

pub fn fill_uniform<R: Rng + ?Sized>(t: &mut Tensor, limit: f64, rng: &mut R) {
    for x in t.data_mut() {
        *x = rng.random_range(-limit..=limit);
    }
}

/// Glorot/Xavier uniform for a `[fan_out, fan_in]` matrix.
pub fn fill_glorot<R: Rng + ?Sized>(t: &mut Tensor, rng: &mut R) {
    let (fan_out, fan_in) = (t.rows() as f64, t.cols() as f64);
    let limit = (6.0 / (fan_in + fan_out)).sqrt();
    fill_uniform(t, limit, rng);
}

/// Affine map `W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Linear {
    pub fn register(store: &mut ParamStore, prefix: &str, input_dim: usize, output_dim: usize) -> Self {
        let w = store.add(format!("{prefix}.w"), Tensor::zeros(&[output_dim, input_dim]));
        let b = store.add(format!("{prefix}.b"), Tensor::zeros(&[output_dim]));
        Linear {
            w,
            b,
            input_dim,
            output_dim,
        }
    }

    pub fn init_glorot<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        fill_glorot(store.get_mut(self.w), rng);
        store.get_mut(self.b).data_mut().fill(0.0);
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        let wx = tape.matmul(w, x)?;
        tape.add(wx, b)
    }

    pub fn param_count(&self) -> usize {
        self.output_dim * self.input_dim + self.output_dim
    }
}
