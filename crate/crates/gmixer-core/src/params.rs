//! Learnable parameters and their registry.
//!
//! The registry owns every parameter in creation order; that order is the
//! checkpoint order and must be reproducible, so construction is the only
//! way to add entries and names must be unique.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Parameter<F> {
    pub name: String,
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
    pub adam_m: Tensor<F>,
    pub adam_v: Tensor<F>,
    pub step_count: u64,
}

#[derive(Debug, Clone)]
pub struct ParamRegistry<F> {
    params: Vec<Parameter<F>>,
    by_name: HashMap<String, ParamId>,
    pub rng_seed: u64,
}

impl<F: Scalar> ParamRegistry<F> {
    pub fn new(rng_seed: u64) -> Self {
        ParamRegistry {
            params: Vec::new(),
            by_name: HashMap::new(),
            rng_seed,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::contract(format!("duplicate parameter name {name:?}")));
        }
        let id = ParamId(self.params.len());
        let shape = value.shape().to_vec();
        self.params.push(Parameter {
            name: name.clone(),
            value,
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            step_count: 0,
        });
        self.by_name.insert(name, id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar coordinates across all parameters.
    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<F> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<F> {
        &mut self.params[id.0]
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<F>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<F>> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(F::ZERO);
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, delta: &Tensor<F>) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.grad.shape() != delta.shape() {
            return Err(Error::ShapeMismatch {
                op: "accumulate_grad",
                lhs: p.grad.shape().to_vec(),
                rhs: delta.shape().to_vec(),
            });
        }
        for (g, &d) in p.grad.data_mut().iter_mut().zip(delta.data().iter()) {
            *g += d;
        }
        Ok(())
    }

    /// Euclidean norm of the concatenated gradient vector.
    pub fn grad_norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for p in &self.params {
            for &g in p.grad.data() {
                let g = g.to_f64();
                acc += g * g;
            }
        }
        acc.sqrt()
    }

    pub fn value_norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for p in &self.params {
            for &v in p.value.data() {
                let v = v.to_f64();
                acc += v * v;
            }
        }
        acc.sqrt()
    }

    pub fn all_grads_finite(&self) -> bool {
        self.params.iter().all(|p| p.grad.all_finite())
    }

    /// Read a single coordinate (parameter-local flat index).
    pub fn coord(&self, id: ParamId, flat: usize) -> F {
        self.params[id.0].value.data()[flat]
    }

    pub fn set_coord(&mut self, id: ParamId, flat: usize, v: F) {
        self.params[id.0].value.data_mut()[flat] = v;
    }

    pub fn grad_coord(&self, id: ParamId, flat: usize) -> F {
        self.params[id.0].grad.data()[flat]
    }
}

/// Glorot-uniform init for a weight matrix, sampled in f64 so f32 and f64
/// registries see the same stream.
pub fn glorot_uniform<F: Scalar>(rng: &mut SplitMix64, rows: usize, cols: usize) -> Tensor<F> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| F::from_f64(rng.uniform(-limit, limit)))
        .collect();
    Tensor::from_vec(&[rows, cols], data).expect("sized by construction")
}
