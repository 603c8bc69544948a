use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle into a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One trainable tensor together with its gradient accumulator and
/// optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub state: Tensor<T>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T> {
    entries: Vec<Param<T>>,
}

/// Serialized form of one parameter.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    /// Optimizer accumulator, same length as `data`.
    pub state: Vec<f64>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.find(&name).is_some() {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let grad = Tensor::zeros(value.shape());
        let state = Tensor::zeros(value.shape());
        self.entries.push(Param {
            name,
            value,
            grad,
            state,
        });
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.entries[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.entries[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].grad
    }

    /// Adds `g` into the gradient accumulator of `id`.
    pub fn accumulate(&mut self, id: ParamId, g: &Tensor<T>) {
        self.entries[id.0]
            .grad
            .add_assign(g)
            .expect("gradient shape matches parameter");
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.entries.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.entries {
            p.grad.fill(T::zero());
        }
    }

    pub fn to_records(&self) -> Vec<TensorRecord> {
        self.entries
            .iter()
            .map(|p| TensorRecord {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                data: p.value.data().iter().map(|x| x.as_f64()).collect(),
                state: p.state.data().iter().map(|x| x.as_f64()).collect(),
            })
            .collect()
    }

    /// Overwrites values and optimizer state from records. Every parameter
    /// must be present with a matching shape; extra records are rejected.
    pub fn load_records(&mut self, records: &[TensorRecord]) -> Result<()> {
        if records.len() != self.entries.len() {
            return Err(Error::Config(format!(
                "checkpoint holds {} tensors, model expects {}",
                records.len(),
                self.entries.len()
            )));
        }
        for rec in records {
            let id = self
                .find(&rec.name)
                .ok_or_else(|| Error::Config(format!("unknown tensor `{}`", rec.name)))?;
            let p = &mut self.entries[id.0];
            if p.value.shape() != rec.shape.as_slice() {
                return Err(Error::Shape(format!(
                    "tensor `{}`: checkpoint {:?}, model {:?}",
                    rec.name,
                    rec.shape,
                    p.value.shape()
                )));
            }
            if rec.data.len() != p.value.len() || rec.state.len() != p.value.len() {
                return Err(Error::Shape(format!(
                    "tensor `{}` payload length disagrees with its shape",
                    rec.name
                )));
            }
            if rec.data.iter().chain(&rec.state).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("tensor `{}`", rec.name),
                });
            }
            for (d, &s) in p.value.data_mut().iter_mut().zip(&rec.data) {
                *d = T::lit(s);
            }
            for (d, &s) in p.state.data_mut().iter_mut().zip(&rec.state) {
                *d = T::lit(s);
            }
            p.grad.fill(T::zero());
        }
        Ok(())
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}
