use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// How a parameter is filled at creation time.
#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    Uniform {
        low: f64,
        high: f64,
    },
    Normal {
        std: f64,
    },
    /// Uniform in `±sqrt(gain / fan_in)·sqrt(3)`, i.e. variance `gain / fan_in`.
    FanIn {
        fan_in: usize,
        gain: f64,
    },
}

impl Init {
    pub fn sample<F: Element, R: Rng + ?Sized>(&self, shape: &[usize], rng: &mut R) -> Tensor<F> {
        let n: usize = shape.iter().product();
        let data: Vec<F> = match *self {
            Init::Zeros => vec![F::ZERO; n],
            Init::Constant(c) => vec![F::lit(c); n],
            Init::Uniform { low, high } => {
                let d = Uniform::new_inclusive(low, high).expect("valid uniform bounds");
                (0..n).map(|_| F::lit(d.sample(rng))).collect()
            }
            Init::Normal { std } => {
                let d = Normal::new(0.0, std).expect("valid std");
                (0..n).map(|_| F::lit(d.sample(rng))).collect()
            }
            Init::FanIn { fan_in, gain } => {
                let bound = (3.0 * gain / fan_in.max(1) as f64).sqrt();
                let d = Uniform::new_inclusive(-bound, bound).expect("valid uniform bounds");
                (0..n).map(|_| F::lit(d.sample(rng))).collect()
            }
        };
        Tensor::new(shape.to_vec(), data).expect("init shape")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor with its dotted module path.
#[derive(Clone, Debug)]
pub struct Parameter<F: Element = f64> {
    pub name: String,
    pub value: Tensor<F>,
    /// Allocated on first accumulation.
    pub grad: Option<Tensor<F>>,
    pub init: Init,
}

/// Owns every parameter and non-trainable buffer (e.g. normalization running
/// statistics) of a model, keyed by unique dotted names.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<F: Element = f64> {
    params: Vec<Parameter<F>>,
    by_name: HashMap<String, ParamId>,
    buffers: BTreeMap<String, Tensor<F>>,
}

impl<F: Element> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
            buffers: BTreeMap::new(),
        }
    }

    pub fn add<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        init: Init,
        rng: &mut R,
    ) -> Result<ParamId> {
        let value = init.sample(shape, rng);
        self.insert(name, value, init)
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        value: Tensor<F>,
        init: Init,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) || self.buffers.contains_key(&name) {
            return Err(TensorError::DuplicateParameter(name));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            value,
            grad: None,
            init,
        });
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Parameter<F> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<F> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<F> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor<F>> {
        self.params[id.0].grad.as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<F>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<F>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar trainable coordinates.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Scalar count of parameters whose name starts with `prefix`.
    pub fn num_scalars_with_prefix(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .map(|p| p.value.numel())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn accumulate_grad(&mut self, id: ParamId, g: &Tensor<F>) {
        let p = &mut self.params[id.0];
        match &mut p.grad {
            Some(acc) => {
                for (a, &v) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += v;
                }
            }
            None => p.grad = Some(g.clone()),
        }
    }

    pub fn buffer(&self, name: &str) -> Option<&Tensor<F>> {
        self.buffers.get(name)
    }

    pub fn buffer_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.buffers.get_mut(name)
    }

    pub fn set_buffer(&mut self, name: impl Into<String>, value: Tensor<F>) -> Result<()> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(TensorError::DuplicateParameter(name));
        }
        self.buffers.insert(name, value);
        Ok(())
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&String, &Tensor<F>)> {
        self.buffers.iter()
    }
}
