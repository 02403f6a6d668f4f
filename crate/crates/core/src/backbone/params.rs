//! Named parameter storage with deterministic, per-name seeded initialization.

use std::collections::{BTreeMap, BTreeSet};

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Constant(f64),
    /// Normal(0, std) resampled outside ±2·std.
    TruncNormal {
        std: f64,
    },
    /// He-normal with the given fan.
    Kaiming {
        fan: usize,
    },
    Uniform {
        bound: f64,
    },
}

impl Init {
    fn sample(self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Constant(c) => vec![c; n],
            Init::TruncNormal { std } => {
                let normal = Normal::new(0.0, std).expect("std is finite");
                (0..n)
                    .map(|_| loop {
                        let v: f64 = normal.sample(rng);
                        if v.abs() <= 2.0 * std {
                            break v;
                        }
                    })
                    .collect()
            }
            Init::Kaiming { fan } => {
                let std = (2.0 / fan.max(1) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("std is finite");
                (0..n).map(|_| normal.sample(rng)).collect()
            }
            Init::Uniform { bound } => {
                let u = Uniform::new_inclusive(-bound, bound).expect("bound is finite");
                (0..n).map(|_| u.sample(rng)).collect()
            }
        }
    }
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Owns every learnable parameter (and non-learnable buffer) of a model.
///
/// Each parameter's initial value depends only on the store seed and its
/// name, so construction order does not affect initialization.
#[derive(Debug)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    buffers: BTreeSet<String>,
    frozen_prefixes: Vec<String>,
    seed: u64,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType) -> Self {
        Self {
            vars: BTreeMap::new(),
            buffers: BTreeSet::new(),
            frozen_prefixes: Vec::new(),
            seed,
            dtype,
            device: Device::Cpu,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn get_or_init(
        &mut self,
        name: &str,
        shape: &[usize],
        init: Init,
        buffer: bool,
    ) -> Result<Tensor> {
        if let Some(v) = self.vars.get(name) {
            if v.dims() != shape {
                return Err(Error::Shape(format!(
                    "parameter {name} has shape {:?}, model expects {shape:?}",
                    v.dims()
                )));
            }
            return Ok(v.as_tensor().clone());
        }
        let n = shape.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ name_hash(name));
        let data = init.sample(n, &mut rng);
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        if buffer {
            self.buffers.insert(name.to_string());
        }
        Ok(out)
    }

    /// Returns the named parameter, creating it with `init` on first use.
    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        self.get_or_init(name, shape, init, false)
    }

    /// Like [`param`](Self::param) but excluded from optimization.
    pub fn buffer(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Var> {
        self.get_or_init(name, shape, init, true)?;
        Ok(self.vars[name].clone())
    }

    pub fn var(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    /// Every stored tensor (parameters and buffers), sorted by name.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_buffer(&self, name: &str) -> bool {
        self.buffers.contains(name)
    }

    /// Excludes every parameter under `prefix` from [`trainable`](Self::trainable).
    pub fn freeze_prefix(&mut self, prefix: &str) {
        self.frozen_prefixes.push(prefix.to_string());
    }

    /// Learnable parameters that are neither buffers nor frozen, sorted by name.
    pub fn trainable(&self) -> Vec<(String, Var)> {
        self.vars
            .iter()
            .filter(|(k, _)| {
                !self.buffers.contains(*k)
                    && !self
                        .frozen_prefixes
                        .iter()
                        .any(|p| k.starts_with(p.as_str()))
            })
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// Inserts or overwrites a tensor; used when restoring checkpoints.
    pub fn insert(&mut self, name: &str, value: &Tensor, buffer: bool) -> Result<()> {
        let value = value.to_dtype(self.dtype)?;
        match self.vars.get(name) {
            Some(v) if v.dims() == value.dims() => v.set(&value)?,
            Some(v) => {
                return Err(Error::Shape(format!(
                    "cannot restore {name}: shape {:?} vs {:?}",
                    value.dims(),
                    v.dims()
                )))
            }
            None => {
                self.vars
                    .insert(name.to_string(), Var::from_tensor(&value)?);
            }
        }
        if buffer {
            self.buffers.insert(name.to_string());
        }
        Ok(())
    }

    /// Overwrites an existing tensor in place.
    pub fn set(&self, name: &str, value: &Tensor) -> Result<()> {
        let v = self
            .vars
            .get(name)
            .ok_or_else(|| Error::Shape(format!("unknown parameter {name}")))?;
        v.set(&value.to_dtype(self.dtype)?)?;
        Ok(())
    }

    pub fn num_elements(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub fn scope(&mut self, prefix: &str) -> Scope<'_> {
        Scope {
            store: self,
            prefix: prefix.to_string(),
        }
    }
}

/// A name prefix into a [`ParamStore`].
pub struct Scope<'a> {
    store: &'a mut ParamStore,
    prefix: String,
}

impl Scope<'_> {
    fn full(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn pp(&mut self, name: impl std::fmt::Display) -> Scope<'_> {
        let prefix = self.full(&name.to_string());
        Scope {
            store: &mut *self.store,
            prefix,
        }
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let full = self.full(name);
        self.store.param(&full, shape, init)
    }

    pub fn buffer(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Var> {
        let full = self.full(name);
        self.store.buffer(&full, shape, init)
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype
    }

    pub fn device(&self) -> Device {
        self.store.device.clone()
    }
}
