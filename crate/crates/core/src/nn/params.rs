use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::{Error, Result};

/// Role of a parameter; only `Weight` entries are L2-regularized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Embedding,
    Norm,
}

/// Named trainable tensors with seeded initialization.
pub struct ParamStore {
    vars: BTreeMap<String, (Var, ParamKind)>,
    dtype: DType,
    device: Device,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(dtype: DType, seed: u64) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
            device: Device::Cpu,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: &str, values: Vec<f64>, shape: &[usize], kind: ParamKind) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::Config(format!("parameter {name} defined twice")));
        }
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), (var, kind));
        Ok(out)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64, kind: ParamKind) -> Result<Tensor> {
        let n = shape.iter().product();
        let dist = Uniform::new_inclusive(-bound, bound);
        let values = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        self.insert(name, values, shape, kind)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64, kind: ParamKind) -> Result<Tensor> {
        let n = shape.iter().product();
        let dist = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let values = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        self.insert(name, values, shape, kind)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64, kind: ParamKind) -> Result<Tensor> {
        let n = shape.iter().product();
        self.insert(name, vec![value; n], shape, kind)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().map(|(v, _)| v.clone()).collect()
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Var, ParamKind)> {
        self.vars.iter().map(|(k, (v, kind))| (k.as_str(), v, *kind))
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name).map(|(v, _)| v)
    }

    pub fn num_params(&self) -> usize {
        self.vars.values().map(|(v, _)| v.elem_count()).sum()
    }

    /// Sum of squares over all `Weight` parameters.
    pub fn l2_sum(&self) -> Result<Tensor> {
        let mut total = Tensor::zeros((), self.dtype, &self.device)?;
        for (var, kind) in self.vars.values() {
            if *kind == ParamKind::Weight {
                total = (total + var.as_tensor().sqr()?.sum_all()?)?;
            }
        }
        Ok(total)
    }

    pub fn zero_all(&self) -> Result<()> {
        for (var, _) in self.vars.values() {
            var.set(&var.zeros_like()?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let map: HashMap<String, Tensor> = self
            .vars
            .iter()
            .map(|(k, (v, _))| (k.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&map, path.as_ref())?;
        Ok(())
    }

    /// Overwrites every parameter from a safetensors file. Names and shapes
    /// must match exactly.
    pub fn load(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(format!("parameter file {}", path.display())));
        }
        let loaded = candle_core::safetensors::load(path, &self.device)?;
        if loaded.len() != self.vars.len() {
            return Err(Error::Validation(format!(
                "{}: holds {} tensors, model has {}",
                path.display(),
                loaded.len(),
                self.vars.len()
            )));
        }
        for (name, (var, _)) in &self.vars {
            let t = loaded.get(name).ok_or_else(|| {
                Error::Validation(format!("{}: missing parameter {name}", path.display()))
            })?;
            if t.dims() != var.dims() {
                return Err(Error::Validation(format!(
                    "{}: {name} has shape {:?}, model expects {:?}",
                    path.display(),
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }
}
