//! Mixture density output layer: a diagonal Gaussian mixture over a
//! `D`-dimensional target per step.

use candle_core::{DType, Tensor, D};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{MdnModelConfig, SamplingMode};
use crate::nn::{Cbhg, Dense, Embedding, ParamStore};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Projects hidden states to mixture weights, means and variances.
#[derive(Clone)]
pub struct MdnHead {
    logits: Dense,
    means: Dense,
    log_vars: Dense,
    pub mixtures: usize,
    pub dim: usize,
    pub var_floor: f64,
}

/// Mixture parameters for every step: log-weights `(..., K)`, means and
/// variances `(..., K, D)`.
#[derive(Clone)]
pub struct GmmTensors {
    pub log_weights: Tensor,
    pub means: Tensor,
    pub vars: Tensor,
}

impl MdnHead {
    pub fn new(ps: &mut ParamStore, name: &str, in_dim: usize, mixtures: usize, dim: usize, var_floor: f64) -> Result<Self> {
        if mixtures == 0 || dim == 0 {
            return Err(Error::Config("mixture count and target width must be positive".into()));
        }
        if !(var_floor > 0.0) {
            return Err(Error::Config("variance floor must be positive".into()));
        }
        Ok(Self {
            logits: Dense::new(ps, &format!("{name}.logits"), in_dim, mixtures)?,
            means: Dense::new(ps, &format!("{name}.means"), in_dim, mixtures * dim)?,
            log_vars: Dense::new(ps, &format!("{name}.log_vars"), in_dim, mixtures * dim)?,
            mixtures,
            dim,
            var_floor,
        })
    }

    pub fn forward(&self, h: &Tensor) -> Result<GmmTensors> {
        let mut shape = h.dims()[..h.rank() - 1].to_vec();
        shape.extend([self.mixtures, self.dim]);
        let logits = self.logits.forward(h)?;
        let log_weights = candle_nn::ops::log_softmax(&logits, D::Minus1)?;
        let means = self.means.forward(h)?.reshape(shape.as_slice())?;
        let vars = self.log_vars.forward(h)?.exp()?.reshape(shape.as_slice())?;
        let floor = Tensor::full(self.var_floor, vars.shape(), vars.device())?.to_dtype(vars.dtype())?;
        let vars = vars.maximum(&floor)?;
        Ok(GmmTensors { log_weights, means, vars })
    }
}

fn log_sum_exp(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    Ok((shifted.exp()?.sum_keepdim(D::Minus1)?.log()? + max)?.squeeze(D::Minus1)?)
}

impl GmmTensors {
    pub fn dim(&self) -> usize {
        self.means.dims().last().copied().unwrap_or(0)
    }

    /// Negative log-likelihood per step; `target` is `(..., D)`.
    pub fn nll(&self, target: &Tensor) -> Result<Tensor> {
        let d = self.dim();
        let y = target.unsqueeze(D::Minus2)?;
        let quad = (self.means.broadcast_sub(&y)?.sqr()? / &self.vars)?.sum(D::Minus1)?;
        let log_det = self.vars.log()?.sum(D::Minus1)?;
        let log_norm = ((log_det + quad)? + d as f64 * LN_2PI)?.affine(-0.5, 0.0)?;
        let joint = (&self.log_weights + log_norm)?;
        Ok(log_sum_exp(&joint)?.neg()?)
    }

    /// Mean NLL over steps where `mask` is 1; `target` is `(B, T, D)`.
    pub fn masked_nll(&self, target: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let per = self.nll(target)?;
        let total = (per * mask)?.sum_all()?;
        let count = mask.sum_all()?;
        Ok((total / count)?)
    }

    /// Copies the mixture for step `(b, t)` out of batched tensors.
    pub fn frame(&self, b: usize, t: usize) -> Result<GmmParams> {
        let w = self.log_weights.get(b)?.get(t)?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        let m = self.means.get(b)?.get(t)?.to_dtype(DType::F64)?.to_vec2::<f64>()?;
        let v = self.vars.get(b)?.get(t)?.to_dtype(DType::F64)?.to_vec2::<f64>()?;
        GmmParams::new(w.into_iter().map(f64::exp).collect(), m, v)
    }

    /// All steps of sequence `b` up to `len`.
    pub fn sequence(&self, b: usize, len: usize) -> Result<Vec<GmmParams>> {
        let w = self.log_weights.get(b)?.narrow(0, 0, len)?.to_dtype(DType::F64)?.to_vec2::<f64>()?;
        let m = self.means.get(b)?.narrow(0, 0, len)?.to_dtype(DType::F64)?.to_vec3::<f64>()?;
        let v = self.vars.get(b)?.narrow(0, 0, len)?.to_dtype(DType::F64)?.to_vec3::<f64>()?;
        w.into_iter()
            .zip(m)
            .zip(v)
            .map(|((w, m), v)| GmmParams::new(w.into_iter().map(f64::exp).collect(), m, v))
            .collect()
    }
}

/// A diagonal Gaussian mixture in plain floats: `means[k][d]`, `vars[k][d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
}

impl GmmParams {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, vars: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        let d = means.first().map_or(0, Vec::len);
        if k == 0 || d == 0 || means.len() != k || vars.len() != k {
            return Err(Error::Shape(format!(
                "mixture parts disagree: {k} weights, {} means, {} variances",
                means.len(),
                vars.len()
            )));
        }
        if means.iter().chain(&vars).any(|row| row.len() != d) {
            return Err(Error::Shape("mixture components differ in width".into()));
        }
        if vars.iter().flatten().any(|v| !(*v > 0.0)) {
            return Err(Error::Validation("mixture variances must be positive".into()));
        }
        Ok(Self { weights, means, vars })
    }

    /// One-dimensional mixture from per-component scalars.
    pub fn scalar(weights: Vec<f64>, means: Vec<f64>, vars: Vec<f64>) -> Result<Self> {
        let wrap = |v: Vec<f64>| v.into_iter().map(|x| vec![x]).collect();
        Self::new(weights, wrap(means), wrap(vars))
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn component_log_density(&self, k: usize, y: &[f64]) -> f64 {
        self.means[k]
            .iter()
            .zip(&self.vars[k])
            .zip(y)
            .map(|((m, v), y)| -0.5 * (LN_2PI + v.ln() + (y - m).powi(2) / v))
            .sum()
    }

    pub fn density(&self, y: &[f64]) -> f64 {
        (0..self.weights.len())
            .map(|k| self.weights[k] * self.component_log_density(k, y).exp())
            .sum()
    }

    pub fn nll(&self, y: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.weights.len())
            .map(|k| self.weights[k].ln() + self.component_log_density(k, y))
            .collect();
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        -(max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln())
    }

    /// Mixture mean.
    pub fn mean(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        (0..self.dim())
            .map(|d| self.weights.iter().zip(&self.means).map(|(w, m)| w * m[d]).sum::<f64>() / total)
            .collect()
    }

    /// Mean of the most heavily weighted component.
    pub fn mean_of_max(&self) -> Vec<f64> {
        let best = self
            .weights
            .iter()
            .enumerate()
            .fold(0, |best, (i, w)| if *w > self.weights[best] { i } else { best });
        self.means[best].clone()
    }

    pub fn sample<R: Rng + ?Sized>(&self, mode: SamplingMode, rng: &mut R) -> Vec<f64> {
        match mode {
            SamplingMode::MeanOfMax => self.mean_of_max(),
            SamplingMode::Stochastic => {
                let total: f64 = self.weights.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                let mut k = self.weights.len() - 1;
                for (i, w) in self.weights.iter().enumerate() {
                    if u < *w {
                        k = i;
                        break;
                    }
                    u -= w;
                }
                self.means[k]
                    .iter()
                    .zip(&self.vars[k])
                    .map(|(m, v)| Normal::new(*m, v.sqrt()).expect("positive variance").sample(rng))
                    .collect()
            }
        }
    }
}

/// Affine normalization `(x - mean) / std` with its inverse.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    pub const IDENTITY: Normalizer = Normalizer { mean: 0.0, std: 1.0 };

    /// Fits mean and standard deviation; a constant input gets `std = 1`.
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("cannot fit normalization on empty or non-finite data".into()));
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        let std = if var.sqrt() > 1e-6 { var.sqrt() } else { 1.0 };
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Categorical and scalar inputs embedded, encoded by a CBHG block and
/// mapped to a per-step mixture.
pub struct MdnSequenceNet {
    embeddings: Vec<Embedding>,
    scalars: Option<Dense>,
    encoder: Cbhg,
    pub head: MdnHead,
}

impl MdnSequenceNet {
    /// `categorical` lists `(name, vocabulary size, width)`; `n_scalars`
    /// real-valued inputs share one dense projection.
    pub fn new(
        ps: &mut ParamStore,
        cfg: &MdnModelConfig,
        categorical: &[(&str, usize, usize)],
        n_scalars: usize,
    ) -> Result<Self> {
        let mut width = 0;
        let mut embeddings = Vec::with_capacity(categorical.len());
        for (name, vocab, dim) in categorical {
            embeddings.push(Embedding::new(ps, name, *vocab, *dim)?);
            width += dim;
        }
        let scalars = if n_scalars > 0 {
            width += cfg.scalar_dim;
            Some(Dense::new(ps, "scalars", n_scalars, cfg.scalar_dim)?)
        } else {
            None
        };
        let encoder = Cbhg::new(ps, "encoder", width, &cfg.encoder)?;
        let head = MdnHead::new(ps, "mdn", encoder.out_dim(), cfg.mixtures, 1, cfg.var_floor)?;
        Ok(Self { embeddings, scalars, encoder, head })
    }

    pub fn forward(&self, ids: &[&Tensor], scalars: Option<&Tensor>, mask: &Tensor) -> Result<GmmTensors> {
        if ids.len() != self.embeddings.len() || scalars.is_some() != self.scalars.is_some() {
            return Err(Error::Shape("input features do not match the network's inputs".into()));
        }
        let mut parts = Vec::with_capacity(ids.len() + 1);
        for (emb, x) in self.embeddings.iter().zip(ids) {
            parts.push(emb.forward(x)?);
        }
        if let (Some(dense), Some(x)) = (&self.scalars, scalars) {
            parts.push(dense.forward(x)?.tanh()?);
        }
        let h = self.encoder.forward(&Tensor::cat(&parts, 2)?, mask)?;
        self.head.forward(&h)
    }
}

/// Draws the first target coordinate for each step of sequence `b`.
pub fn sample_sequence<R: Rng + ?Sized>(
    gmm: &GmmTensors,
    b: usize,
    len: usize,
    mode: SamplingMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(gmm.sequence(b, len)?.iter().map(|g| g.sample(mode, rng)[0]).collect())
}
