use candle_core::{DType, Device, Tensor, D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamKind, ParamStore};
use crate::Result;

/// Affine map over the last axis with an `(in, out)` weight.
#[derive(Clone)]
pub struct Dense {
    weight: Tensor,
    bias: Tensor,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new(ps: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = ps.uniform(&format!("{name}.weight"), &[in_dim, out_dim], bound, ParamKind::Weight)?;
        let bias = ps.constant(&format!("{name}.bias"), &[out_dim], 0.0, ParamKind::Bias)?;
        Ok(Self { weight, bias, in_dim, out_dim })
    }

    pub fn with_bias(ps: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, bias: f64) -> Result<Self> {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = ps.uniform(&format!("{name}.weight"), &[in_dim, out_dim], bound, ParamKind::Weight)?;
        let bias = ps.constant(&format!("{name}.bias"), &[out_dim], bias, ParamKind::Bias)?;
        Ok(Self { weight, bias, in_dim, out_dim })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = match x.rank() {
            2 => x.matmul(&self.weight)?,
            _ => x.broadcast_matmul(&self.weight)?,
        };
        Ok(y.broadcast_add(&self.bias)?)
    }
}

/// Lookup table from integer ids to dense vectors.
#[derive(Clone)]
pub struct Embedding {
    table: Tensor,
    pub dim: usize,
    pub vocab: usize,
}

impl Embedding {
    pub fn new(ps: &mut ParamStore, name: &str, vocab: usize, dim: usize) -> Result<Self> {
        let table = ps.normal(&format!("{name}.table"), &[vocab, dim], 0.3, ParamKind::Embedding)?;
        Ok(Self { table, dim, vocab })
    }

    /// `ids` of any shape (u32) maps to `ids.shape ++ [dim]`.
    pub fn forward(&self, ids: &Tensor) -> Result<Tensor> {
        let mut dims = ids.dims().to_vec();
        let flat = ids.flatten_all()?;
        let rows = self.table.index_select(&flat, 0)?;
        dims.push(self.dim);
        Ok(rows.reshape(dims)?)
    }
}

/// Normalization over the channel axis of each frame.
#[derive(Clone)]
pub struct LayerNorm {
    gain: Tensor,
    shift: Tensor,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        let gain = ps.constant(&format!("{name}.gain"), &[dim], 1.0, ParamKind::Norm)?;
        let shift = ps.constant(&format!("{name}.shift"), &[dim], 0.0, ParamKind::Norm)?;
        Ok(Self { gain, shift })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + 1e-5)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gain)?.broadcast_add(&self.shift)?)
    }
}

/// 1-D convolution over time on `(B, T, C)` input, "same" padding.
#[derive(Clone)]
pub struct Conv1d {
    proj: Dense,
    pub kernel: usize,
}

impl Conv1d {
    pub fn new(ps: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, kernel: usize) -> Result<Self> {
        let proj = Dense::new(ps, name, in_dim * kernel, out_dim)?;
        Ok(Self { proj, kernel })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if self.kernel == 1 {
            return self.proj.forward(x);
        }
        let t = x.dim(1)?;
        let left = (self.kernel - 1) / 2;
        let right = self.kernel - 1 - left;
        let padded = x.pad_with_zeros(1, left, right)?;
        let taps = (0..self.kernel)
            .map(|k| padded.narrow(1, k, t))
            .collect::<candle_core::Result<Vec<_>>>()?;
        let unfolded = Tensor::cat(&taps, 2)?;
        self.proj.forward(&unfolded)
    }
}

/// Gated skip layer: `relu(Hx) * g + x * (1 - g)` with `g = sigmoid(Gx)`.
#[derive(Clone)]
pub struct Highway {
    transform: Dense,
    gate: Dense,
}

impl Highway {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            transform: Dense::new(ps, &format!("{name}.h"), dim, dim)?,
            gate: Dense::with_bias(ps, &format!("{name}.g"), dim, dim, -1.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.transform.forward(x)?.relu()?;
        let g = candle_nn::ops::sigmoid(&self.gate.forward(x)?)?;
        let carry = (x * (1.0 - &g)?)?;
        Ok(((h * g)? + carry)?)
    }
}

/// Inverted dropout with an explicit random source.
pub fn dropout(x: &Tensor, p: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - p;
    let n = x.elem_count();
    let mask: Vec<f32> = (0..n)
        .map(|_| if rng.gen::<f64>() < keep { (1.0 / keep) as f32 } else { 0.0 })
        .collect();
    let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
    Ok((x * mask)?)
}

/// Stack of ReLU layers with dropout after each.
#[derive(Clone)]
pub struct Prenet {
    layers: Vec<Dense>,
    pub dropout: f64,
}

impl Prenet {
    pub fn new(ps: &mut ParamStore, name: &str, in_dim: usize, widths: &[usize], dropout: f64) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut d = in_dim;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Dense::new(ps, &format!("{name}.{i}"), d, w)?);
            d = w;
        }
        Ok(Self { layers, dropout })
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    /// Dropout is applied whenever `rng` is given.
    pub fn forward(&self, x: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?.relu()?;
            if let Some(r) = rng.as_deref_mut() {
                h = dropout(&h, self.dropout, r)?;
            }
        }
        Ok(h)
    }
}

/// `(B, T)` float mask, 1 for frames inside each sequence.
pub fn sequence_mask(lengths: &[usize], t: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut data = Vec::with_capacity(lengths.len() * t);
    for &len in lengths {
        data.extend((0..t).map(|i| if i < len { 1f32 } else { 0f32 }));
    }
    Ok(Tensor::from_vec(data, (lengths.len(), t), device)?.to_dtype(dtype)?)
}

/// Zeroes padded frames of a `(B, T, C)` tensor given a `(B, T)` mask.
pub fn apply_mask(x: &Tensor, mask: &Tensor) -> Result<Tensor> {
    Ok(x.broadcast_mul(&mask.unsqueeze(2)?)?)
}
