use candle_core::{DType, Device, Tensor};

use crate::Result;

/// Right-pads integer sequences with `fill` into a `(B, T)` u32 tensor.
pub fn pad_ids(seqs: &[Vec<u32>], t: usize, fill: u32, device: &Device) -> Result<Tensor> {
    let mut data = Vec::with_capacity(seqs.len() * t);
    for s in seqs {
        data.extend(s.iter().take(t).copied());
        data.extend(std::iter::repeat(fill).take(t.saturating_sub(s.len())));
    }
    Ok(Tensor::from_vec(data, (seqs.len(), t), device)?)
}

/// Right-pads row-major frames of width `dim` into a `(B, T, dim)` tensor.
pub fn pad_frames(seqs: &[&[f32]], t: usize, dim: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut data = Vec::with_capacity(seqs.len() * t * dim);
    for s in seqs {
        let n = (s.len() / dim).min(t);
        data.extend_from_slice(&s[..n * dim]);
        data.extend(std::iter::repeat(0f32).take((t - n) * dim));
    }
    Ok(Tensor::from_vec(data, (seqs.len(), t, dim), device)?.to_dtype(dtype)?)
}

/// Masked mean of `values` (any shape matching `mask` after broadcasting
/// the trailing feature axis).
pub fn masked_mean(values: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let per_frame = if values.rank() == mask.rank() + 1 {
        let width = values.dim(values.rank() - 1)? as f64;
        (values.sum(values.rank() - 1)? / width)?
    } else {
        values.clone()
    };
    Ok(((per_frame * mask)?.sum_all()? / mask.sum_all()?)?)
}
