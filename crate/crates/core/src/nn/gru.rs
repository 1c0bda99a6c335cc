use candle_core::{Tensor, D};

use super::layers::Dense;
use super::params::{ParamKind, ParamStore};
use crate::Result;

/// Gated recurrent unit over `(B, T, C)` input. Frames where the mask is
/// zero leave the hidden state unchanged.
#[derive(Clone)]
pub struct Gru {
    input: Dense,
    recur: Tensor,
    recur_bias: Tensor,
    pub hidden: usize,
}

impl Gru {
    pub fn new(ps: &mut ParamStore, name: &str, in_dim: usize, hidden: usize) -> Result<Self> {
        let input = Dense::new(ps, &format!("{name}.input"), in_dim, 3 * hidden)?;
        let bound = 1.0 / (hidden as f64).sqrt();
        let recur = ps.uniform(&format!("{name}.recur"), &[hidden, 3 * hidden], bound, ParamKind::Weight)?;
        let recur_bias = ps.constant(&format!("{name}.recur_bias"), &[3 * hidden], 0.0, ParamKind::Bias)?;
        Ok(Self { input, recur, recur_bias, hidden })
    }

    pub fn zero_state(&self, batch: usize, like: &Tensor) -> Result<Tensor> {
        Ok(Tensor::zeros((batch, self.hidden), like.dtype(), like.device())?)
    }

    /// Projects the input once for all frames: `(B, T, 3H)`.
    pub fn project(&self, x: &Tensor) -> Result<Tensor> {
        self.input.forward(x)
    }

    /// One step from a pre-projected input row `(B, 3H)`.
    pub fn cell(&self, xp: &Tensor, h: &Tensor) -> Result<Tensor> {
        let hp = h.matmul(&self.recur)?.broadcast_add(&self.recur_bias)?;
        let n = self.hidden;
        let xr = xp.narrow(D::Minus1, 0, n)?;
        let xz = xp.narrow(D::Minus1, n, n)?;
        let xn = xp.narrow(D::Minus1, 2 * n, n)?;
        let hr = hp.narrow(D::Minus1, 0, n)?;
        let hz = hp.narrow(D::Minus1, n, n)?;
        let hn = hp.narrow(D::Minus1, 2 * n, n)?;
        let r = candle_nn::ops::sigmoid(&(xr + hr)?)?;
        let z = candle_nn::ops::sigmoid(&(xz + hz)?)?;
        let cand = (xn + (r * hn)?)?.tanh()?;
        // h' = n + z * (h - n)
        Ok((&cand + (z * (h - &cand)?)?)?)
    }

    /// Runs the whole sequence; `mask` is `(B, T)` or absent.
    pub fn forward(&self, x: &Tensor, mask: Option<&Tensor>, reverse: bool) -> Result<Tensor> {
        let (b, t, _) = x.dims3()?;
        let proj = self.project(x)?;
        let mut h = self.zero_state(b, x)?;
        let steps = time_steps(&proj)?;
        let mut outs: Vec<Tensor> = Vec::with_capacity(t);
        let order: Vec<usize> = if reverse { (0..t).rev().collect() } else { (0..t).collect() };
        for &i in &order {
            let xp = &steps[i];
            let next = self.cell(xp, &h)?;
            h = match mask {
                Some(m) => {
                    let m = m.narrow(1, i, 1)?;
                    (&h + next.sub(&h)?.broadcast_mul(&m)?)?
                }
                None => next,
            };
            outs.push(h.clone());
        }
        if reverse {
            outs.reverse();
        }
        Ok(Tensor::stack(&outs, 1)?)
    }
}

/// Forward and backward GRUs with concatenated outputs `(B, T, 2H)`.
#[derive(Clone)]
pub struct BiGru {
    fwd: Gru,
    bwd: Gru,
}

impl BiGru {
    pub fn new(ps: &mut ParamStore, name: &str, in_dim: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            fwd: Gru::new(ps, &format!("{name}.fwd"), in_dim, hidden)?,
            bwd: Gru::new(ps, &format!("{name}.bwd"), in_dim, hidden)?,
        })
    }

    pub fn out_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn forward(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let f = self.fwd.forward(x, mask, false)?;
        let b = self.bwd.forward(x, mask, true)?;
        Ok(Tensor::cat(&[f, b], 2)?)
    }
}

/// Splits `(B, T, C)` into `T` tensors of shape `(B, C)`.
///
/// The backward pass of a narrow allocates a gradient the size of its
/// source, so slicing goes through chunks of about `sqrt(T)` frames to keep
/// that cost near `T * sqrt(T)` instead of `T * T`.
pub fn time_steps(x: &Tensor) -> Result<Vec<Tensor>> {
    let t = x.dim(1)?;
    let chunk = ((t as f64).sqrt().ceil() as usize).max(1);
    let mut out = Vec::with_capacity(t);
    let mut start = 0;
    while start < t {
        let len = chunk.min(t - start);
        let block = x.narrow(1, start, len)?;
        for i in 0..len {
            out.push(block.narrow(1, i, 1)?.squeeze(1)?);
        }
        start += len;
    }
    Ok(out)
}
