use candle_core::Tensor;

use super::gru::BiGru;
use super::layers::{apply_mask, Conv1d, Dense, Highway, LayerNorm};
use super::params::ParamStore;
use crate::config::CbhgConfig;
use crate::Result;

/// Convolution bank, highway stack and bidirectional GRU over `(B, T, C)`.
#[derive(Clone)]
pub struct Cbhg {
    bank: Vec<(Conv1d, LayerNorm)>,
    proj1: (Conv1d, LayerNorm),
    proj2: (Conv1d, LayerNorm),
    fit: Option<Dense>,
    highways: Vec<Highway>,
    gru: BiGru,
}

impl Cbhg {
    pub fn new(ps: &mut ParamStore, name: &str, in_dim: usize, cfg: &CbhgConfig) -> Result<Self> {
        let c = cfg.channels;
        let mut bank = Vec::with_capacity(cfg.bank_size);
        for k in 1..=cfg.bank_size {
            let width = if cfg.bank_kernel == 0 { k } else { cfg.bank_kernel };
            bank.push((
                Conv1d::new(ps, &format!("{name}.bank{k}"), in_dim, c, width)?,
                LayerNorm::new(ps, &format!("{name}.bank{k}.norm"), c)?,
            ));
        }
        let pk = cfg.proj_kernel;
        let proj1 = (
            Conv1d::new(ps, &format!("{name}.proj1"), c * cfg.bank_size, c, pk)?,
            LayerNorm::new(ps, &format!("{name}.proj1.norm"), c)?,
        );
        let proj2 = (
            Conv1d::new(ps, &format!("{name}.proj2"), c, in_dim, pk)?,
            LayerNorm::new(ps, &format!("{name}.proj2.norm"), in_dim)?,
        );
        let fit = if in_dim != c { Some(Dense::new(ps, &format!("{name}.fit"), in_dim, c)?) } else { None };
        let highways = (0..cfg.highway_layers)
            .map(|i| Highway::new(ps, &format!("{name}.highway{i}"), c))
            .collect::<Result<Vec<_>>>()?;
        let gru = BiGru::new(ps, &format!("{name}.gru"), c, cfg.gru_width)?;
        Ok(Self { bank, proj1, proj2, fit, highways, gru })
    }

    pub fn out_dim(&self) -> usize {
        self.gru.out_dim()
    }

    pub fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let x = apply_mask(x, mask)?;
        let bank = self
            .bank
            .iter()
            .map(|(conv, norm)| apply_mask(&norm.forward(&conv.forward(&x)?)?.relu()?, mask))
            .collect::<Result<Vec<_>>>()?;
        let stacked = Tensor::cat(&bank, 2)?;
        let pooled = apply_mask(&max_pool_next(&stacked)?, mask)?;
        let p1 = apply_mask(&self.proj1.1.forward(&self.proj1.0.forward(&pooled)?)?.relu()?, mask)?;
        let p2 = self.proj2.1.forward(&self.proj2.0.forward(&p1)?)?;
        let mut h = apply_mask(&(p2 + &x)?, mask)?;
        if let Some(fit) = &self.fit {
            h = fit.forward(&h)?;
        }
        for hw in &self.highways {
            h = hw.forward(&h)?;
        }
        let h = apply_mask(&h, mask)?;
        apply_mask(&self.gru.forward(&h, Some(mask))?, mask)
    }
}

/// Width-2 max pool with stride 1 that preserves length: `y_t = max(x_t, x_{t+1})`.
fn max_pool_next(x: &Tensor) -> Result<Tensor> {
    let t = x.dim(1)?;
    let shifted = x.pad_with_zeros(1, 0, 1)?.narrow(1, 1, t)?;
    Ok(x.maximum(&shifted)?)
}
