use candle_core::{CpuStorage, CustomOp1, Layout, Shape, Tensor};

/// Identity on the forward pass; multiplies incoming gradients by
/// `-scale` on the backward pass.
#[derive(Debug, Clone, Copy)]
pub struct GradientReversal {
    pub scale: f64,
}

impl GradientReversal {
    pub fn new(scale: f64) -> Self {
        Self { scale }
    }

    pub fn apply(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        x.contiguous()?.apply_op1(*self)
    }
}

impl Default for GradientReversal {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

impl CustomOp1 for GradientReversal {
    fn name(&self) -> &'static str {
        "gradient-reversal"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let Some((a, b)) = layout.contiguous_offsets() else {
            candle_core::bail!("gradient-reversal expects contiguous input")
        };
        let out = match storage {
            CpuStorage::F32(v) => CpuStorage::F32(v[a..b].to_vec()),
            CpuStorage::F64(v) => CpuStorage::F64(v[a..b].to_vec()),
            _ => candle_core::bail!("gradient-reversal supports f32 and f64 only"),
        };
        Ok((out, layout.shape().clone()))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad_res: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let g = if self.scale == 1.0 {
            grad_res.neg()?
        } else {
            grad_res.affine(-self.scale, 0.0)?
        };
        Ok(Some(g))
    }
}
