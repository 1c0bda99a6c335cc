use candle_core::backprop::GradStore;
use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};

use super::params::ParamStore;
use crate::Result;

/// Runs `f` on a thread with a large stack. Backpropagation through long
/// recurrent graphs recurses once per node.
pub fn with_large_stack<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(512 << 20)
            .spawn_scoped(s, f)
            .expect("spawn worker thread")
            .join()
            .unwrap_or_else(|e| std::panic::resume_unwind(e))
    })
}

/// Adam with global-norm gradient clipping.
pub struct Trainer {
    opt: AdamW,
    vars: Vec<candle_core::Var>,
    pub clip: f64,
    pub steps: usize,
}

impl Trainer {
    pub fn new(ps: &ParamStore, lr: f64, clip: f64) -> Result<Self> {
        let vars = ps.vars();
        let opt = AdamW::new(vars.clone(), ParamsAdamW { lr, weight_decay: 0.0, ..Default::default() })?;
        Ok(Self { opt, vars, clip, steps: 0 })
    }

    /// Backpropagates `loss`, clips, and updates. Returns the pre-clip norm.
    pub fn step(&mut self, loss: &Tensor) -> Result<f64> {
        let mut grads = loss.backward()?;
        let norm = self.clip_grads(&mut grads)?;
        self.opt.step(&grads)?;
        self.steps += 1;
        Ok(norm)
    }

    fn clip_grads(&self, grads: &mut GradStore) -> Result<f64> {
        let mut sq = 0f64;
        for v in &self.vars {
            if let Some(g) = grads.get(v.as_tensor()) {
                sq += g.sqr()?.sum_all()?.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
            }
        }
        let norm = sq.sqrt();
        if self.clip > 0.0 && norm > self.clip && norm.is_finite() {
            let scale = self.clip / norm;
            for v in &self.vars {
                if let Some(g) = grads.get(v.as_tensor()) {
                    let scaled = (g * scale)?;
                    grads.insert(v.as_tensor(), scaled);
                }
            }
        }
        Ok(norm)
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.opt.set_learning_rate(lr);
    }
}
