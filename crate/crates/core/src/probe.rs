//! Linear probe: logistic regression used to measure how much style
//! information a latent representation carries.

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct LinearProbe {
    weights: Vec<f64>,
    bias: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl LinearProbe {
    /// Full-batch gradient descent on standardized features.
    pub fn fit(x: &[Vec<f32>], y: &[bool], iterations: usize, l2: f64) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Shape("probe needs one label per non-empty row".into()));
        }
        let d = x[0].len();
        if x.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("probe rows differ in width".into()));
        }
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for r in x {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += f64::from(*v) / n;
            }
        }
        let mut scale = vec![0.0; d];
        for r in x {
            for ((s, v), m) in scale.iter_mut().zip(r).zip(&mean) {
                *s += (f64::from(*v) - m).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if s.sqrt() > 1e-8 { 1.0 / s.sqrt() } else { 0.0 };
        }
        let mut probe = Self { weights: vec![0.0; d], bias: 0.0, mean, scale };
        let z: Vec<Vec<f64>> = x.iter().map(|r| probe.standardize(r)).collect();
        let lr = 0.5;
        for _ in 0..iterations {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (row, label) in z.iter().zip(y) {
                let err = sigmoid(probe.logit_std(row)) - if *label { 1.0 } else { 0.0 };
                for (g, v) in gw.iter_mut().zip(row) {
                    *g += err * v / n;
                }
                gb += err / n;
            }
            for (w, g) in probe.weights.iter_mut().zip(&gw) {
                *w -= lr * (g + l2 * *w);
            }
            probe.bias -= lr * gb;
        }
        Ok(probe)
    }

    fn standardize(&self, r: &[f32]) -> Vec<f64> {
        r.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (f64::from(*v) - m) * s)
            .collect()
    }

    fn logit_std(&self, z: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(z).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict(&self, r: &[f32]) -> bool {
        self.logit_std(&self.standardize(r)) > 0.0
    }

    pub fn accuracy(&self, x: &[Vec<f32>], y: &[bool]) -> f64 {
        if x.is_empty() {
            return 0.0;
        }
        let hits = x.iter().zip(y).filter(|(r, l)| self.predict(r) == **l).count();
        hits as f64 / x.len() as f64
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}
