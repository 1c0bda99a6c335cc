use std::sync::Arc;

use realfft::num_complex::Complex32;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

/// Centered short-time Fourier transform. Frame `t` covers an `n_fft`
/// buffer centered on sample `t * hop`, with a periodic Hann window of
/// `win_length` in its middle.
pub struct Stft {
    n_fft: usize,
    hop: usize,
    window: Vec<f32>,
    window_offset: usize,
    forward: Arc<dyn RealToComplex<f32>>,
    inverse: Arc<dyn ComplexToReal<f32>>,
}

impl Stft {
    pub fn new(n_fft: usize, win_length: usize, hop: usize) -> Self {
        assert!(win_length <= n_fft && hop > 0);
        let window = (0..win_length)
            .map(|i| {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win_length as f64).cos()
            })
            .map(|w| w as f32)
            .collect();
        let mut planner = RealFftPlanner::<f32>::new();
        Self {
            n_fft,
            hop,
            window,
            window_offset: (n_fft - win_length) / 2,
            forward: planner.plan_fft_forward(n_fft),
            inverse: planner.plan_fft_inverse(n_fft),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        n_samples.div_ceil(self.hop)
    }

    /// Factor mapping |X| of a full-scale sinusoid to its amplitude.
    pub fn magnitude_scale(&self) -> f32 {
        2.0 / self.window.iter().sum::<f32>()
    }

    pub fn forward(&self, signal: &[f32]) -> Vec<Vec<Complex32>> {
        self.forward_frames(signal, self.n_frames(signal.len()))
    }

    pub fn forward_frames(&self, signal: &[f32], n_frames: usize) -> Vec<Vec<Complex32>> {
        let mut buf = self.forward.make_input_vec();
        let mut scratch = self.forward.make_scratch_vec();
        let half = (self.n_fft / 2) as i64;
        (0..n_frames)
            .map(|t| {
                let start = (t * self.hop) as i64 - half;
                buf.iter_mut().for_each(|v| *v = 0.0);
                for (j, w) in self.window.iter().enumerate() {
                    let idx = start + (self.window_offset + j) as i64;
                    if idx >= 0 && (idx as usize) < signal.len() {
                        buf[self.window_offset + j] = signal[idx as usize] * w;
                    }
                }
                let mut out = self.forward.make_output_vec();
                self.forward
                    .process_with_scratch(&mut buf, &mut out, &mut scratch)
                    .expect("fft sizes match");
                out
            })
            .collect()
    }

    /// Weighted overlap-add inverse, `frames.len() * hop` samples long.
    pub fn inverse(&self, frames: &[Vec<Complex32>]) -> Vec<f32> {
        let len = frames.len() * self.hop;
        let mut out = vec![0.0f32; len];
        let mut norm = vec![0.0f32; len];
        let mut spec = self.inverse.make_input_vec();
        let mut time = self.inverse.make_output_vec();
        let mut scratch = self.inverse.make_scratch_vec();
        let half = (self.n_fft / 2) as i64;
        let scale = 1.0 / self.n_fft as f32;
        for (t, frame) in frames.iter().enumerate() {
            spec.copy_from_slice(frame);
            spec[0].im = 0.0;
            let last = spec.len() - 1;
            spec[last].im = 0.0;
            self.inverse
                .process_with_scratch(&mut spec, &mut time, &mut scratch)
                .expect("fft sizes match");
            let start = (t * self.hop) as i64 - half;
            for (j, w) in self.window.iter().enumerate() {
                let idx = start + (self.window_offset + j) as i64;
                if idx >= 0 && (idx as usize) < len {
                    out[idx as usize] += time[self.window_offset + j] * scale * w;
                    norm[idx as usize] += w * w;
                }
            }
        }
        for (o, n) in out.iter_mut().zip(&norm) {
            if *n > 1e-8 {
                *o /= n;
            }
        }
        out
    }
}
