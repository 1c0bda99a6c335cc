//! Mel-to-waveform inversion: non-negative deconvolution of the filterbank
//! followed by Griffin-Lim phase reconstruction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realfft::num_complex::Complex32;

use super::mel::{MelFilterbank, MelSpectrogram};
use super::stft::Stft;
use super::wav::Waveform;
use crate::config::AudioConfig;

const DECONV_ITERS: usize = 100;

/// Recovers a linear magnitude spectrum from one frame of mel amplitudes
/// with Richardson-Lucy updates, which keep the estimate non-negative and
/// concentrate energy where overlapping bands agree.
fn deconvolve(fb: &MelFilterbank, mel: &[f32], coverage: &[f32], out: &mut [f32]) {
    if mel.iter().all(|v| *v <= 0.0) {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut pred = vec![0.0f32; mel.len()];
    let mut ratio = vec![0.0f32; mel.len()];
    let mut back = vec![0.0f32; out.len()];
    fb.apply_transpose(mel, out);
    for (o, c) in out.iter_mut().zip(coverage) {
        *o = if *c > 0.0 { *o / c } else { 0.0 };
    }
    for _ in 0..DECONV_ITERS {
        fb.apply(out, &mut pred);
        for ((r, m), p) in ratio.iter_mut().zip(mel).zip(&pred) {
            *r = if *p > 1e-12 { m / p } else { 0.0 };
        }
        fb.apply_transpose(&ratio, &mut back);
        for ((o, b), c) in out.iter_mut().zip(&back).zip(coverage) {
            *o = if *c > 0.0 { *o * b / c } else { 0.0 };
        }
    }
}

/// Audio of `T * hop` samples. Deterministic for a given `seed`.
pub fn invert_mel(mel: &MelSpectrogram, cfg: &AudioConfig, iterations: usize, seed: u64) -> Waveform {
    let n_frames = mel.n_frames();
    let stft = Stft::new(cfg.n_fft, cfg.win_length, cfg.hop_length);
    if n_frames == 0 {
        return Waveform::new(Vec::new(), cfg.sample_rate);
    }
    let fb = MelFilterbank::from_config(cfg);
    let ones = vec![1.0f32; fb.n_mels()];
    let mut coverage = vec![0.0f32; fb.n_bins()];
    fb.apply_transpose(&ones, &mut coverage);
    let floor = cfg.mel_floor as f32;
    let inv_scale = 1.0 / stft.magnitude_scale();

    let mut amps = vec![0.0f32; fb.n_mels()];
    let magnitudes: Vec<Vec<f32>> = mel
        .frames
        .rows()
        .into_iter()
        .map(|row| {
            for (a, v) in amps.iter_mut().zip(row) {
                *a = (v.exp() - floor).max(0.0);
            }
            let mut lin = vec![0.0f32; fb.n_bins()];
            deconvolve(&fb, &amps, &coverage, &mut lin);
            lin.iter_mut().for_each(|v| *v *= inv_scale);
            lin
        })
        .collect();

    if magnitudes.iter().flatten().all(|v| *v == 0.0) {
        return Waveform::new(vec![0.0; n_frames * cfg.hop_length], cfg.sample_rate);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec: Vec<Vec<Complex32>> = magnitudes
        .iter()
        .map(|m| {
            m.iter()
                .map(|&a| Complex32::from_polar(a, rng.gen_range(0.0..std::f32::consts::TAU)))
                .collect()
        })
        .collect();
    let mut signal = stft.inverse(&spec);
    for _ in 0..iterations {
        let rebuilt = stft.forward_frames(&signal, n_frames);
        for ((frame, est), mag) in spec.iter_mut().zip(&rebuilt).zip(&magnitudes) {
            for ((c, e), &a) in frame.iter_mut().zip(est).zip(mag) {
                let n = e.norm();
                *c = if n > 1e-12 { e * (a / n) } else { Complex32::new(a, 0.0) };
            }
        }
        signal = stft.inverse(&spec);
    }
    Waveform::new(signal, cfg.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::extract_mel;
    use ndarray::Array2;
    use realfft::RealFftPlanner;

    /// Frequency of the largest FFT bin over the whole signal, refined by
    /// parabolic interpolation of log magnitudes.
    fn dominant_hz(x: &[f32], sr: u32) -> f32 {
        let n = x.len().next_power_of_two() * 2;
        let mut buf = vec![0.0f32; n];
        for (i, v) in x.iter().enumerate() {
            let w = 0.5 - 0.5 * (2.0 * std::f32::consts::PI * i as f32 / x.len() as f32).cos();
            buf[i] = v * w;
        }
        let fft = RealFftPlanner::<f32>::new().plan_fft_forward(n);
        let mut out = fft.make_output_vec();
        fft.process(&mut buf, &mut out).unwrap();
        let mags: Vec<f32> = out.iter().map(|c| c.norm().max(1e-20).ln()).collect();
        let k = (1..mags.len() - 1).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        let (a, b, c) = (mags[k - 1], mags[k], mags[k + 1]);
        let shift = 0.5 * (a - c) / (a - 2.0 * b + c);
        (k as f32 + shift) * sr as f32 / n as f32
    }

    #[test]
    fn sine_round_trip_keeps_frequency() {
        let cfg = AudioConfig::default();
        let sr = cfg.sample_rate;
        let x: Vec<f32> = (0..sr as usize)
            .map(|i| 0.5 * (2.0 * std::f32::consts::PI * 440.0 * i as f32 / sr as f32).sin())
            .collect();
        assert!((dominant_hz(&x, sr) - 440.0).abs() < 1.0);
        let mel = extract_mel(&Waveform::new(x, sr), &cfg).unwrap();
        let y = invert_mel(&mel, &cfg, 32, 0);
        assert_eq!(y.samples.len(), 80 * cfg.hop_length);
        let f = dominant_hz(&y.samples, sr);
        assert!((f / 440.0 - 1.0).abs() < 0.02, "{f}");
    }

    #[test]
    fn floor_mel_is_silent() {
        let cfg = AudioConfig::default();
        let mel = MelSpectrogram {
            frames: Array2::from_elem((20, cfg.n_mels), cfg.log_floor()),
            frame_period: cfg.frame_period(),
            sample_rate: cfg.sample_rate,
        };
        let y = invert_mel(&mel, &cfg, 8, 1);
        assert!(y.rms() < 1e-3);
    }

    #[test]
    fn empty_mel_gives_empty_audio() {
        let cfg = AudioConfig::default();
        let mel = MelSpectrogram {
            frames: Array2::zeros((0, cfg.n_mels)),
            frame_period: cfg.frame_period(),
            sample_rate: cfg.sample_rate,
        };
        assert!(invert_mel(&mel, &cfg, 8, 0).samples.is_empty());
    }

    #[test]
    fn same_seed_same_audio() {
        let cfg = AudioConfig::default();
        let x: Vec<f32> = (0..6000).map(|i| (i as f32 * 0.07).sin() * 0.3).collect();
        let mel = extract_mel(&Waveform::new(x, cfg.sample_rate), &cfg).unwrap();
        assert_eq!(invert_mel(&mel, &cfg, 4, 9), invert_mel(&mel, &cfg, 4, 9));
    }
}
