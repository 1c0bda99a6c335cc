use ndarray::Array2;

use super::stft::Stft;
use super::wav::Waveform;
use crate::config::AudioConfig;
use crate::{Error, Result};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters evenly spaced on the mel scale, peak height 1.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Corner frequencies: `n_mels + 2` points, band `b` peaks at `edges[b + 1]`.
    edges: Vec<f64>,
    bin_hz: f64,
    /// `(first_bin, weights)` per band.
    bands: Vec<(usize, Vec<f32>)>,
    n_bins: usize,
}

impl MelFilterbank {
    pub fn new(sample_rate: u32, n_fft: usize, n_mels: usize, fmin: f64, fmax: f64) -> Self {
        let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = n_fft / 2 + 1;
        let bin_hz = f64::from(sample_rate) / n_fft as f64;
        let mut fb = Self {
            edges,
            bin_hz,
            bands: Vec::with_capacity(n_mels),
            n_bins,
        };
        for b in 0..n_mels {
            let weights: Vec<(usize, f32)> = (0..n_bins)
                .map(|k| (k, fb.response(b, k as f64 * bin_hz) as f32))
                .filter(|(_, w)| *w > 0.0)
                .collect();
            let first = weights.first().map_or(0, |(k, _)| *k);
            fb.bands.push((first, weights.into_iter().map(|(_, w)| w).collect()));
        }
        fb
    }

    pub fn from_config(cfg: &AudioConfig) -> Self {
        Self::new(cfg.sample_rate, cfg.n_fft, cfg.n_mels, cfg.fmin, cfg.fmax)
    }

    pub fn n_mels(&self) -> usize {
        self.bands.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn center_frequencies(&self) -> &[f64] {
        &self.edges[1..self.edges.len() - 1]
    }

    /// Response of band `b` at frequency `hz`.
    pub fn response(&self, b: usize, hz: f64) -> f64 {
        let (l, c, r) = (self.edges[b], self.edges[b + 1], self.edges[b + 2]);
        let up = (hz - l) / (c - l);
        let down = (r - hz) / (r - c);
        up.min(down).max(0.0)
    }

    /// Band whose triangle responds most strongly to `hz`.
    pub fn band_of(&self, hz: f64) -> usize {
        (0..self.n_mels())
            .max_by(|&a, &b| self.response(a, hz).total_cmp(&self.response(b, hz)))
            .unwrap_or(0)
    }

    pub fn apply(&self, magnitudes: &[f32], out: &mut [f32]) {
        for (o, (first, w)) in out.iter_mut().zip(&self.bands) {
            *o = w
                .iter()
                .zip(&magnitudes[*first..])
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    /// Transposed filterbank: spreads band values back onto FFT bins.
    pub fn apply_transpose(&self, bands: &[f32], out: &mut [f32]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (v, (first, w)) in bands.iter().zip(&self.bands) {
            for (o, wk) in out[*first..].iter_mut().zip(w) {
                *o += v * wk;
            }
        }
    }

    pub fn bin_hz(&self) -> f64 {
        self.bin_hz
    }
}

/// `T x n_mels` natural-log mel amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Array2<f32>,
    pub frame_period: f64,
    pub sample_rate: u32,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.frames.ncols()
    }
}

/// Log-mel spectrogram with `ceil(samples / hop)` frames. Audio at other
/// rates is resampled first.
pub fn extract_mel(audio: &Waveform, cfg: &AudioConfig) -> Result<MelSpectrogram> {
    if audio.samples.is_empty() {
        return Err(Error::Validation("cannot extract mel from empty audio".into()));
    }
    let audio = if audio.sample_rate == cfg.sample_rate {
        std::borrow::Cow::Borrowed(audio)
    } else {
        std::borrow::Cow::Owned(audio.clone().resampled(cfg.sample_rate))
    };
    let stft = Stft::new(cfg.n_fft, cfg.win_length, cfg.hop_length);
    let fb = MelFilterbank::from_config(cfg);
    let spec = stft.forward(&audio.samples);
    let scale = stft.magnitude_scale();
    let floor = cfg.mel_floor as f32;
    let mut frames = Array2::<f32>::zeros((spec.len(), cfg.n_mels));
    let mut mags = vec![0.0f32; stft.n_bins()];
    let mut bands = vec![0.0f32; cfg.n_mels];
    for (t, frame) in spec.iter().enumerate() {
        for (m, c) in mags.iter_mut().zip(frame) {
            *m = c.norm() * scale;
        }
        fb.apply(&mags, &mut bands);
        for (dst, v) in frames.row_mut(t).iter_mut().zip(&bands) {
            *dst = v.max(floor).ln();
        }
    }
    Ok(MelSpectrogram {
        frames,
        frame_period: cfg.frame_period(),
        sample_rate: cfg.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(hz: f32, secs: f32, sr: u32) -> Waveform {
        let n = (secs * sr as f32) as usize;
        Waveform::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * std::f32::consts::PI * hz * i as f32 / sr as f32).sin())
                .collect(),
            sr,
        )
    }

    #[test]
    fn one_second_is_80_frames() {
        let cfg = AudioConfig::default();
        let mel = extract_mel(&sine(440.0, 1.0, 24_000), &cfg).unwrap();
        assert_eq!(mel.frames.dim(), (80, 80));
        assert!(mel.frames.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn silence_sits_on_the_floor() {
        let cfg = AudioConfig::default();
        let mel = extract_mel(&Waveform::new(vec![0.0; 12_000], 24_000), &cfg).unwrap();
        assert!(mel.frames.iter().all(|&v| v <= cfg.log_floor()));
    }

    #[test]
    fn empty_audio_is_an_error() {
        assert!(extract_mel(&Waveform::new(vec![], 24_000), &AudioConfig::default()).is_err());
    }

    #[test]
    fn sine_energy_peaks_in_its_band() {
        let cfg = AudioConfig::default();
        let fb = MelFilterbank::from_config(&cfg);
        // independent of the STFT path: the band with the largest triangle
        // response at 440 Hz, found from the center frequencies
        let centers = fb.center_frequencies();
        let expected = (0..centers.len())
            .filter(|&b| {
                let lo = if b == 0 { cfg.fmin } else { centers[b - 1] };
                let hi = if b + 1 == centers.len() { cfg.fmax } else { centers[b + 1] };
                lo < 440.0 && 440.0 < hi
            })
            .max_by(|&a, &b| {
                (440.0 - centers[a]).abs().total_cmp(&(440.0 - centers[b]).abs()).reverse()
            })
            .unwrap();
        assert_eq!(expected, fb.band_of(440.0));
        let mel = extract_mel(&sine(440.0, 1.0, 24_000), &cfg).unwrap();
        let row = mel.frames.row(40);
        let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(argmax, expected);
    }

    #[test]
    fn resamples_other_rates() {
        let cfg = AudioConfig::default();
        let mel = extract_mel(&sine(440.0, 0.5, 16_000), &cfg).unwrap();
        assert_eq!(mel.n_frames(), 40);
    }

    #[test]
    fn mel_scale_inverse() {
        for hz in [0.0, 100.0, 440.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }
}
