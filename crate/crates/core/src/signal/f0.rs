//! Frame-level F0 tracking and continuous log-F0.

use std::path::Path;
use std::sync::Arc;

use realfft::num_complex::Complex32;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use super::wav::Waveform;
use crate::config::AudioConfig;
use crate::{Error, Result};

/// Per-frame F0 estimator. Frame `t` is centered on sample `t * hop`,
/// matching the mel frames. `None` marks unvoiced frames.
pub trait PitchTracker {
    fn track(&self, audio: &Waveform, n_frames: usize) -> Result<Vec<Option<f32>>>;
}

/// Continuous log-Hz contour.
#[derive(Debug, Clone, PartialEq)]
pub struct Lf0Track {
    pub values: Vec<f32>,
    pub voiced: Vec<bool>,
}

impl Lf0Track {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn hz(&self) -> Vec<f32> {
        self.values.iter().map(|v| v.exp()).collect()
    }
}

/// Normalized autocorrelation tracker.
///
/// The normalized autocorrelation `r(τ) / sqrt(e₀(τ) e_τ(τ))` is scanned over
/// lags for `[f0_min, f0_max]`. The earliest local peak within
/// `octave_ratio` of the global peak is taken, which suppresses
/// sub-octave picks, then refined by parabolic interpolation.
pub struct AutocorrelationTracker {
    sample_rate: u32,
    hop: usize,
    window: usize,
    min_lag: usize,
    max_lag: usize,
    threshold: f32,
    silence_rms: f32,
    octave_ratio: f32,
    fft_len: usize,
    forward: Arc<dyn RealToComplex<f32>>,
    inverse: Arc<dyn ComplexToReal<f32>>,
}

impl AutocorrelationTracker {
    pub fn new(cfg: &AudioConfig) -> Self {
        let sr = f64::from(cfg.sample_rate);
        let window = cfg.win_length;
        let min_lag = (sr / cfg.f0_max).floor().max(2.0) as usize;
        let max_lag = ((sr / cfg.f0_min).ceil() as usize).min(window - window / 4);
        let fft_len = (2 * window).next_power_of_two();
        let mut planner = RealFftPlanner::<f32>::new();
        Self {
            sample_rate: cfg.sample_rate,
            hop: cfg.hop_length,
            window,
            min_lag,
            max_lag,
            threshold: cfg.voicing_threshold as f32,
            silence_rms: cfg.silence_rms as f32,
            octave_ratio: 0.9,
            fft_len,
            forward: planner.plan_fft_forward(fft_len),
            inverse: planner.plan_fft_inverse(fft_len),
        }
    }

    fn frame_f0(&self, frame: &mut [f32], buf: &mut [f32], spec: &mut [Complex32]) -> Option<f32> {
        let n = frame.len();
        let mean = frame.iter().sum::<f32>() / n as f32;
        frame.iter_mut().for_each(|v| *v -= mean);
        let rms = (frame.iter().map(|v| v * v).sum::<f32>() / n as f32).sqrt();
        if rms < self.silence_rms {
            return None;
        }
        buf.iter_mut().for_each(|v| *v = 0.0);
        buf[..n].copy_from_slice(frame);
        self.forward.process(buf, spec).ok()?;
        for c in spec.iter_mut() {
            *c = Complex32::new(c.norm_sqr(), 0.0);
        }
        self.inverse.process(spec, buf).ok()?;
        let scale = 1.0 / self.fft_len as f32;
        // prefix energies for the overlapping segments
        let mut prefix = vec![0.0f64; n + 1];
        for (i, v) in frame.iter().enumerate() {
            prefix[i + 1] = prefix[i] + f64::from(v * v);
        }
        let total = prefix[n];
        let nacf = |lag: usize| -> f32 {
            let head = prefix[n - lag];
            let tail = total - prefix[lag];
            let denom = (head * tail).sqrt();
            if denom <= 1e-12 {
                0.0
            } else {
                (f64::from(buf[lag] * scale) / denom) as f32
            }
        };
        let lo = self.min_lag;
        let hi = self.max_lag.min(n - 2);
        if hi <= lo + 1 {
            return None;
        }
        let values: Vec<f32> = (lo - 1..=hi + 1).map(nacf).collect();
        let at = |lag: usize| values[lag + 1 - lo];
        let global = (lo..=hi).map(at).fold(f32::MIN, f32::max);
        if global < self.threshold {
            return None;
        }
        let lag = (lo..=hi)
            .find(|&l| at(l) >= at(l - 1) && at(l) >= at(l + 1) && at(l) >= self.octave_ratio * global)?;
        let (a, b, c) = (at(lag - 1), at(lag), at(lag + 1));
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() > 1e-9 { 0.5 * (a - c) / denom } else { 0.0 };
        let period = lag as f32 + shift.clamp(-0.5, 0.5);
        Some(self.sample_rate as f32 / period)
    }
}

impl PitchTracker for AutocorrelationTracker {
    fn track(&self, audio: &Waveform, n_frames: usize) -> Result<Vec<Option<f32>>> {
        if audio.sample_rate != self.sample_rate {
            return Err(Error::Validation(format!(
                "pitch tracker expects {} Hz audio, got {}",
                self.sample_rate, audio.sample_rate
            )));
        }
        let mut frame = vec![0.0f32; self.window];
        let mut buf = self.forward.make_input_vec();
        let mut spec = self.forward.make_output_vec();
        let half = (self.window / 2) as i64;
        let x = &audio.samples;
        Ok((0..n_frames)
            .map(|t| {
                let start = (t * self.hop) as i64 - half;
                for (j, v) in frame.iter_mut().enumerate() {
                    let idx = start + j as i64;
                    *v = if idx >= 0 && (idx as usize) < x.len() { x[idx as usize] } else { 0.0 };
                }
                self.frame_f0(&mut frame, &mut buf, &mut spec)
            })
            .collect())
    }
}

/// F0 supplied by an external tracker in the one-value-per-line format.
pub struct ExternalF0 {
    values: Vec<Option<f32>>,
}

impl ExternalF0 {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self {
            values: read_f0_text(path)?,
        })
    }

    pub fn from_values(values: Vec<Option<f32>>) -> Self {
        Self { values }
    }
}

impl PitchTracker for ExternalF0 {
    fn track(&self, _audio: &Waveform, n_frames: usize) -> Result<Vec<Option<f32>>> {
        let have = self.values.len();
        if have.abs_diff(n_frames) > 1 {
            return Err(Error::Shape(format!(
                "external F0 has {have} frames, audio has {n_frames}"
            )));
        }
        let mut v = self.values.clone();
        let last = v.last().copied().flatten();
        v.resize(n_frames, last);
        Ok(v)
    }
}

/// Parses one F0 value per line; negative values mark unvoiced frames.
pub fn read_f0_text(path: impl AsRef<Path>) -> Result<Vec<Option<f32>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let v: f32 = l
                .trim()
                .parse()
                .map_err(|_| Error::parse(path.display(), i + 1, format!("bad F0 value {l:?}")))?;
            Ok((v > 0.0).then_some(v))
        })
        .collect()
}

pub fn write_f0_text(path: impl AsRef<Path>, f0: &[Option<f32>]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(f0.len() * 10);
    for v in f0 {
        match v {
            Some(hz) => out.push_str(&format!("{hz:.4}\n")),
            None => out.push_str("-1\n"),
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Fills unvoiced frames by linear interpolation in Hz between voiced
/// neighbours (edges copy the nearest voiced value), then takes the log.
pub fn continuous_lf0(raw: &[Option<f32>]) -> Result<Lf0Track> {
    let voiced: Vec<bool> = raw.iter().map(Option::is_some).collect();
    let anchors: Vec<(usize, f32)> = raw
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|hz| (i, hz)))
        .collect();
    let (Some(&first), Some(&last)) = (anchors.first(), anchors.last()) else {
        return Err(Error::Validation("no voiced frames to anchor F0 interpolation".into()));
    };
    let mut hz = vec![0.0f32; raw.len()];
    hz[..=first.0].iter_mut().for_each(|v| *v = first.1);
    hz[last.0..].iter_mut().for_each(|v| *v = last.1);
    for pair in anchors.windows(2) {
        let ((i0, f0), (i1, f1)) = (pair[0], pair[1]);
        for (k, v) in hz[i0..=i1].iter_mut().enumerate() {
            let a = k as f32 / (i1 - i0) as f32;
            *v = f0 + (f1 - f0) * a;
        }
    }
    Ok(Lf0Track {
        values: hz.iter().map(|v| v.ln()).collect(),
        voiced,
    })
}

/// Continuous LF0 with the frame layout of the mel extractor.
pub fn extract_lf0(audio: &Waveform, cfg: &AudioConfig, tracker: &dyn PitchTracker) -> Result<Lf0Track> {
    if audio.samples.is_empty() {
        return Err(Error::Validation("cannot extract F0 from empty audio".into()));
    }
    let audio = if audio.sample_rate == cfg.sample_rate {
        std::borrow::Cow::Borrowed(audio)
    } else {
        std::borrow::Cow::Owned(audio.clone().resampled(cfg.sample_rate))
    };
    let n_frames = audio.samples.len().div_ceil(cfg.hop_length);
    let raw = tracker.track(&audio, n_frames)?;
    continuous_lf0(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tone(f0: impl Fn(f32) -> f32, secs: f32) -> Waveform {
        let sr = 24_000u32;
        let n = (secs * sr as f32) as usize;
        let mut phase = 0.0f32;
        let samples = (0..n)
            .map(|i| {
                let t = i as f32 / sr as f32;
                phase += 2.0 * std::f32::consts::PI * f0(t) / sr as f32;
                0.4 * phase.sin()
            })
            .collect();
        Waveform::new(samples, sr)
    }

    fn median(mut v: Vec<f32>) -> f32 {
        v.sort_by(f32::total_cmp);
        v[v.len() / 2]
    }

    #[test]
    fn sine_220_recovered() {
        let cfg = AudioConfig::default();
        let lf0 = extract_lf0(&tone(|_| 220.0, 1.0), &cfg, &AutocorrelationTracker::new(&cfg)).unwrap();
        assert_eq!(lf0.len(), 80);
        let m = median(lf0.hz());
        assert!((m / 220.0 - 1.0).abs() < 0.03, "{m}");
    }

    #[test]
    fn midi_note_sines() {
        let cfg = AudioConfig::default();
        let tracker = AutocorrelationTracker::new(&cfg);
        for midi in [40.0f32, 55.0, 60.0, 69.0, 76.0, 84.0] {
            let hz = 440.0 * 2f32.powf((midi - 69.0) / 12.0);
            let lf0 = extract_lf0(&tone(|_| hz, 0.5), &cfg, &tracker).unwrap();
            let m = median(lf0.hz());
            assert!((m / hz - 1.0).abs() < 0.03, "midi {midi}: {m} vs {hz}");
        }
    }

    #[test]
    fn gap_interpolates_between_equal_anchors() {
        let raw: Vec<Option<f32>> = [vec![Some(200.0); 5], vec![None; 6], vec![Some(200.0); 5]].concat();
        let t = continuous_lf0(&raw).unwrap();
        for v in &t.values[5..11] {
            assert!((v - 200f32.ln()).abs() < 1e-6);
        }
        assert_eq!(t.voiced.iter().filter(|v| !**v).count(), 6);
    }

    #[test]
    fn edges_take_nearest_voiced() {
        let t = continuous_lf0(&[None, None, Some(100.0), Some(300.0), None]).unwrap();
        let hz = t.hz();
        assert!((hz[0] - 100.0).abs() < 1e-3 && (hz[4] - 300.0).abs() < 1e-3);
    }

    #[test]
    fn white_noise_is_rejected() {
        let cfg = AudioConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let noise = Waveform::new((0..24_000).map(|_| rng.gen_range(-0.5..0.5)).collect(), 24_000);
        let tracker = AutocorrelationTracker::new(&cfg);
        let raw = tracker.track(&noise, 80).unwrap();
        assert!(raw.iter().all(Option::is_none));
        assert!(extract_lf0(&noise, &cfg, &tracker).is_err());
    }

    #[test]
    fn glide_has_no_octave_jumps() {
        let cfg = AudioConfig::default();
        let lf0 = extract_lf0(&tone(|t| 150.0 * 2f32.powf(t), 1.5), &cfg, &AutocorrelationTracker::new(&cfg))
            .unwrap();
        for w in lf0.values.windows(2) {
            assert!((w[1] - w[0]).abs() < std::f32::consts::LN_2, "{w:?}");
        }
        let hz = lf0.hz();
        assert!(hz.iter().all(|v| (50.0..=1200.0).contains(v)));
    }

    #[test]
    fn external_text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f0.txt");
        let vals = vec![Some(100.0), None, Some(250.5)];
        write_f0_text(&p, &vals).unwrap();
        assert_eq!(read_f0_text(&p).unwrap(), vals);
        let ext = ExternalF0::load(&p).unwrap();
        let got = ext.track(&Waveform::new(vec![0.0; 10], 24_000), 4).unwrap();
        assert_eq!(got.len(), 4);
        assert!(ext.track(&Waveform::new(vec![], 24_000), 10).is_err());
    }
}
