use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::{Error, Result};

/// Mono samples in [-1, 1] with their rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Returns self unchanged when already at `rate`.
    pub fn resampled(self, rate: u32) -> Self {
        if self.sample_rate == rate {
            return self;
        }
        let samples = resample(&self.samples, self.sample_rate, rate);
        Self::new(samples, rate)
    }

    pub fn rms(&self) -> f32 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|x| x * x).sum::<f32>() / self.samples.len() as f32).sqrt()
    }
}

/// Reads PCM WAV (16-bit integer or 32-bit float). Multi-channel input is
/// averaged to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(format!("audio file {}", path.display())));
    }
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels.max(1));
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Int, bits) if bits <= 32 => {
            let scale = (1i64 << (bits - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (SampleFormat::Float, 32) => reader.samples::<f32>().collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::Validation(format!(
                "{}: unsupported WAV format {fmt:?}/{bits}",
                path.display()
            )))
        }
    };
    let samples = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f32>() / channels as f32)
        .collect();
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Writes 16-bit PCM mono; samples are clipped to [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path.as_ref(), spec)?;
    for &s in &wave.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v)?;
    }
    w.finalize()?;
    Ok(())
}

/// Band-limited resampling with a Hann-windowed sinc kernel.
pub fn resample(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    const HALF_TAPS: i64 = 32;
    let ratio = f64::from(to) / f64::from(from);
    let cutoff = ratio.min(1.0);
    let out_len = (input.len() as f64 * ratio).round() as usize;
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = i as f64 / ratio;
        let center = pos.floor() as i64;
        let mut acc = 0.0f64;
        let mut norm = 0.0f64;
        for k in (center - HALF_TAPS + 1)..=(center + HALF_TAPS) {
            let x = pos - k as f64;
            let arg = x * cutoff;
            let sinc = if arg.abs() < 1e-12 {
                1.0
            } else {
                (std::f64::consts::PI * arg).sin() / (std::f64::consts::PI * arg)
            };
            let w = 0.5 + 0.5 * (std::f64::consts::PI * x / HALF_TAPS as f64).cos();
            let w = if x.abs() >= HALF_TAPS as f64 { 0.0 } else { w };
            let c = sinc * w;
            norm += c;
            if k >= 0 && (k as usize) < input.len() {
                acc += c * f64::from(input[k as usize]);
            }
        }
        out.push(if norm.abs() > 1e-12 { (acc / norm) as f32 } else { 0.0 });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let w = Waveform::new((0..240).map(|i| (i as f32 / 240.0) - 0.5).collect(), 24_000);
        write_wav(&p, &w).unwrap();
        let back = read_wav(&p).unwrap();
        assert_eq!(back.sample_rate, 24_000);
        assert_eq!(back.samples.len(), 240);
        for (a, b) in w.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn missing_file_is_missing_artifact() {
        let err = read_wav("/nonexistent/x.wav").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn resample_preserves_tone() {
        let from = 48_000u32;
        let x: Vec<f32> = (0..4800)
            .map(|i| (2.0 * std::f32::consts::PI * 440.0 * i as f32 / from as f32).sin())
            .collect();
        let y = resample(&x, from, 24_000);
        assert_eq!(y.len(), 2400);
        // compare against the analytic tone away from the edges
        for (i, v) in y.iter().enumerate().skip(100).take(2200) {
            let t = i as f32 / 24_000.0;
            let expect = (2.0 * std::f32::consts::PI * 440.0 * t).sin();
            assert!((v - expect).abs() < 2e-2, "{i}: {v} vs {expect}");
        }
    }
}
