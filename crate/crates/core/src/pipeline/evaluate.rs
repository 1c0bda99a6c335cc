//! Held-out metrics. Each stage is reached through a small trait so the
//! report can be produced for trained models and for a reference oracle
//! that echoes the targets.

use std::path::Path;

use candle_core::DType;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::dataset::{CachedUtterance, CorpusStats};
use super::train::AmData;
use crate::acoustic::AcousticNet;
use crate::config::SamplingMode;
use crate::corpus::Style;
use crate::duration::{duration_accuracy, DurationModel};
use crate::features::DurationSpec;
use crate::lf0::{lf0_metrics, Lf0Model};
use crate::nn::with_large_stack;
use crate::{plot, Error, Result};

pub trait DurationSource {
    fn durations(&self, u: &CachedUtterance) -> Result<DurationSpec>;
}

/// LF0 in log-Hz at the utterance's reference frame layout.
pub trait Lf0Source {
    fn lf0(&self, u: &CachedUtterance) -> Result<Vec<f32>>;
}

/// Mel frames in the normalized space of the corpus statistics.
pub trait MelSource {
    fn teacher_forced(&self, u: &CachedUtterance) -> Result<Array2<f32>>;
    fn free_running(&self, u: &CachedUtterance) -> Result<Array2<f32>>;
}

/// Returns the cached targets unchanged.
pub struct Reference<'a> {
    pub stats: &'a CorpusStats,
}

impl DurationSource for Reference<'_> {
    fn durations(&self, u: &CachedUtterance) -> Result<DurationSpec> {
        Ok(u.durations())
    }
}

impl Lf0Source for Reference<'_> {
    fn lf0(&self, u: &CachedUtterance) -> Result<Vec<f32>> {
        Ok(u.lf0.clone())
    }
}

impl MelSource for Reference<'_> {
    fn teacher_forced(&self, u: &CachedUtterance) -> Result<Array2<f32>> {
        Ok(self.stats.normalize_mel(&u.mel))
    }

    fn free_running(&self, u: &CachedUtterance) -> Result<Array2<f32>> {
        Ok(self.stats.normalize_mel(&u.mel))
    }
}

pub struct ModelDurations<'a> {
    pub model: &'a DurationModel,
    pub mode: SamplingMode,
    pub seed: u64,
}

impl DurationSource for ModelDurations<'_> {
    fn durations(&self, u: &CachedUtterance) -> Result<DurationSpec> {
        self.model.predict(&u.phoneme_rows(), self.seed, self.mode)
    }
}

pub struct ModelLf0<'a> {
    pub model: &'a Lf0Model,
    pub mode: SamplingMode,
    pub smooth: bool,
    pub seed: u64,
}

impl Lf0Source for ModelLf0<'_> {
    fn lf0(&self, u: &CachedUtterance) -> Result<Vec<f32>> {
        self.model.predict(&u.lf0_rows(), self.seed, self.mode, self.smooth)
    }
}

/// Acoustic model driven by reference durations and LF0; dropout off.
pub struct ModelMel<'a> {
    pub net: &'a AcousticNet,
    pub stats: &'a CorpusStats,
    /// Keep PreNet dropout on in free-running generation.
    pub dropout_seed: Option<u64>,
}

fn to_array(t: &candle_core::Tensor, frames: usize) -> Result<Array2<f32>> {
    let v = t.squeeze(0)?.to_dtype(DType::F32)?.to_vec2::<f32>()?;
    let cols = v.first().map_or(0, Vec::len);
    Ok(Array2::from_shape_fn((frames, cols), |(i, j)| v[i][j]))
}

impl MelSource for ModelMel<'_> {
    fn teacher_forced(&self, u: &CachedUtterance) -> Result<Array2<f32>> {
        let data = AmData::new(&[u], self.stats);
        let (batch, target) = data.batch(&[0], self.net.dtype())?;
        let out = with_large_stack(|| self.net.forward_teacher_forced(&batch, &target, None))?;
        to_array(&out.mel_post, u.frames())
    }

    fn free_running(&self, u: &CachedUtterance) -> Result<Array2<f32>> {
        let data = AmData::new(&[u], self.stats);
        let (batch, _) = data.batch(&[0], self.net.dtype())?;
        let mut rng = self.dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let mel = with_large_stack(|| self.net.infer(&batch, rng.as_mut()))?;
        to_array(&mel, u.frames())
    }
}

/// A metric value, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub value: Option<f64>,
    pub reason: Option<String>,
}

impl Metric {
    fn from(r: Result<f64>) -> Self {
        match r {
            Ok(v) => Self { value: Some(v), reason: None },
            Err(e) => Self::missing(e.to_string()),
        }
    }

    pub fn missing(reason: impl Into<String>) -> Self {
        Self { value: None, reason: Some(reason.into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub utterances: usize,
    pub singing_utterances: usize,
    pub duration_accuracy: Metric,
    pub lf0_rmse_hz: Metric,
    pub lf0_pcc: Metric,
    pub mel_mse_teacher_forced: Metric,
    pub mel_mse_free_running: Metric,
}

/// Stage sources for [`evaluate`]; `Err` carries why a stage is absent.
pub struct Sources<'a> {
    pub durations: std::result::Result<&'a dyn DurationSource, String>,
    pub lf0: std::result::Result<&'a dyn Lf0Source, String>,
    pub mel: std::result::Result<&'a dyn MelSource, String>,
}

fn singing<'a>(utts: &[&'a CachedUtterance]) -> Result<Vec<&'a CachedUtterance>> {
    let s: Vec<&CachedUtterance> = utts.iter().copied().filter(|u| u.style == Style::Singing).collect();
    if s.is_empty() {
        return Err(Error::Validation("no singing utterances in the evaluation set".into()));
    }
    Ok(s)
}

/// Duration accuracy pooled over every phoneme of the singing utterances.
fn pooled_accuracy(utts: &[&CachedUtterance], src: &dyn DurationSource) -> Result<f64> {
    let (mut p, mut r) = (Vec::new(), Vec::new());
    for u in singing(utts)? {
        p.extend_from_slice(src.durations(u)?.counts());
        r.extend_from_slice(u.durations().counts());
    }
    duration_accuracy(&p, &r)
}

fn pooled_lf0(utts: &[&CachedUtterance], src: &dyn Lf0Source) -> Result<(f64, f64)> {
    let (mut p, mut r) = (Vec::new(), Vec::new());
    for u in singing(utts)? {
        p.extend(src.lf0(u)?);
        r.extend_from_slice(&u.lf0);
    }
    let m = lf0_metrics(&p, &r)?;
    Ok((m.rmse, m.pcc))
}

/// Mean squared error over every valid frame and band, normalized space.
fn pooled_mse(
    utts: &[&CachedUtterance],
    stats: &CorpusStats,
    gen: impl Fn(&CachedUtterance) -> Result<Array2<f32>>,
) -> Result<f64> {
    let (mut sum, mut n) = (0f64, 0usize);
    for u in utts {
        let pred = gen(u)?;
        let target = stats.normalize_mel(&u.mel);
        if pred.dim() != target.dim() {
            return Err(Error::Shape(format!("{}: generated {:?}, reference {:?}", u.id, pred.dim(), target.dim())));
        }
        sum += pred.iter().zip(target.iter()).map(|(a, b)| f64::from(a - b).powi(2)).sum::<f64>();
        n += pred.len();
    }
    if n == 0 {
        return Err(Error::Validation("evaluation set is empty".into()));
    }
    Ok(sum / n as f64)
}

pub fn evaluate(utts: &[&CachedUtterance], stats: &CorpusStats, src: &Sources<'_>) -> EvalReport {
    let duration_accuracy = match src.durations {
        Ok(d) => Metric::from(pooled_accuracy(utts, d)),
        Err(ref why) => Metric::missing(why),
    };
    let (lf0_rmse_hz, lf0_pcc) = match src.lf0 {
        Ok(l) => match pooled_lf0(utts, l) {
            Ok((rmse, pcc)) => (Metric::from(Ok(rmse)), Metric::from(Ok(pcc))),
            Err(e) => (Metric::missing(e.to_string()), Metric::missing(e.to_string())),
        },
        Err(ref why) => (Metric::missing(why), Metric::missing(why)),
    };
    let (mel_mse_teacher_forced, mel_mse_free_running) = match src.mel {
        Ok(m) => (
            Metric::from(pooled_mse(utts, stats, |u| m.teacher_forced(u))),
            Metric::from(pooled_mse(utts, stats, |u| m.free_running(u))),
        ),
        Err(ref why) => (Metric::missing(why), Metric::missing(why)),
    };
    EvalReport {
        utterances: utts.len(),
        singing_utterances: utts.iter().filter(|u| u.style == Style::Singing).count(),
        duration_accuracy,
        lf0_rmse_hz,
        lf0_pcc,
        mel_mse_teacher_forced,
        mel_mse_free_running,
    }
}

/// Mel and LF0 comparison figures for one utterance: reference against
/// whichever stages are available.
pub fn write_plots(u: &CachedUtterance, stats: &CorpusStats, src: &Sources<'_>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut mels = vec![stats.normalize_mel(&u.mel)];
    if let Ok(m) = src.mel {
        mels.push(m.teacher_forced(u)?);
        mels.push(m.free_running(u)?);
    }
    let refs: Vec<&Array2<f32>> = mels.iter().collect();
    plot::mel_comparison(&refs, &dir.join(format!("{}.mel.png", u.id)))?;
    let mut tracks = vec![u.lf0.iter().map(|v| f64::from(*v).exp()).collect::<Vec<f64>>()];
    if let Ok(l) = src.lf0 {
        tracks.push(l.lf0(u)?.iter().map(|v| f64::from(*v).exp()).collect());
    }
    let refs: Vec<&[f64]> = tracks.iter().map(|t| t.as_slice()).collect();
    plot::lf0_comparison(&refs, &dir.join(format!("{}.lf0.png", u.id)))
}
