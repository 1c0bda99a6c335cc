//! Frame-level LF0 model and the Hz-domain LF0 metrics.

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{MdnModelConfig, SamplingMode};
use crate::corpus::PITCH_VOCAB_SIZE;
use crate::features::Lf0FrameRow;
use crate::mdn::{sample_sequence, GmmTensors, MdnSequenceNet, Normalizer};
use crate::nn::{pad_frames, pad_ids, sequence_mask, ParamStore, Trainer};
use crate::{Error, Result};

pub struct Lf0Model {
    pub ps: ParamStore,
    pub net: MdnSequenceNet,
    /// Over log-Hz values of the training corpus.
    pub stats: Normalizer,
    pub vocab_size: usize,
}

pub struct Lf0Batch {
    phoneme: Tensor,
    pitch: Tensor,
    slur: Tensor,
    frame_pos: Tensor,
    pub mask: Tensor,
    pub lengths: Vec<usize>,
    target: Option<Tensor>,
}

impl Lf0Model {
    pub fn new(cfg: &MdnModelConfig, vocab_size: usize, stats: Normalizer, dtype: DType, seed: u64) -> Result<Self> {
        let mut ps = ParamStore::new(dtype, seed);
        let net = MdnSequenceNet::new(
            &mut ps,
            cfg,
            &[
                ("phoneme", vocab_size, cfg.phoneme_embed),
                ("pitch", PITCH_VOCAB_SIZE, cfg.pitch_embed),
                ("slur", 2, cfg.slur_embed),
            ],
            1,
        )?;
        Ok(Self { ps, net, stats, vocab_size })
    }

    /// `targets` are log-Hz tracks, one value per row.
    pub fn batch(&self, seqs: &[&[Lf0FrameRow]], targets: Option<&[&[f32]]>) -> Result<Lf0Batch> {
        if seqs.is_empty() || seqs.iter().any(|s| s.is_empty()) {
            return Err(Error::Shape("LF0 batch needs at least one non-empty sequence".into()));
        }
        let dev = Device::Cpu;
        let dtype = self.ps.dtype();
        let lengths: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        let t = *lengths.iter().max().unwrap_or(&0);
        let ids = |f: &dyn Fn(&Lf0FrameRow) -> u32| -> Vec<Vec<u32>> {
            seqs.iter().map(|s| s.iter().map(f).collect()).collect()
        };
        let pos: Vec<Vec<f32>> = seqs.iter().map(|s| s.iter().map(|r| r.frame_pos).collect()).collect();
        let pos_refs: Vec<&[f32]> = pos.iter().map(|v| v.as_slice()).collect();
        let target = match targets {
            None => None,
            Some(tg) => {
                if tg.len() != seqs.len() || tg.iter().zip(&lengths).any(|(v, n)| v.len() != *n) {
                    return Err(Error::Shape("LF0 targets do not match frame rows".into()));
                }
                if tg.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
                    return Err(Error::Validation("LF0 targets contain non-finite values".into()));
                }
                let z: Vec<Vec<f32>> = tg
                    .iter()
                    .map(|v| v.iter().map(|x| self.stats.apply(f64::from(*x)) as f32).collect())
                    .collect();
                let refs: Vec<&[f32]> = z.iter().map(|v| v.as_slice()).collect();
                Some(pad_frames(&refs, t, 1, dtype, &dev)?)
            }
        };
        Ok(Lf0Batch {
            phoneme: pad_ids(&ids(&|r| r.phoneme_id), t, 0, &dev)?,
            pitch: pad_ids(&ids(&|r| r.pitch_id), t, 0, &dev)?,
            slur: pad_ids(&ids(&|r| u32::from(r.slur)), t, 0, &dev)?,
            frame_pos: pad_frames(&pos_refs, t, 1, dtype, &dev)?,
            mask: sequence_mask(&lengths, t, dtype, &dev)?,
            lengths,
            target,
        })
    }

    pub fn forward(&self, batch: &Lf0Batch) -> Result<GmmTensors> {
        self.net.forward(&[&batch.phoneme, &batch.pitch, &batch.slur], Some(&batch.frame_pos), &batch.mask)
    }

    pub fn loss(&self, batch: &Lf0Batch) -> Result<Tensor> {
        let target = batch
            .target
            .as_ref()
            .ok_or_else(|| Error::Shape("LF0 batch has no targets".into()))?;
        self.forward(batch)?.masked_nll(target, &batch.mask)
    }

    /// Predicted log-Hz track, denormalized and optionally median-filtered.
    pub fn predict(&self, rows: &[Lf0FrameRow], seed: u64, mode: SamplingMode, smooth: bool) -> Result<Vec<f32>> {
        let batch = self.batch(&[rows], None)?;
        let gmm = self.forward(&batch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = sample_sequence(&gmm, 0, rows.len(), mode, &mut rng)?;
        let lf0: Vec<f32> = z.into_iter().map(|v| self.stats.invert(v) as f32).collect();
        Ok(if smooth { median3(&lf0) } else { lf0 })
    }
}

/// One optimizer update; returns the NLL in log-Hz units before the update.
pub fn lf0_train_step(model: &Lf0Model, trainer: &mut Trainer, batch: &Lf0Batch) -> Result<f64> {
    let loss = model.loss(batch)?;
    let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if !value.is_finite() {
        return Err(Error::Validation(format!("LF0 loss is not finite: {value}")));
    }
    trainer.step(&loss)?;
    Ok(value + model.stats.std.ln())
}

/// 3-frame median; the end frames use their two-frame neighbourhood
/// padded by repetition.
pub fn median3(x: &[f32]) -> Vec<f32> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut w = [x[i.saturating_sub(1)], x[i], x[(i + 1).min(n - 1)]];
            w.sort_by(|a, b| a.total_cmp(b));
            w[1]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Lf0Metrics {
    pub rmse: f64,
    pub pcc: f64,
}

/// RMSE and Pearson correlation of `exp(lf0)` in Hz.
pub fn lf0_metrics(predicted: &[f32], reference: &[f32]) -> Result<Lf0Metrics> {
    if predicted.len() != reference.len() || predicted.len() < 2 {
        return Err(Error::Shape(format!(
            "LF0 metrics need equal lengths of at least 2, got {} and {}",
            predicted.len(),
            reference.len()
        )));
    }
    let p: Vec<f64> = predicted.iter().map(|v| f64::from(*v).exp()).collect();
    let r: Vec<f64> = reference.iter().map(|v| f64::from(*v).exp()).collect();
    hz_metrics(&p, &r)
}

/// Same metrics on tracks already in Hz.
pub fn hz_metrics(p: &[f64], r: &[f64]) -> Result<Lf0Metrics> {
    if p.len() != r.len() || p.len() < 2 {
        return Err(Error::Shape("Hz metrics need equal lengths of at least 2".into()));
    }
    let n = p.len() as f64;
    let rmse = (p.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt();
    let mp = p.iter().sum::<f64>() / n;
    let mr = r.iter().sum::<f64>() / n;
    let cov: f64 = p.iter().zip(r).map(|(a, b)| (a - mp) * (b - mr)).sum();
    let vp: f64 = p.iter().map(|a| (a - mp).powi(2)).sum();
    let vr: f64 = r.iter().map(|b| (b - mr).powi(2)).sum();
    let scale = vp.max(vr).max(1.0);
    if vp <= 1e-12 * scale || vr <= 1e-12 * scale {
        return Err(Error::Validation("correlation undefined for a constant track".into()));
    }
    Ok(Lf0Metrics { rmse, pcc: cov / (vp * vr).sqrt() })
}

pub trait Lf0Predictor {
    fn predict_lf0(&self, rows: &[Lf0FrameRow], seed: u64) -> Result<Vec<f32>>;
}

pub struct SampledLf0<'a> {
    pub model: &'a Lf0Model,
    pub mode: SamplingMode,
    pub smooth: bool,
}

impl Lf0Predictor for SampledLf0<'_> {
    fn predict_lf0(&self, rows: &[Lf0FrameRow], seed: u64) -> Result<Vec<f32>> {
        self.model.predict(rows, seed, self.mode, self.smooth)
    }
}
