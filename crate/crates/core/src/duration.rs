//! Phoneme-level duration model and the duration accuracy metric.

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{MdnModelConfig, SamplingMode};
use crate::features::{DurationSpec, PhonemeFeatureRow};
use crate::mdn::{sample_sequence, GmmTensors, MdnSequenceNet, Normalizer};
use crate::nn::{pad_frames, pad_ids, sequence_mask, ParamStore, Trainer};
use crate::{Error, Result};

/// Normalization fitted on the training corpus and stored with the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    /// Over `ln(note_dur)`.
    pub note: Normalizer,
    /// Over frame counts.
    pub frames: Normalizer,
}

impl DurationStats {
    pub fn fit(rows: &[&[PhonemeFeatureRow]], targets: &[&DurationSpec]) -> Result<Self> {
        Ok(Self {
            note: Normalizer::fit(rows.iter().flat_map(|r| r.iter()).map(|r| f64::from(r.note_dur).ln()))?,
            frames: Normalizer::fit(targets.iter().flat_map(|d| d.counts()).map(|c| f64::from(*c)))?,
        })
    }
}

pub struct DurationModel {
    pub ps: ParamStore,
    pub net: MdnSequenceNet,
    pub stats: DurationStats,
    pub vocab_size: usize,
}

pub struct DmBatch {
    phoneme: Tensor,
    slur: Tensor,
    note: Tensor,
    pub mask: Tensor,
    pub lengths: Vec<usize>,
    /// Normalized frame counts `(B, T, 1)`.
    target: Option<Tensor>,
}

impl DurationModel {
    pub fn new(cfg: &MdnModelConfig, vocab_size: usize, stats: DurationStats, dtype: DType, seed: u64) -> Result<Self> {
        let mut ps = ParamStore::new(dtype, seed);
        let net = MdnSequenceNet::new(
            &mut ps,
            cfg,
            &[("phoneme", vocab_size, cfg.phoneme_embed), ("slur", 2, cfg.slur_embed)],
            1,
        )?;
        Ok(Self { ps, net, stats, vocab_size })
    }

    pub fn batch(&self, seqs: &[&[PhonemeFeatureRow]], targets: Option<&[&DurationSpec]>) -> Result<DmBatch> {
        if seqs.is_empty() || seqs.iter().any(|s| s.is_empty()) {
            return Err(Error::Shape("duration batch needs at least one non-empty sequence".into()));
        }
        let dev = Device::Cpu;
        let dtype = self.ps.dtype();
        let lengths: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        let t = *lengths.iter().max().unwrap_or(&0);
        let phoneme: Vec<Vec<u32>> = seqs.iter().map(|s| s.iter().map(|r| r.phoneme_id).collect()).collect();
        let slur: Vec<Vec<u32>> = seqs.iter().map(|s| s.iter().map(|r| u32::from(r.slur)).collect()).collect();
        let note: Vec<Vec<f32>> = seqs
            .iter()
            .map(|s| s.iter().map(|r| self.stats.note.apply(f64::from(r.note_dur).ln()) as f32).collect())
            .collect();
        let note_refs: Vec<&[f32]> = note.iter().map(|v| v.as_slice()).collect();
        let target = match targets {
            None => None,
            Some(tg) => {
                if tg.len() != seqs.len() || tg.iter().zip(&lengths).any(|(d, n)| d.len() != *n) {
                    return Err(Error::Shape("duration targets do not match phoneme sequences".into()));
                }
                let z: Vec<Vec<f32>> = tg
                    .iter()
                    .map(|d| d.counts().iter().map(|c| self.stats.frames.apply(f64::from(*c)) as f32).collect())
                    .collect();
                let refs: Vec<&[f32]> = z.iter().map(|v| v.as_slice()).collect();
                Some(pad_frames(&refs, t, 1, dtype, &dev)?)
            }
        };
        Ok(DmBatch {
            phoneme: pad_ids(&phoneme, t, 0, &dev)?,
            slur: pad_ids(&slur, t, 0, &dev)?,
            note: pad_frames(&note_refs, t, 1, dtype, &dev)?,
            mask: sequence_mask(&lengths, t, dtype, &dev)?,
            lengths,
            target,
        })
    }

    pub fn forward(&self, batch: &DmBatch) -> Result<GmmTensors> {
        self.net.forward(&[&batch.phoneme, &batch.slur], Some(&batch.note), &batch.mask)
    }

    /// Mean NLL over phonemes in normalized target units; carries the graph.
    pub fn loss(&self, batch: &DmBatch) -> Result<Tensor> {
        let target = batch
            .target
            .as_ref()
            .ok_or_else(|| Error::Shape("duration batch has no targets".into()))?;
        self.forward(batch)?.masked_nll(target, &batch.mask)
    }

    /// Converts a normalized-space NLL to one measured in frames.
    pub fn nll_in_frames(&self, normalized: f64) -> f64 {
        normalized + self.stats.frames.std.ln()
    }

    /// Sampled frame count per phoneme, rounded and clamped to at least 1.
    pub fn predict(&self, rows: &[PhonemeFeatureRow], seed: u64, mode: SamplingMode) -> Result<DurationSpec> {
        let batch = self.batch(&[rows], None)?;
        let gmm = self.forward(&batch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = sample_sequence(&gmm, 0, rows.len(), mode, &mut rng)?;
        DurationSpec::new(z.into_iter().map(|v| frames_from_real(self.stats.frames.invert(v))).collect())
    }
}

fn frames_from_real(v: f64) -> u32 {
    if v.is_finite() {
        v.round().clamp(1.0, f64::from(u32::MAX)) as u32
    } else {
        1
    }
}

/// One optimizer update; returns the NLL in frame units before the update.
pub fn dm_train_step(model: &DurationModel, trainer: &mut Trainer, batch: &DmBatch) -> Result<f64> {
    let loss = model.loss(batch)?;
    let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if !value.is_finite() {
        return Err(Error::Validation(format!("duration loss is not finite: {value}")));
    }
    trainer.step(&loss)?;
    Ok(model.nll_in_frames(value))
}

/// `1 - sum|p - r| / sum max(p, r)`; equal inputs (including all zero) give 1.
pub fn duration_accuracy(predicted: &[u32], real: &[u32]) -> Result<f64> {
    if predicted.len() != real.len() {
        return Err(Error::Shape(format!(
            "duration accuracy needs equal lengths, got {} and {}",
            predicted.len(),
            real.len()
        )));
    }
    let mut err = 0u64;
    let mut denom = 0u64;
    for (p, r) in predicted.iter().zip(real) {
        err += u64::from(p.abs_diff(*r));
        denom += u64::from(*p.max(r));
    }
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(1.0 - err as f64 / denom as f64)
}

/// Anything able to turn phoneme rows into frame counts.
pub trait DurationPredictor {
    fn predict_durations(&self, rows: &[PhonemeFeatureRow], seed: u64) -> Result<DurationSpec>;
}

/// A trained model paired with its sampling mode.
pub struct SampledDurations<'a> {
    pub model: &'a DurationModel,
    pub mode: SamplingMode,
}

impl DurationPredictor for SampledDurations<'_> {
    fn predict_durations(&self, rows: &[PhonemeFeatureRow], seed: u64) -> Result<DurationSpec> {
        self.model.predict(rows, seed, self.mode)
    }
}
