//! Training loops for the three models and their checkpoint plumbing.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::dataset::{write_json, CachedUtterance, CorpusStats, Dataset};
use crate::acoustic::{am_loss, AcousticNet, AmBatch, AmLossValues};
use crate::checkpoint::{load_params, read_meta, save_checkpoint, stats_from, CheckpointMeta};
use crate::config::{ModelKind, PipelineConfig};
use crate::corpus::{PhonemeVocabulary, Style};
use crate::duration::{dm_train_step, DurationModel, DurationStats};
use crate::features::{AmFrameRow, DurationSpec, Lf0FrameRow, PhonemeFeatureRow};
use crate::lf0::{lf0_train_step, Lf0Model};
use crate::mdn::Normalizer;
use crate::nn::{pad_frames, with_large_stack, GradientReversal, Trainer};
use crate::{Error, Result};

/// Cycles through shuffled epochs of `n` items in chunks of `size`.
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    size: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(n: usize, size: usize, seed: u64) -> Self {
        let mut s = Self { order: (0..n).collect(), pos: n, size: size.clamp(1, n.max(1)), rng: ChaCha8Rng::seed_from_u64(seed) };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.pos + self.size > self.order.len() {
            self.reshuffle();
        }
        let b = self.order[self.pos..self.pos + self.size].to_vec();
        self.pos += self.size;
        b
    }
}

/// Utterances the duration and LF0 models learn from.
pub fn predictor_split<'a>(ds: &'a Dataset, cfg: &PipelineConfig) -> Vec<&'a CachedUtterance> {
    if cfg.train.predictors_on_speaking {
        ds.utterances.iter().collect()
    } else {
        ds.of_style(Style::Singing)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainLog {
    pub steps: usize,
    pub seed: u64,
    /// Loss before each update.
    pub losses: Vec<f64>,
}

impl TrainLog {
    pub fn last(&self) -> f64 {
        self.losses.last().copied().unwrap_or(f64::NAN)
    }
}

fn require(utts: &[&CachedUtterance], what: &str) -> Result<()> {
    if utts.is_empty() {
        return Err(Error::Validation(format!("no utterances to train the {what} model on")));
    }
    Ok(())
}

pub fn fit_duration(
    utts: &[&CachedUtterance],
    cfg: &PipelineConfig,
    vocab_size: usize,
    seed: u64,
) -> Result<(DurationModel, TrainLog)> {
    require(utts, "duration")?;
    let rows: Vec<Vec<PhonemeFeatureRow>> = utts.iter().map(|u| u.phoneme_rows()).collect();
    let targets: Vec<DurationSpec> = utts.iter().map(|u| u.durations()).collect();
    let row_refs: Vec<&[PhonemeFeatureRow]> = rows.iter().map(|r| r.as_slice()).collect();
    let target_refs: Vec<&DurationSpec> = targets.iter().collect();
    let stats = DurationStats::fit(&row_refs, &target_refs)?;
    let steps = cfg.train.dm_steps;
    with_large_stack(|| {
        let model = DurationModel::new(&cfg.duration, vocab_size, stats, DType::F32, seed)?;
        let mut trainer = Trainer::new(&model.ps, cfg.train.learning_rate, cfg.train.grad_clip)?;
        let mut sampler = BatchSampler::new(utts.len(), cfg.train.batch_size, seed ^ 0x5eed);
        let mut losses = Vec::with_capacity(steps);
        for _ in 0..steps {
            let idx = sampler.next_batch();
            let r: Vec<&[PhonemeFeatureRow]> = idx.iter().map(|&i| row_refs[i]).collect();
            let t: Vec<&DurationSpec> = idx.iter().map(|&i| target_refs[i]).collect();
            let batch = model.batch(&r, Some(&t))?;
            losses.push(dm_train_step(&model, &mut trainer, &batch)?);
        }
        Ok((model, TrainLog { steps, seed, losses }))
    })
}

pub fn fit_lf0(
    utts: &[&CachedUtterance],
    cfg: &PipelineConfig,
    vocab_size: usize,
    seed: u64,
) -> Result<(Lf0Model, TrainLog)> {
    require(utts, "LF0")?;
    let rows: Vec<Vec<Lf0FrameRow>> = utts.iter().map(|u| u.lf0_rows()).collect();
    let row_refs: Vec<&[Lf0FrameRow]> = rows.iter().map(|r| r.as_slice()).collect();
    let target_refs: Vec<&[f32]> = utts.iter().map(|u| u.lf0.as_slice()).collect();
    let stats = Normalizer::fit(target_refs.iter().flat_map(|v| v.iter()).map(|v| f64::from(*v)))?;
    let steps = cfg.train.lf0_steps;
    with_large_stack(|| {
        let model = Lf0Model::new(&cfg.lf0, vocab_size, stats, DType::F32, seed)?;
        let mut trainer = Trainer::new(&model.ps, cfg.train.learning_rate, cfg.train.grad_clip)?;
        let mut sampler = BatchSampler::new(utts.len(), cfg.train.batch_size, seed ^ 0x5eed);
        let mut losses = Vec::with_capacity(steps);
        for _ in 0..steps {
            let idx = sampler.next_batch();
            let r: Vec<&[Lf0FrameRow]> = idx.iter().map(|&i| row_refs[i]).collect();
            let t: Vec<&[f32]> = idx.iter().map(|&i| target_refs[i]).collect();
            let batch = model.batch(&r, Some(&t))?;
            losses.push(lf0_train_step(&model, &mut trainer, &batch)?);
        }
        Ok((model, TrainLog { steps, seed, losses }))
    })
}

/// Model inputs and normalized mel targets for a set of utterances.
pub struct AmData {
    pub rows: Vec<Vec<AmFrameRow>>,
    pub mels: Vec<Vec<f32>>,
    pub n_mels: usize,
}

impl AmData {
    pub fn new(utts: &[&CachedUtterance], stats: &CorpusStats) -> Self {
        Self {
            rows: utts.iter().map(|u| u.am_rows(stats)).collect(),
            mels: utts.iter().map(|u| stats.normalize_mel(&u.mel).iter().copied().collect()).collect(),
            n_mels: stats.mel_mean.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Padded batch and `(B, T, n_mels)` targets for the chosen items.
    pub fn batch(&self, idx: &[usize], dtype: DType) -> Result<(AmBatch, Tensor)> {
        let rows: Vec<&[AmFrameRow]> = idx.iter().map(|&i| self.rows[i].as_slice()).collect();
        let mels: Vec<&[f32]> = idx.iter().map(|&i| self.mels[i].as_slice()).collect();
        let batch = AmBatch::from_rows(&rows, dtype, &Device::Cpu)?;
        let target = pad_frames(&mels, batch.frames(), self.n_mels, dtype, &Device::Cpu)?;
        Ok((batch, target))
    }
}

/// Trains an acoustic model with adversarial weight `lambda` for `steps`.
pub fn fit_acoustic(
    data: &AmData,
    cfg: &PipelineConfig,
    vocab_size: usize,
    seed: u64,
    lambda: f64,
    steps: usize,
) -> Result<(AcousticNet, Vec<AmLossValues>)> {
    if data.is_empty() {
        return Err(Error::Validation("no utterances to train the acoustic model on".into()));
    }
    with_large_stack(|| {
        let mut net = AcousticNet::new(&cfg.acoustic, vocab_size, data.n_mels, DType::F32, seed)?;
        net.grl = GradientReversal::new(cfg.train.grl_scale);
        let mut trainer = Trainer::new(&net.ps, cfg.train.learning_rate, cfg.train.grad_clip)?;
        let mut sampler = BatchSampler::new(data.len(), cfg.train.batch_size, seed ^ 0x5eed);
        let mut dropout = ChaCha8Rng::seed_from_u64(seed ^ 0xd80);
        let mut log = Vec::with_capacity(steps);
        for _ in 0..steps {
            let (batch, target) = data.batch(&sampler.next_batch(), DType::F32)?;
            let out = net.forward_teacher_forced(&batch, &target, Some(&mut dropout))?;
            let loss = am_loss(&net, &out, &target, &batch, lambda, cfg.train.l2)?;
            let values = loss.values()?;
            if !values.total.is_finite() {
                return Err(Error::Validation(format!("acoustic loss is not finite: {}", values.total)));
            }
            trainer.step(&loss.total)?;
            log.push(values);
        }
        Ok((net, log))
    })
}

fn meta(kind: ModelKind, cfg: &PipelineConfig, vocab: &PhonemeVocabulary, stats: serde_json::Value, training: serde_json::Value) -> CheckpointMeta {
    CheckpointMeta {
        kind: kind.name().to_string(),
        config_hash: cfg.model_hash(kind),
        vocab_hash: vocab.hash(),
        vocab_size: vocab.len(),
        stats,
        training,
    }
}

pub fn train_dm(ds: &Dataset, cfg: &PipelineConfig, ckpt: &Path, seed: u64) -> Result<TrainLog> {
    let utts = predictor_split(ds, cfg);
    let (model, log) = fit_duration(&utts, cfg, ds.vocab.len(), seed)?;
    let training = json!({"steps": log.steps, "seed": seed, "final_nll_frames": log.last(), "utterances": utts.len()});
    let m = meta(ModelKind::Duration, cfg, &ds.vocab, serde_json::to_value(model.stats)?, training);
    save_checkpoint(ckpt, ModelKind::Duration, &model.ps, &m)?;
    write_json(&ckpt.join("vocab.json"), &ds.vocab)?;
    Ok(log)
}

pub fn train_lf0(ds: &Dataset, cfg: &PipelineConfig, ckpt: &Path, seed: u64) -> Result<TrainLog> {
    let utts = predictor_split(ds, cfg);
    let (model, log) = fit_lf0(&utts, cfg, ds.vocab.len(), seed)?;
    let training = json!({"steps": log.steps, "seed": seed, "final_nll_log_hz": log.last(), "utterances": utts.len()});
    let m = meta(ModelKind::Lf0, cfg, &ds.vocab, serde_json::to_value(model.stats)?, training);
    save_checkpoint(ckpt, ModelKind::Lf0, &model.ps, &m)?;
    write_json(&ckpt.join("vocab.json"), &ds.vocab)?;
    Ok(log)
}

pub fn train_am(ds: &Dataset, cfg: &PipelineConfig, ckpt: &Path, seed: u64) -> Result<Vec<AmLossValues>> {
    let utts: Vec<&CachedUtterance> = ds.utterances.iter().collect();
    let data = AmData::new(&utts, &ds.stats);
    let (net, log) = fit_acoustic(&data, cfg, ds.vocab.len(), seed, cfg.train.lambda, cfg.train.am_steps)?;
    let last = log.last().copied();
    let training = json!({"steps": log.len(), "seed": seed, "lambda": cfg.train.lambda, "final": last, "utterances": utts.len()});
    let m = meta(ModelKind::Acoustic, cfg, &ds.vocab, serde_json::to_value(&ds.stats)?, training);
    save_checkpoint(ckpt, ModelKind::Acoustic, &net.ps, &m)?;
    write_json(&ckpt.join("vocab.json"), &ds.vocab)?;
    Ok(log)
}

fn checked_meta(ckpt: &Path, kind: ModelKind, cfg: &PipelineConfig, vocab: &PhonemeVocabulary, force: bool) -> Result<CheckpointMeta> {
    let m = read_meta(ckpt, kind, cfg, force)?;
    if m.vocab_hash != vocab.hash() && !force {
        return Err(Error::Validation(format!(
            "{} checkpoint was trained on a different phoneme vocabulary",
            kind.name()
        )));
    }
    Ok(m)
}

pub fn load_duration(ckpt: &Path, cfg: &PipelineConfig, vocab: &PhonemeVocabulary, force: bool) -> Result<DurationModel> {
    let m = checked_meta(ckpt, ModelKind::Duration, cfg, vocab, force)?;
    let model = DurationModel::new(&cfg.duration, m.vocab_size, stats_from(&m)?, DType::F32, 0)?;
    load_params(ckpt, ModelKind::Duration, &model.ps)?;
    Ok(model)
}

pub fn load_lf0(ckpt: &Path, cfg: &PipelineConfig, vocab: &PhonemeVocabulary, force: bool) -> Result<Lf0Model> {
    let m = checked_meta(ckpt, ModelKind::Lf0, cfg, vocab, force)?;
    let model = Lf0Model::new(&cfg.lf0, m.vocab_size, stats_from(&m)?, DType::F32, 0)?;
    load_params(ckpt, ModelKind::Lf0, &model.ps)?;
    Ok(model)
}

/// The acoustic model together with the corpus statistics it was trained on.
pub fn load_acoustic(
    ckpt: &Path,
    cfg: &PipelineConfig,
    vocab: &PhonemeVocabulary,
    force: bool,
) -> Result<(AcousticNet, CorpusStats)> {
    let m = checked_meta(ckpt, ModelKind::Acoustic, cfg, vocab, force)?;
    let stats: CorpusStats = stats_from(&m)?;
    let net = AcousticNet::new(&cfg.acoustic, m.vocab_size, stats.mel_mean.len(), DType::F32, 0)?;
    load_params(ckpt, ModelKind::Acoustic, &net.ps)?;
    Ok((net, stats))
}
