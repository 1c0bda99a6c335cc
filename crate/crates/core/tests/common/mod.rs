#![allow(dead_code)]

use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use songbridge::acoustic::{AcousticNet, AmBatch};
use songbridge::config::{AcousticConfig, CbhgConfig};
use songbridge::corpus::Style;
use songbridge::features::AmFrameRow;

pub const TINY_VOCAB: usize = 6;
pub const TINY_MELS: usize = 3;

pub fn tiny_cbhg(gru: usize) -> CbhgConfig {
    CbhgConfig {
        bank_size: 2,
        bank_kernel: 3,
        channels: 4,
        proj_kernel: 3,
        highway_layers: 1,
        gru_width: gru,
    }
}

pub fn tiny_am_config() -> AcousticConfig {
    AcousticConfig {
        n_speakers: 2,
        phoneme_embed: 3,
        frame_pos_dim: 2,
        speaker_embed: 2,
        style_embed: 2,
        lf0_dim: 2,
        encoder: tiny_cbhg(3),
        prenet: vec![4, 3],
        prenet_dropout: 0.5,
        dat_width: 3,
        decoder_layers: 2,
        decoder_width: 4,
        postnet: tiny_cbhg(2),
        classifier_hidden: 3,
    }
}

pub fn tiny_am(dtype: DType, seed: u64) -> AcousticNet {
    AcousticNet::new(&tiny_am_config(), TINY_VOCAB, TINY_MELS, dtype, seed).unwrap()
}

/// Random frame rows for one utterance of `len` frames.
pub fn random_rows(rng: &mut ChaCha8Rng, len: usize) -> Vec<AmFrameRow> {
    let style = if rng.gen_bool(0.5) { Style::Singing } else { Style::Speaking };
    let speaker = rng.gen_range(0..2);
    (0..len)
        .map(|i| AmFrameRow {
            phoneme_id: rng.gen_range(1..TINY_VOCAB as u32),
            frame_pos: i as f32 / len as f32,
            speaker_id: speaker,
            style,
            lf0: rng.gen_range(-1.5..1.5),
        })
        .collect()
}

/// A padded batch of random utterances and matching mel targets.
pub fn random_batch(seed: u64, lengths: &[usize], dtype: DType) -> (AmBatch, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<AmFrameRow>> = lengths.iter().map(|&l| random_rows(&mut rng, l)).collect();
    let refs: Vec<&[AmFrameRow]> = rows.iter().map(|r| r.as_slice()).collect();
    let batch = AmBatch::from_rows(&refs, dtype, &Device::Cpu).unwrap();
    let t = batch.frames();
    let mel: Vec<f64> = (0..lengths.len() * t * TINY_MELS).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mel = Tensor::from_vec(mel, (lengths.len(), t, TINY_MELS), &Device::Cpu)
        .unwrap()
        .to_dtype(dtype)
        .unwrap();
    let mel = songbridge::nn::apply_mask(&mel, &batch.mask).unwrap();
    (batch, mel)
}

pub fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}

pub fn values(t: &Tensor) -> Vec<f64> {
    t.flatten_all().unwrap().to_dtype(DType::F64).unwrap().to_vec1::<f64>().unwrap()
}

/// Desk configuration with step budgets cut to a handful, for tests that
/// exercise plumbing rather than learning.
pub fn quick_config() -> songbridge::config::PipelineConfig {
    let mut cfg = songbridge::config::PipelineConfig::desk();
    cfg.train.dm_steps = 3;
    cfg.train.lf0_steps = 3;
    cfg.train.am_steps = 2;
    cfg.train.batch_size = 4;
    cfg.inference.griffin_lim_iters = 4;
    cfg.inference.prenet_dropout = false;
    cfg
}

/// Every regular file under `dir`, relative path to contents, sorted.
pub fn snapshot(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
