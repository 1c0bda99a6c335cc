//! How much style a linear read-out recovers from acoustic-model latents.

use candle_core::DType;
use serde::Serialize;

use super::dataset::{CachedUtterance, CorpusStats, Dataset};
use super::train::{fit_acoustic, AmData};
use crate::acoustic::{extract_latents, AcousticNet};
use crate::config::PipelineConfig;
use crate::corpus::Style;
use crate::nn::with_large_stack;
use crate::probe::LinearProbe;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeOutcome {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Splits each style so its last `held_out` utterances form the test set.
pub fn probe_split(ds: &Dataset, held_out: usize) -> Result<(Vec<&CachedUtterance>, Vec<&CachedUtterance>)> {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for style in [Style::Singing, Style::Speaking] {
        let utts = ds.of_style(style);
        if utts.len() <= held_out {
            return Err(Error::Validation(format!(
                "style probe needs more than {held_out} {} utterances, found {}",
                style,
                utts.len()
            )));
        }
        let cut = utts.len() - held_out;
        train.extend_from_slice(&utts[..cut]);
        test.extend_from_slice(&utts[cut..]);
    }
    Ok((train, test))
}

/// Teacher-forced latent frames labelled `true` for speaking.
fn latents(net: &AcousticNet, stats: &CorpusStats, utts: &[&CachedUtterance]) -> Result<(Vec<Vec<f32>>, Vec<bool>)> {
    let data = AmData::new(utts, stats);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, u) in utts.iter().enumerate() {
        let (batch, mel) = data.batch(&[i], DType::F32)?;
        let rows = with_large_stack(|| extract_latents(net, &batch, &mel))?;
        y.extend(std::iter::repeat(u.style == Style::Speaking).take(rows.len()));
        x.extend(rows);
    }
    Ok((x, y))
}

/// Fits a probe on the latents of `train` and scores it on both splits.
pub fn probe_latents(
    net: &AcousticNet,
    stats: &CorpusStats,
    train: &[&CachedUtterance],
    test: &[&CachedUtterance],
    cfg: &PipelineConfig,
) -> Result<ProbeOutcome> {
    let (xtr, ytr) = latents(net, stats, train)?;
    let (xte, yte) = latents(net, stats, test)?;
    let probe = LinearProbe::fit(&xtr, &ytr, cfg.probe.iterations, cfg.probe.l2)?;
    Ok(ProbeOutcome {
        train_accuracy: probe.accuracy(&xtr, &ytr),
        test_accuracy: probe.accuracy(&xte, &yte),
    })
}

/// Trains an acoustic model on every utterance under the probe budget with
/// adversarial weight `lambda`, then probes its latents.
pub fn style_probe(ds: &Dataset, cfg: &PipelineConfig, seed: u64, lambda: f64) -> Result<ProbeOutcome> {
    let mut cfg = cfg.clone();
    cfg.train.grl_scale = cfg.probe.grl_scale;
    let all: Vec<&CachedUtterance> = ds.utterances.iter().collect();
    let data = AmData::new(&all, &ds.stats);
    let (net, _) = fit_acoustic(&data, &cfg, ds.vocab.len(), seed, lambda, cfg.probe.am_steps)?;
    let (train, test) = probe_split(ds, cfg.probe.held_out)?;
    probe_latents(&net, &ds.stats, &train, &test, &cfg)
}
