//! Manifest to feature cache: mel, continuous LF0 and frame features for
//! every utterance, plus corpus statistics and the phoneme vocabulary.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::{feat_path, lf0_path, mel_path, write_json, CorpusStats, UtteranceInfo, MEL_STD_FLOOR};
use crate::config::AudioConfig;
use crate::corpus::{build_vocabulary, Manifest, PhonemeVocabulary, Utterance};
use crate::features::{expand_to_frames, intervals_to_durations};
use crate::mdn::Normalizer;
use crate::signal::{extract_lf0, extract_mel, read_wav, write_matrix, AutocorrelationTracker};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareFailure {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareReport {
    pub prepared: Vec<String>,
    pub failed: Vec<PrepareFailure>,
}

struct Prepared {
    utt: Utterance,
    mel: Array2<f32>,
    lf0: Array2<f32>,
}

/// Pads by repeating the last row or truncates to `t` rows.
fn fit_rows(m: Array2<f32>, t: usize) -> Array2<f32> {
    let have = m.nrows();
    if have == t {
        return m;
    }
    Array2::from_shape_fn((t, m.ncols()), |(i, j)| m[[i.min(have - 1), j]])
}

fn extract(utt: Utterance, cfg: &AudioConfig) -> Result<Prepared> {
    let fp = cfg.frame_period();
    let durations = intervals_to_durations(&utt.intervals, fp)?;
    let total = durations.total();
    let audio = read_wav(&utt.audio_path)?;
    let mel = extract_mel(&audio, cfg)?;
    if mel.n_frames().abs_diff(total) > 1 {
        return Err(Error::Validation(format!(
            "audio has {} frames but intervals cover {total}",
            mel.n_frames()
        )));
    }
    let track = extract_lf0(&audio, cfg, &AutocorrelationTracker::new(cfg))?;
    let lf0 = Array2::from_shape_fn((track.len(), 2), |(t, c)| {
        if c == 0 { track.values[t] } else { f32::from(u8::from(track.voiced[t])) }
    });
    Ok(Prepared {
        mel: fit_rows(mel.frames, total),
        lf0: fit_rows(lf0, total),
        utt,
    })
}

fn features(p: &Prepared, vocab: &PhonemeVocabulary, cfg: &AudioConfig) -> Result<Array2<f32>> {
    let u = &p.utt;
    let durations = intervals_to_durations(&u.intervals, cfg.frame_period())?;
    let exp = expand_to_frames(&u.entries, &durations, vocab)?;
    let mut feat = Array2::<f32>::zeros((exp.len(), 8));
    for (t, (row, &i)) in exp.lf0_rows.iter().zip(&exp.phoneme_index).enumerate() {
        let values = [
            i as f32,
            row.phoneme_id as f32,
            row.pitch_id as f32,
            f32::from(u8::from(row.slur)),
            u.entries[i as usize].note_dur as f32,
            row.frame_pos,
            u.speaker_id as f32,
            u.style.id() as f32,
        ];
        feat.row_mut(t).iter_mut().zip(values).for_each(|(d, v)| *d = v);
    }
    Ok(feat)
}

fn corpus_stats(done: &[Prepared], vocab: &PhonemeVocabulary) -> Result<CorpusStats> {
    let n_mels = done[0].mel.ncols();
    let frames: usize = done.iter().map(|p| p.mel.nrows()).sum();
    let mut sum = vec![0f64; n_mels];
    let mut sq = vec![0f64; n_mels];
    for p in done {
        for row in p.mel.rows() {
            for (j, v) in row.iter().enumerate() {
                sum[j] += f64::from(*v);
                sq[j] += f64::from(*v) * f64::from(*v);
            }
        }
    }
    let n = frames as f64;
    let mel_mean: Vec<f32> = sum.iter().map(|s| (s / n) as f32).collect();
    let mel_std: Vec<f32> = sum
        .iter()
        .zip(&sq)
        .map(|(s, q)| ((q / n - (s / n).powi(2)).max(0.0).sqrt() as f32).max(MEL_STD_FLOOR))
        .collect();
    let lf0 = Normalizer::fit(done.iter().flat_map(|p| p.lf0.column(0).to_vec()).map(f64::from))?;
    Ok(CorpusStats {
        utterances: done.len(),
        frames,
        mel_mean,
        mel_std,
        lf0,
        vocab_hash: vocab.hash(),
    })
}

/// Writes the cache into `out`. Utterances that fail are listed in
/// `prepare_report.json`; any failure aborts the run unless `skip_bad`.
pub fn prepare(manifest_path: &Path, out: &Path, cfg: &AudioConfig, skip_bad: bool) -> Result<PrepareReport> {
    let manifest = Manifest::load(manifest_path)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut done = Vec::new();
    let mut failed = Vec::new();
    for rec in &manifest.records {
        match Utterance::load(&manifest, rec, cfg.frame_period()).and_then(|u| extract(u, cfg)) {
            Ok(p) => done.push(p),
            Err(e) => failed.push(PrepareFailure { id: rec.id.clone(), reason: e.to_string() }),
        }
    }
    let report = PrepareReport {
        prepared: done.iter().map(|p| p.utt.id.clone()).collect(),
        failed,
    };
    write_json(&out.join("prepare_report.json"), &report)?;
    if !report.failed.is_empty() && !skip_bad {
        let list: Vec<String> = report.failed.iter().map(|f| format!("{} ({})", f.id, f.reason)).collect();
        return Err(Error::Validation(format!("{} utterance(s) failed: {}", list.len(), list.join("; "))));
    }
    if done.is_empty() {
        return Err(Error::Validation("no utterance could be prepared".into()));
    }
    let utts: Vec<Utterance> = done.iter().map(|p| p.utt.clone()).collect();
    let vocab = build_vocabulary(&utts);
    let mut index = Vec::with_capacity(done.len());
    for p in &done {
        let id = &p.utt.id;
        let feat = features(p, &vocab, cfg)?;
        write_matrix(mel_path(out, id), &p.mel)?;
        write_matrix(lf0_path(out, id), &p.lf0)?;
        write_matrix(feat_path(out, id), &feat)?;
        index.push(UtteranceInfo {
            id: id.clone(),
            style: p.utt.style,
            speaker: p.utt.speaker_id,
            frames: feat.nrows(),
            phonemes: p.utt.entries.len(),
        });
    }
    write_json(&out.join("stats.json"), &corpus_stats(&done, &vocab)?)?;
    write_json(&out.join("vocab.json"), &vocab)?;
    write_json(&out.join("utterances.json"), &index)?;
    Ok(report)
}
