//! Reader for the feature cache written by `prepare`.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{PhonemeVocabulary, Style};
use crate::features::{AmFrameRow, DurationSpec, Lf0FrameRow, PhonemeFeatureRow};
use crate::mdn::Normalizer;
use crate::signal::read_matrix;
use crate::{Error, Result};

/// Columns of the per-frame feature matrix.
pub const FEAT_COLUMNS: [&str; 8] = [
    "phoneme_index",
    "phoneme_id",
    "pitch_id",
    "slur",
    "note_dur",
    "frame_pos",
    "speaker",
    "style",
];

/// Bands whose spread is below this are scaled as if it were this, so
/// near-silent bands do not blow up under normalization.
pub const MEL_STD_FLOOR: f32 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub utterances: usize,
    pub frames: usize,
    pub mel_mean: Vec<f32>,
    pub mel_std: Vec<f32>,
    /// Over log-Hz of every frame, used for the acoustic model's LF0 input.
    pub lf0: Normalizer,
    pub vocab_hash: String,
}

impl CorpusStats {
    pub fn normalize_mel(&self, mel: &Array2<f32>) -> Array2<f32> {
        let mut out = mel.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mel_mean).zip(&self.mel_std) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn denormalize_mel(&self, mel: &Array2<f32>) -> Array2<f32> {
        let mut out = mel.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mel_mean).zip(&self.mel_std) {
                *v = *v * s + m;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceInfo {
    pub id: String,
    pub style: Style,
    pub speaker: u32,
    pub frames: usize,
    pub phonemes: usize,
}

pub fn mel_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.mel"))
}

pub fn lf0_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.lf0"))
}

pub fn feat_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.feat"))
}

/// One cached utterance: raw log-mel, log-Hz LF0 and frame features.
#[derive(Debug, Clone)]
pub struct CachedUtterance {
    pub id: String,
    pub style: Style,
    pub speaker: u32,
    pub mel: Array2<f32>,
    pub lf0: Vec<f32>,
    pub voiced: Vec<bool>,
    pub feat: Array2<f32>,
}

impl CachedUtterance {
    pub fn frames(&self) -> usize {
        self.feat.nrows()
    }

    fn col(&self, t: usize, name: &str) -> f32 {
        let c = FEAT_COLUMNS.iter().position(|n| *n == name).expect("known column");
        self.feat[[t, c]]
    }

    /// First frame of each phoneme.
    fn phoneme_starts(&self) -> Vec<usize> {
        (0..self.frames())
            .filter(|&t| t == 0 || self.col(t, "phoneme_index") != self.col(t - 1, "phoneme_index"))
            .collect()
    }

    pub fn durations(&self) -> DurationSpec {
        let mut starts = self.phoneme_starts();
        starts.push(self.frames());
        DurationSpec(starts.windows(2).map(|w| (w[1] - w[0]) as u32).collect())
    }

    pub fn phoneme_rows(&self) -> Vec<PhonemeFeatureRow> {
        self.phoneme_starts()
            .into_iter()
            .map(|t| PhonemeFeatureRow {
                phoneme_id: self.col(t, "phoneme_id") as u32,
                slur: self.col(t, "slur") != 0.0,
                note_dur: self.col(t, "note_dur"),
            })
            .collect()
    }

    pub fn lf0_rows(&self) -> Vec<Lf0FrameRow> {
        (0..self.frames())
            .map(|t| Lf0FrameRow {
                phoneme_id: self.col(t, "phoneme_id") as u32,
                pitch_id: self.col(t, "pitch_id") as u32,
                slur: self.col(t, "slur") != 0.0,
                frame_pos: self.col(t, "frame_pos"),
            })
            .collect()
    }

    /// Acoustic rows with the cached LF0 normalized by `stats`.
    pub fn am_rows(&self, stats: &CorpusStats) -> Vec<AmFrameRow> {
        self.lf0_rows()
            .into_iter()
            .zip(&self.lf0)
            .map(|(r, lf0)| AmFrameRow {
                phoneme_id: r.phoneme_id,
                frame_pos: r.frame_pos,
                speaker_id: self.speaker,
                style: self.style,
                lf0: stats.lf0.apply(f64::from(*lf0)) as f32,
            })
            .collect()
    }
}

pub struct Dataset {
    pub dir: PathBuf,
    pub stats: CorpusStats,
    pub vocab: PhonemeVocabulary,
    pub utterances: Vec<CachedUtterance>,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let stats: CorpusStats = read_json(&dir.join("stats.json"))?;
        let vocab: PhonemeVocabulary = read_json(&dir.join("vocab.json"))?;
        if vocab.hash() != stats.vocab_hash {
            return Err(Error::Validation(format!("{}: vocabulary does not match stats", dir.display())));
        }
        let index: Vec<UtteranceInfo> = read_json(&dir.join("utterances.json"))?;
        let mut utterances = Vec::with_capacity(index.len());
        for info in index {
            let mel = read_matrix(mel_path(dir, &info.id))?;
            let lf0m = read_matrix(lf0_path(dir, &info.id))?;
            let feat = read_matrix(feat_path(dir, &info.id))?;
            if mel.nrows() != info.frames || lf0m.nrows() != info.frames || feat.nrows() != info.frames {
                return Err(Error::Validation(format!("{}: cache files disagree on frame count", info.id)));
            }
            if feat.ncols() != FEAT_COLUMNS.len() || lf0m.ncols() != 2 || mel.ncols() != stats.mel_mean.len() {
                return Err(Error::Validation(format!("{}: unexpected cache widths", info.id)));
            }
            utterances.push(CachedUtterance {
                id: info.id,
                style: info.style,
                speaker: info.speaker,
                mel,
                lf0: lf0m.column(0).to_vec(),
                voiced: lf0m.column(1).iter().map(|v| *v != 0.0).collect(),
                feat,
            });
        }
        Ok(Self { dir: dir.to_path_buf(), stats, vocab, utterances })
    }

    pub fn of_style(&self, style: Style) -> Vec<&CachedUtterance> {
        self.utterances.iter().filter(|u| u.style == style).collect()
    }

    pub fn get(&self, id: &str) -> Option<&CachedUtterance> {
        self.utterances.iter().find(|u| u.id == id)
    }
}
