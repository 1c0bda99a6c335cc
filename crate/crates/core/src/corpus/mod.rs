//! Score, interval and manifest ingestion into a style-agnostic
//! [`Utterance`] representation.

mod interval;
mod manifest;
mod pitch;
mod score;
mod vocab;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use interval::{
    format_intervals, parse_intervals, parse_intervals_str, validate_intervals, write_intervals,
    IntervalEntry,
};
pub use manifest::{Manifest, ManifestRecord};
pub use pitch::{midi_to_hz, pitch_to_midi, Pitch, MIDI_MAX, MIDI_MIN, PITCH_VOCAB_SIZE};
pub use score::{format_score, parse_score, parse_score_str, write_score, ScoreEntry};
pub use vocab::{build_vocabulary, PhonemeVocabulary, PAD_ID, PAD_TOKEN, SIL_ID, SIL_TOKEN};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Singing,
    Speaking,
}

impl Style {
    pub fn id(self) -> u32 {
        match self {
            Style::Singing => 0,
            Style::Speaking => 1,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(Style::Singing),
            1 => Some(Style::Speaking),
            _ => None,
        }
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Style::Singing => "singing",
            Style::Speaking => "speaking",
        })
    }
}

impl std::str::FromStr for Style {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "singing" | "sing" => Ok(Style::Singing),
            "speaking" | "speak" => Ok(Style::Speaking),
            _ => Err(Error::Config(format!("unknown style {s:?}"))),
        }
    }
}

/// A singing or speaking utterance with one score entry per phoneme.
///
/// Speaking utterances carry `REST` pitches, no slurs, and note durations
/// equal to their aligned interval lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub style: Style,
    pub speaker_id: u32,
    pub entries: Vec<ScoreEntry>,
    pub intervals: Vec<IntervalEntry>,
    pub audio_path: PathBuf,
}

impl Utterance {
    pub fn singing(
        id: impl Into<String>,
        speaker_id: u32,
        entries: Vec<ScoreEntry>,
        intervals: Vec<IntervalEntry>,
        audio_path: impl Into<PathBuf>,
    ) -> Result<Self> {
        let id = id.into();
        check_phoneme_sequences(&id, entries.iter().map(|e| e.phoneme.as_str()), &intervals)?;
        Ok(Self {
            id,
            style: Style::Singing,
            speaker_id,
            entries,
            intervals,
            audio_path: audio_path.into(),
        })
    }

    /// Builds a speaking utterance. `transcript` defaults to the interval
    /// phonemes when absent.
    pub fn speaking(
        id: impl Into<String>,
        speaker_id: u32,
        transcript: Option<&[String]>,
        intervals: Vec<IntervalEntry>,
        audio_path: impl Into<PathBuf>,
    ) -> Result<Self> {
        let id = id.into();
        if let Some(tokens) = transcript {
            check_phoneme_sequences(&id, tokens.iter().map(String::as_str), &intervals)?;
        }
        let entries = intervals
            .iter()
            .map(|iv| ScoreEntry {
                phoneme: iv.phoneme.clone(),
                pitch: Pitch::Rest,
                note_dur: iv.duration(),
                slur: false,
            })
            .collect();
        Ok(Self {
            id,
            style: Style::Speaking,
            speaker_id,
            entries,
            intervals,
            audio_path: audio_path.into(),
        })
    }

    pub fn total_duration(&self) -> f64 {
        self.intervals.last().map_or(0.0, |iv| iv.end)
            - self.intervals.first().map_or(0.0, |iv| iv.start)
    }

    /// Reads the score/transcript and interval files named by a manifest
    /// record.
    pub fn load(manifest: &Manifest, rec: &ManifestRecord, frame_period: f64) -> Result<Self> {
        let intervals = parse_intervals(manifest.resolve(&rec.interval_path), frame_period)?;
        let audio = manifest.resolve(&rec.audio_path);
        match rec.style {
            Style::Singing => {
                let score = rec.score_path.as_ref().ok_or_else(|| {
                    Error::Validation(format!("{}: singing utterance needs score_path", rec.id))
                })?;
                let entries = parse_score(manifest.resolve(score))?;
                Self::singing(&rec.id, rec.speaker, entries, intervals, audio)
            }
            Style::Speaking => {
                let transcript = match &rec.score_path {
                    Some(p) => Some(read_transcript(&manifest.resolve(p))?),
                    None => None,
                };
                Self::speaking(&rec.id, rec.speaker, transcript.as_deref(), intervals, audio)
            }
        }
    }
}

/// Whitespace-separated phoneme tokens, any number of lines.
pub fn read_transcript(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.split_whitespace().map(str::to_string).collect())
}

fn check_phoneme_sequences<'a>(
    id: &str,
    tokens: impl Iterator<Item = &'a str>,
    intervals: &[IntervalEntry],
) -> Result<()> {
    let tokens: Vec<&str> = tokens.collect();
    if tokens.len() != intervals.len() {
        return Err(Error::Validation(format!(
            "{id}: {} phonemes in score but {} intervals",
            tokens.len(),
            intervals.len()
        )));
    }
    for (i, (t, iv)) in tokens.iter().zip(intervals).enumerate() {
        if *t != iv.phoneme {
            return Err(Error::Validation(format!(
                "{id}: phoneme {i} is {t:?} in score but {:?} in intervals",
                iv.phoneme
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ivs(list: &[(&str, f64, f64)]) -> Vec<IntervalEntry> {
        list.iter().map(|(p, s, e)| IntervalEntry::new(*p, *s, *e)).collect()
    }

    #[test]
    fn speaking_utterances_are_rest_and_unslurred() {
        let u = Utterance::speaking("s1", 1, None, ivs(&[("t", 0.0, 0.1), ("ian", 0.1, 0.3)]), "a.wav")
            .unwrap();
        assert!(u.entries.iter().all(|e| e.pitch.is_rest() && !e.slur));
        assert!((u.entries[1].note_dur - 0.2).abs() < 1e-12);
    }

    #[test]
    fn phoneme_mismatch_is_fatal() {
        let entries = parse_score_str("t C4 0.1 0\na C4 0.2 0\n", "m").unwrap();
        let err = Utterance::singing("x", 0, entries, ivs(&[("t", 0.0, 0.1), ("o", 0.1, 0.3)]), "a.wav")
            .unwrap_err();
        assert!(err.to_string().contains("phoneme 1"));
        let tr = vec!["t".to_string()];
        assert!(Utterance::speaking("y", 1, Some(&tr), ivs(&[("t", 0.0, 0.1), ("a", 0.1, 0.2)]), "b")
            .is_err());
    }

    #[test]
    fn shared_ids_across_styles() {
        let sing = Utterance::singing(
            "a",
            0,
            parse_score_str("t C4 0.1 0\nian C4 0.2 0\n", "m").unwrap(),
            ivs(&[("t", 0.0, 0.1), ("ian", 0.1, 0.3)]),
            "a.wav",
        )
        .unwrap();
        let speak = Utterance::speaking("b", 1, None, ivs(&[("ian", 0.0, 0.1), ("o", 0.1, 0.2)]), "b.wav")
            .unwrap();
        let v = build_vocabulary(&[sing.clone(), speak.clone()]);
        let v_rev = build_vocabulary(&[speak, sing]);
        assert_eq!(v, v_rev);
        assert_eq!(v.len(), 2 + 3);
    }
}
