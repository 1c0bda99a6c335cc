//! Model input rows and phoneme-to-frame expansion.
//!
//! Routing per model:
//! - duration model: phoneme id, slur, note duration (one row per phoneme)
//! - LF0 model: phoneme id, pitch id, slur, frame position (per frame)
//! - acoustic model: phoneme id, frame position, speaker, style, LF0 (per frame)

use serde::{Deserialize, Serialize};

use crate::corpus::{IntervalEntry, PhonemeVocabulary, ScoreEntry, Style};
use crate::{Error, Result};

/// Frames per phoneme. Every count is at least one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DurationSpec(pub Vec<u32>);

impl DurationSpec {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Validation(format!("phoneme {i} has a zero frame count")));
        }
        Ok(Self(counts))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhonemeFeatureRow {
    pub phoneme_id: u32,
    pub slur: bool,
    /// Seconds.
    pub note_dur: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lf0FrameRow {
    pub phoneme_id: u32,
    pub pitch_id: u32,
    pub slur: bool,
    pub frame_pos: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmFrameRow {
    pub phoneme_id: u32,
    pub frame_pos: f32,
    pub speaker_id: u32,
    pub style: Style,
    /// Normalized log-F0.
    pub lf0: f32,
}

/// Relative position of each frame inside a phoneme: `i / (n - 1)`, and 0
/// for a single frame.
pub fn compute_frame_pos(n_frames: usize) -> Result<Vec<f32>> {
    match n_frames {
        0 => Err(Error::Validation("a phoneme needs at least one frame".into())),
        1 => Ok(vec![0.0]),
        n => Ok((0..n).map(|i| i as f32 / (n - 1) as f32).collect()),
    }
}

pub fn phoneme_rows(entries: &[ScoreEntry], vocab: &PhonemeVocabulary) -> Result<Vec<PhonemeFeatureRow>> {
    entries
        .iter()
        .map(|e| {
            Ok(PhonemeFeatureRow {
                phoneme_id: vocab.lookup(&e.phoneme)?,
                slur: e.slur,
                note_dur: e.note_dur as f32,
            })
        })
        .collect()
}

/// Frame-level view of one utterance, before an LF0 source is chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameExpansion {
    /// Index of the source phoneme for each frame.
    pub phoneme_index: Vec<u32>,
    pub lf0_rows: Vec<Lf0FrameRow>,
}

impl FrameExpansion {
    pub fn len(&self) -> usize {
        self.lf0_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lf0_rows.is_empty()
    }

    /// Acoustic-model rows. `lf0` holds normalized log-F0 per frame, taken
    /// from audio at training time and from the LF0 model at synthesis.
    pub fn am_rows(&self, speaker_id: u32, style: Style, lf0: &[f32]) -> Result<Vec<AmFrameRow>> {
        if lf0.len() != self.len() {
            return Err(Error::Shape(format!(
                "LF0 source has {} frames, expansion has {}",
                lf0.len(),
                self.len()
            )));
        }
        Ok(self
            .lf0_rows
            .iter()
            .zip(lf0)
            .map(|(r, &lf0)| AmFrameRow {
                phoneme_id: r.phoneme_id,
                frame_pos: r.frame_pos,
                speaker_id,
                style,
                lf0,
            })
            .collect())
    }

    /// Frame counts per phoneme, recovered from the row grouping.
    pub fn durations(&self) -> DurationSpec {
        let mut counts: Vec<u32> = Vec::new();
        for &i in &self.phoneme_index {
            let i = i as usize;
            if counts.len() <= i {
                counts.resize(i + 1, 0);
            }
            counts[i] += 1;
        }
        DurationSpec(counts)
    }
}

/// Repeats each phoneme's features `durations[i]` times, filling frame
/// positions.
pub fn expand_to_frames(
    entries: &[ScoreEntry],
    durations: &DurationSpec,
    vocab: &PhonemeVocabulary,
) -> Result<FrameExpansion> {
    if entries.len() != durations.len() {
        return Err(Error::Shape(format!(
            "{} phonemes but {} durations",
            entries.len(),
            durations.len()
        )));
    }
    let mut out = FrameExpansion {
        phoneme_index: Vec::with_capacity(durations.total()),
        lf0_rows: Vec::with_capacity(durations.total()),
    };
    for (i, (e, &n)) in entries.iter().zip(durations.counts()).enumerate() {
        let phoneme_id = vocab.lookup(&e.phoneme)?;
        for frame_pos in compute_frame_pos(n as usize)? {
            out.phoneme_index.push(i as u32);
            out.lf0_rows.push(Lf0FrameRow {
                phoneme_id,
                pitch_id: e.pitch.id(),
                slur: e.slur,
                frame_pos,
            });
        }
    }
    Ok(out)
}

/// Converts aligned intervals to frame counts that sum to
/// `round(total / frame_period)`, by largest-remainder rounding (ties go to
/// the earlier phoneme), with at least one frame per phoneme.
pub fn intervals_to_durations(intervals: &[IntervalEntry], frame_period: f64) -> Result<DurationSpec> {
    if intervals.is_empty() {
        return Ok(DurationSpec(Vec::new()));
    }
    // quantized so float noise in boundaries cannot break remainder ties
    let exact: Vec<f64> = intervals
        .iter()
        .map(|iv| (iv.duration() / frame_period * 1e9).round() / 1e9)
        .collect();
    if let Some(i) = exact.iter().position(|&e| e < 0.5 - 1e-9) {
        return Err(Error::Validation(format!(
            "interval {i} ({}) is shorter than half a frame",
            intervals[i].phoneme
        )));
    }
    let span = intervals.last().map_or(0.0, |iv| iv.end) - intervals[0].start;
    let target = (span / frame_period).round() as i64;
    let mut counts = largest_remainder(&exact, target);
    // lift empty phonemes, taking frames from the longest ones
    while let Some(z) = counts.iter().position(|&c| c == 0) {
        let donor = (0..counts.len())
            .filter(|&j| counts[j] > 1)
            .max_by_key(|&j| (counts[j], std::cmp::Reverse(j)))
            .ok_or_else(|| Error::Validation("too few frames for the phoneme count".into()))?;
        counts[donor] -= 1;
        counts[z] = 1;
    }
    Ok(DurationSpec(counts.into_iter().map(|c| c as u32).collect()))
}

fn largest_remainder(exact: &[f64], target: i64) -> Vec<i64> {
    let mut counts: Vec<i64> = exact.iter().map(|e| e.floor() as i64).collect();
    let deficit = target - counts.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    if deficit >= 0 {
        order.sort_by(|&a, &b| {
            let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle().take(deficit as usize) {
            counts[i] += 1;
        }
    } else {
        order.sort_by(|&a, &b| {
            let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
            ra.total_cmp(&rb).then(b.cmp(&a))
        });
        let mut left = -deficit;
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            if counts[i] > 0 {
                counts[i] -= 1;
                left -= 1;
            }
        }
    }
    counts
}
