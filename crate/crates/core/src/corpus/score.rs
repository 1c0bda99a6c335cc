//! Line-based score files.
//!
//! ```text
//! #BPM 100          (optional; when present the duration column is in beats)
//! t     C4    0.6   0
//! ian   C4    0.6   1
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pitch::{pitch_to_midi, Pitch};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub phoneme: String,
    pub pitch: Pitch,
    /// Note duration in seconds.
    pub note_dur: f64,
    pub slur: bool,
}

pub fn parse_score(path: impl AsRef<Path>) -> Result<Vec<ScoreEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_score_str(&text, path.display())
}

pub fn parse_score_str(text: &str, origin: impl std::fmt::Display) -> Result<Vec<ScoreEntry>> {
    let mut bpm: Option<f64> = None;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            let mut parts = header.split_whitespace();
            if parts.next().is_some_and(|k| k.eq_ignore_ascii_case("bpm")) {
                if !entries.is_empty() {
                    return Err(Error::parse(&origin, lineno, "#BPM must precede the first note"));
                }
                let value = parts
                    .next()
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite() && *v > 0.0)
                    .ok_or_else(|| Error::parse(&origin, lineno, "#BPM needs a positive number"))?;
                bpm = Some(value);
            }
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                &origin,
                lineno,
                format!("expected 4 columns (phoneme pitch dur slur), found {}", cols.len()),
            ));
        }
        let pitch = pitch_to_midi(cols[1]).map_err(|e| Error::parse(&origin, lineno, e.to_string()))?;
        let written: f64 = cols[2]
            .parse()
            .map_err(|_| Error::parse(&origin, lineno, format!("bad duration {:?}", cols[2])))?;
        let note_dur = match bpm {
            Some(bpm) => 60.0 / bpm * written,
            None => written,
        };
        if !(note_dur.is_finite() && note_dur > 0.0) {
            return Err(Error::parse(&origin, lineno, "note duration must be positive"));
        }
        let slur = match cols[3] {
            "0" | "false" => false,
            "1" | "true" => true,
            other => return Err(Error::parse(&origin, lineno, format!("bad slur flag {other:?}"))),
        };
        entries.push(ScoreEntry {
            phoneme: cols[0].to_string(),
            pitch,
            note_dur,
            slur,
        });
    }
    Ok(entries)
}

/// Writes entries with durations in seconds. Reparsing yields an equal list.
pub fn format_score(entries: &[ScoreEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", e.phoneme, e.pitch, e.note_dur, u8::from(e.slur));
    }
    out
}

pub fn write_score(path: impl AsRef<Path>, entries: &[ScoreEntry]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_score(entries)).map_err(|e| Error::io(path, e))
}
