use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Absolute slack for comparing boundaries written with six decimals.
const BOUNDARY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEntry {
    pub phoneme: String,
    pub start: f64,
    pub end: f64,
}

impl IntervalEntry {
    pub fn new(phoneme: impl Into<String>, start: f64, end: f64) -> Self {
        Self {
            phoneme: phoneme.into(),
            start,
            end,
        }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Reads a `phoneme<TAB>start<TAB>end` file. Gaps of up to one frame
/// period are closed by snapping the start back onto the previous end;
/// larger gaps and any overlap are rejected.
pub fn parse_intervals(path: impl AsRef<Path>, frame_period: f64) -> Result<Vec<IntervalEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_intervals_str(&text, frame_period, path.display())
}

pub fn parse_intervals_str(
    text: &str,
    frame_period: f64,
    origin: impl std::fmt::Display,
) -> Result<Vec<IntervalEntry>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 3 {
            return Err(Error::parse(&origin, lineno, format!("expected 3 columns, found {}", cols.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(&origin, lineno, format!("bad time {s:?}")))
        };
        let (start, end) = (num(cols[1])?, num(cols[2])?);
        if start < 0.0 || end <= start {
            return Err(Error::parse(&origin, lineno, format!("need 0 <= start < end, got {start}..{end}")));
        }
        out.push(IntervalEntry::new(cols[0], start, end));
    }
    validate_intervals(&mut out, frame_period)?;
    Ok(out)
}

/// Checks ordering and contiguity, closing sub-frame gaps in place.
pub fn validate_intervals(intervals: &mut [IntervalEntry], frame_period: f64) -> Result<()> {
    for i in 1..intervals.len() {
        let prev_end = intervals[i - 1].end;
        let cur = &mut intervals[i];
        if cur.start < prev_end - BOUNDARY_EPS {
            return Err(Error::Validation(format!(
                "interval {i} ({}) starts at {} before previous end {prev_end}",
                cur.phoneme, cur.start
            )));
        }
        let gap = cur.start - prev_end;
        if gap > frame_period + BOUNDARY_EPS {
            return Err(Error::Validation(format!(
                "gap of {gap:.6}s before interval {i} ({}) exceeds one frame",
                cur.phoneme
            )));
        }
        cur.start = prev_end;
        if cur.end <= cur.start {
            return Err(Error::Validation(format!("interval {i} ({}) is empty", cur.phoneme)));
        }
    }
    Ok(())
}

pub fn format_intervals(intervals: &[IntervalEntry]) -> String {
    let mut out = String::new();
    for iv in intervals {
        let _ = writeln!(out, "{}\t{:.6}\t{:.6}", iv.phoneme, iv.start, iv.end);
    }
    out
}

pub fn write_intervals(path: impl AsRef<Path>, intervals: &[IntervalEntry]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_intervals(intervals)).map_err(|e| Error::io(path, e))
}
