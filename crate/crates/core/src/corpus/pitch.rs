use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lowest and highest MIDI numbers accepted in scores (piano range A0..C8).
pub const MIDI_MIN: u8 = 21;
pub const MIDI_MAX: u8 = 108;

/// Number of categorical pitch ids: one REST id plus the piano range.
pub const PITCH_VOCAB_SIZE: usize = (MIDI_MAX - MIDI_MIN) as usize + 2;

/// A score pitch: a MIDI note number or a rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pitch {
    Rest,
    Midi(u8),
}

impl Pitch {
    /// Categorical id used by the embedding tables. REST is 0, MIDI notes
    /// map to `1..PITCH_VOCAB_SIZE`.
    pub fn id(self) -> u32 {
        match self {
            Pitch::Rest => 0,
            Pitch::Midi(m) => u32::from(m - MIDI_MIN) + 1,
        }
    }

    pub fn is_rest(self) -> bool {
        matches!(self, Pitch::Rest)
    }

    /// Equal-tempered frequency with A4 = 440 Hz.
    pub fn hz(self) -> Option<f64> {
        match self {
            Pitch::Rest => None,
            Pitch::Midi(m) => Some(midi_to_hz(f64::from(m))),
        }
    }
}

pub fn midi_to_hz(midi: f64) -> f64 {
    440.0 * 2f64.powf((midi - 69.0) / 12.0)
}

/// Parses scientific pitch notation (`C4`, `F#3`, `Bb2`) or `REST`.
///
/// Returns `Pitch::Rest` for rests; notes outside the piano range are
/// rejected.
pub fn pitch_to_midi(name: &str) -> Result<Pitch> {
    let name = name.trim();
    if name.eq_ignore_ascii_case("rest") || name == "R" || name == "-" {
        return Ok(Pitch::Rest);
    }
    let bad = || Error::Validation(format!("invalid note name {name:?}"));
    let mut chars = name.chars();
    let letter = chars.next().ok_or_else(bad)?;
    let base: i32 = match letter.to_ascii_uppercase() {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return Err(bad()),
    };
    let rest = chars.as_str();
    let accidentals = rest
        .chars()
        .take_while(|c| matches!(c, '#' | 'b' | '♯' | '♭'))
        .collect::<Vec<_>>();
    let shift: i32 = accidentals
        .iter()
        .map(|c| if matches!(c, '#' | '♯') { 1 } else { -1 })
        .sum();
    let octave_str: String = rest.chars().skip(accidentals.len()).collect();
    let octave: i32 = octave_str.parse().map_err(|_| bad())?;
    let midi = 12 * (octave + 1) + base + shift;
    if !(i32::from(MIDI_MIN)..=i32::from(MIDI_MAX)).contains(&midi) {
        return Err(Error::Validation(format!(
            "note {name:?} (MIDI {midi}) outside {MIDI_MIN}..={MIDI_MAX}"
        )));
    }
    Ok(Pitch::Midi(midi as u8))
}

impl FromStr for Pitch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        pitch_to_midi(s)
    }
}

impl fmt::Display for Pitch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [&str; 12] = [
            "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
        ];
        match self {
            Pitch::Rest => f.write_str("REST"),
            Pitch::Midi(m) => {
                let m = i32::from(*m);
                write!(f, "{}{}", NAMES[(m % 12) as usize], m / 12 - 1)
            }
        }
    }
}
