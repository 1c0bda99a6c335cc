//! Deterministic synthetic corpus: harmonic tones shaped by per-phoneme
//! formant envelopes. A singing speaker follows score pitches; a speaking
//! speaker wanders around 200 Hz with a steeper spectral tilt.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::AudioConfig;
use crate::corpus::{midi_to_hz, write_intervals, IntervalEntry, Manifest, ManifestRecord, Style};
use crate::signal::{write_wav, Waveform};
use crate::{Error, Result};

pub const TOY_VOWELS: [&str; 4] = ["a", "e", "i", "o"];
pub const TOY_CONSONANTS: [&str; 4] = ["m", "n", "l", "r"];
pub const SINGER: u32 = 0;
pub const SPEAKER: u32 = 1;
pub const BPM: f64 = 120.0;

const EDGE_SILENCE: usize = 8;
const CONSONANT_FRAMES: usize = 5;
const NOTE_FRAMES: [usize; 3] = [20, 30, 40];
const MIDI_RANGE: (i32, i32) = (55, 72);
const MAX_HZ: f64 = 6000.0;
const PEAK: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToySpec {
    pub sing: usize,
    pub speak: usize,
    pub seed: u64,
}

/// What one frame of a toy utterance sounds like.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoiceFrame {
    pub f0: f64,
    /// `None` is silence.
    pub phoneme: Option<&'static str>,
}

/// Formant centres in Hz and a level for each toy phoneme.
fn formants(phoneme: &str) -> ([f64; 3], f64) {
    match phoneme {
        "a" => ([800.0, 1200.0, 2500.0], 1.0),
        "e" => ([500.0, 1800.0, 2500.0], 1.0),
        "i" => ([300.0, 2300.0, 3000.0], 1.0),
        "o" => ([500.0, 900.0, 2400.0], 1.0),
        "m" => ([250.0, 1100.0, 2200.0], 0.5),
        "n" => ([250.0, 1500.0, 2500.0], 0.5),
        "l" => ([350.0, 1300.0, 2700.0], 0.6),
        _ => ([400.0, 1100.0, 1600.0], 0.6),
    }
}

fn envelope(phoneme: &str, hz: f64, tilt_hz: f64) -> f64 {
    let (centres, level) = formants(phoneme);
    let peaks: f64 = centres
        .iter()
        .map(|c| {
            let bw = 90.0 + 0.06 * c;
            (-0.5 * ((hz - c) / bw).powi(2)).exp()
        })
        .sum();
    level * (0.05 + peaks) * (-hz / tilt_hz).exp()
}

/// Spectral tilt constant for a style, in Hz.
pub fn tilt_for(style: Style) -> f64 {
    match style {
        Style::Singing => 3000.0,
        Style::Speaking => 1200.0,
    }
}

/// Renders `frames.len() * hop` samples. Frame `t` is centred on sample
/// `t * hop`; F0 and harmonic amplitudes are interpolated between centres.
pub fn render_voice(frames: &[VoiceFrame], tilt_hz: f64, cfg: &AudioConfig) -> Waveform {
    let hop = cfg.hop_length;
    let sr = f64::from(cfg.sample_rate);
    let max_h = frames
        .iter()
        .filter(|f| f.phoneme.is_some())
        .map(|f| (MAX_HZ / f.f0).floor() as usize)
        .max()
        .unwrap_or(0);
    let amps: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| match f.phoneme {
            None => vec![0.0; max_h],
            Some(p) => {
                let raw: Vec<f64> = (1..=max_h)
                    .map(|h| {
                        let hz = h as f64 * f.f0;
                        if hz < MAX_HZ { envelope(p, hz, tilt_hz) } else { 0.0 }
                    })
                    .collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|a| PEAK * a / total).collect()
            }
        })
        .collect();
    let n = frames.len() * hop;
    let mut out = vec![0.0f32; n];
    let mut phase = vec![0.0f64; max_h];
    let last = frames.len().saturating_sub(1);
    for (i, y) in out.iter_mut().enumerate() {
        let t = i / hop;
        let next = (t + 1).min(last);
        let a = (i % hop) as f64 / hop as f64;
        let f0 = frames[t].f0 + (frames[next].f0 - frames[t].f0) * a;
        let mut acc = 0.0;
        for (h, ph) in phase.iter_mut().enumerate() {
            *ph = (*ph + 2.0 * std::f64::consts::PI * (h + 1) as f64 * f0 / sr) % (2.0 * std::f64::consts::PI);
            let amp = amps[t][h] + (amps[next][h] - amps[t][h]) * a;
            if amp != 0.0 {
                acc += amp * ph.sin();
            }
        }
        *y = acc as f32;
    }
    Waveform::new(out, cfg.sample_rate)
}

/// One generated utterance before it is written out.
struct Draft {
    id: String,
    style: Style,
    speaker: u32,
    /// `(phoneme, frames, midi, slur)`; `midi` is `None` for rests and speech.
    phones: Vec<(&'static str, usize, Option<i32>, bool)>,
    /// Note length in frames for each phone (singing only).
    note_frames: Vec<usize>,
    f0: Vec<f64>,
}

fn singing_draft(id: String, rng: &mut ChaCha8Rng) -> Draft {
    let mut phones = vec![("sil", EDGE_SILENCE, None, false)];
    let mut note_frames = vec![EDGE_SILENCE];
    let mut f0 = vec![0.0; EDGE_SILENCE];
    let mut midi = rng.gen_range(MIDI_RANGE.0 + 2..=MIDI_RANGE.1 - 3);
    let mut vowel = TOY_VOWELS[rng.gen_range(0..4)];
    let notes = rng.gen_range(3..=4);
    for k in 0..notes {
        if k > 0 {
            midi = (midi + rng.gen_range(-5..=5)).clamp(MIDI_RANGE.0, MIDI_RANGE.1);
        }
        let len = NOTE_FRAMES[rng.gen_range(0..NOTE_FRAMES.len())];
        let hz = midi_to_hz(f64::from(midi));
        if k > 0 && rng.gen_bool(0.25) {
            phones.push((vowel, len, Some(midi), true));
            note_frames.push(len);
        } else {
            vowel = TOY_VOWELS[rng.gen_range(0..4)];
            let consonant = TOY_CONSONANTS[rng.gen_range(0..4)];
            phones.push((consonant, CONSONANT_FRAMES, Some(midi), false));
            phones.push((vowel, len - CONSONANT_FRAMES, Some(midi), false));
            note_frames.extend([len, len]);
        }
        f0.extend(std::iter::repeat(hz).take(len));
    }
    phones.push(("sil", EDGE_SILENCE, None, false));
    note_frames.push(EDGE_SILENCE);
    f0.extend(std::iter::repeat(0.0).take(EDGE_SILENCE));
    Draft { id, style: Style::Singing, speaker: SINGER, phones, note_frames, f0 }
}

fn speaking_draft(id: String, rng: &mut ChaCha8Rng) -> Draft {
    let mut phones = vec![("sil", EDGE_SILENCE, None, false)];
    for _ in 0..rng.gen_range(4..=5) {
        phones.push((TOY_CONSONANTS[rng.gen_range(0..4)], rng.gen_range(4..=6), None, false));
        phones.push((TOY_VOWELS[rng.gen_range(0..4)], rng.gen_range(10..=18), None, false));
    }
    phones.push(("sil", EDGE_SILENCE, None, false));
    let total: usize = phones.iter().map(|p| p.1).sum();
    let (p1, p2) = (rng.gen_range(30.0..50.0), rng.gen_range(9.0..15.0));
    let (o1, o2) = (rng.gen_range(0.0..6.28), rng.gen_range(0.0..6.28));
    let f0 = (0..total)
        .map(|t| {
            let t = t as f64;
            let wander = 0.10 * (2.0 * std::f64::consts::PI * t / p1 + o1).sin()
                + 0.04 * (2.0 * std::f64::consts::PI * t / p2 + o2).sin();
            200.0 * (wander - 0.0008 * t).exp()
        })
        .collect();
    let note_frames = phones.iter().map(|p| p.1).collect();
    Draft { id, style: Style::Speaking, speaker: SPEAKER, phones, note_frames, f0 }
}

fn voice_frames(d: &Draft) -> Vec<VoiceFrame> {
    let mut out = Vec::with_capacity(d.f0.len());
    let mut last_voiced = d.f0.iter().copied().find(|v| *v > 0.0).unwrap_or(200.0);
    for (p, n, _, _) in &d.phones {
        for _ in 0..*n {
            let t = out.len();
            if d.f0[t] > 0.0 {
                last_voiced = d.f0[t];
            }
            out.push(VoiceFrame {
                f0: last_voiced,
                phoneme: (*p != "sil").then_some(*p),
            });
        }
    }
    out
}

fn intervals(d: &Draft, frame_period: f64) -> Vec<IntervalEntry> {
    let mut start = 0usize;
    d.phones
        .iter()
        .map(|(p, n, _, _)| {
            let iv = IntervalEntry::new(*p, start as f64 * frame_period, (start + n) as f64 * frame_period);
            start += n;
            iv
        })
        .collect()
}

/// Score text in beats under a `#BPM` header.
fn score_text(d: &Draft, frame_period: f64) -> String {
    let beat = 60.0 / BPM;
    let mut out = format!("#BPM {BPM}\n");
    for ((p, _, midi, slur), len) in d.phones.iter().zip(&d.note_frames) {
        let pitch = match midi {
            Some(m) => crate::corpus::Pitch::Midi(*m as u8).to_string(),
            None => "REST".to_string(),
        };
        let beats = *len as f64 * frame_period / beat;
        let _ = writeln!(out, "{p}\t{pitch}\t{beats}\t{}", u8::from(*slur));
    }
    out
}

/// Writes `manifest.jsonl` plus `wav/`, `score/`, `text/` and `interval/`
/// under `dir`. Identical specs give byte-identical files.
pub fn make_toy_corpus(dir: &Path, spec: &ToySpec, cfg: &AudioConfig) -> Result<Manifest> {
    for sub in ["wav", "score", "text", "interval"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fp = cfg.frame_period();
    let drafts: Vec<Draft> = (0..spec.sing)
        .map(|i| singing_draft(format!("sing_{i:03}"), &mut rng))
        .collect::<Vec<_>>()
        .into_iter()
        .chain((0..spec.speak).map(|i| speaking_draft(format!("speak_{i:03}"), &mut rng)))
        .collect();
    let mut records = Vec::with_capacity(drafts.len());
    for d in &drafts {
        let wav = format!("wav/{}.wav", d.id);
        let lab = format!("interval/{}.lab", d.id);
        let audio = render_voice(&voice_frames(d), tilt_for(d.style), cfg);
        write_wav(dir.join(&wav), &audio)?;
        write_intervals(dir.join(&lab), &intervals(d, fp))?;
        let score = match d.style {
            Style::Singing => {
                let p = format!("score/{}.score", d.id);
                let path = dir.join(&p);
                std::fs::write(&path, score_text(d, fp)).map_err(|e| Error::io(&path, e))?;
                p
            }
            Style::Speaking => {
                let p = format!("text/{}.txt", d.id);
                let path = dir.join(&p);
                let words: Vec<&str> = d.phones.iter().map(|p| p.0).collect();
                std::fs::write(&path, words.join(" ") + "\n").map_err(|e| Error::io(&path, e))?;
                p
            }
        };
        records.push(ManifestRecord {
            id: d.id.clone(),
            style: d.style,
            speaker: d.speaker,
            score_path: Some(score.into()),
            interval_path: lab.into(),
            audio_path: wav.into(),
        });
    }
    let manifest = Manifest { root: dir.to_path_buf(), records };
    manifest.save(dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
