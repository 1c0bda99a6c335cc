//! Score to waveform: durations, frame expansion, LF0, acoustic model and
//! mel inversion, with every stage boundary dumped to disk.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use candle_core::DType;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::read_json;
use super::train::{load_acoustic, load_duration, load_lf0};
use crate::acoustic::AmBatch;
use crate::config::PipelineConfig;
use crate::corpus::{parse_intervals, parse_score, PhonemeVocabulary, ScoreEntry, Style, Utterance};
use crate::features::{expand_to_frames, intervals_to_durations, phoneme_rows, DurationSpec};
use crate::signal::{
    continuous_lf0, extract_lf0, invert_mel, read_f0_text, read_wav, write_matrix, write_wav, AutocorrelationTracker,
    MelSpectrogram, Waveform,
};
use crate::{plot, Error, Result};

/// Where phoneme durations come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DurationMode {
    Predicted,
    /// Taken from an aligned interval file.
    Intervals(PathBuf),
}

/// Where the LF0 track comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Lf0Mode {
    Predicted,
    /// Tracked from reference audio.
    Audio(PathBuf),
    /// One F0 value in Hz per line; non-positive marks unvoiced.
    F0File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisJob {
    pub score: PathBuf,
    pub speaker: u32,
    pub style: Style,
    pub durations: DurationMode,
    pub lf0: Lf0Mode,
    pub seed: u64,
    /// File stem for every output.
    pub name: String,
}

#[derive(Debug, Clone)]
pub struct SynthesisOutput {
    pub durations: DurationSpec,
    /// Log-Hz per frame.
    pub lf0: Vec<f32>,
    /// Natural-log mel amplitudes `(T, n_mels)`.
    pub mel: Array2<f32>,
    pub wav: Waveform,
    pub wav_path: PathBuf,
    pub mel_path: PathBuf,
    pub lf0_path: PathBuf,
    pub durations_path: PathBuf,
}

/// Phoneme and frame count per line.
pub fn format_durations(entries: &[ScoreEntry], d: &DurationSpec) -> String {
    let mut out = String::new();
    for (e, n) in entries.iter().zip(d.counts()) {
        let _ = writeln!(out, "{}\t{n}", e.phoneme);
    }
    out
}

pub fn read_durations(path: &Path) -> Result<DurationSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let counts = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split('\t')
                .nth(1)
                .and_then(|v| v.trim().parse::<u32>().ok())
                .ok_or_else(|| Error::Validation(format!("{}:{}: expected phoneme<TAB>frames", path.display(), i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    DurationSpec::new(counts)
}

/// Stretches or trims a reference track by at most one frame.
fn match_length(values: Vec<f32>, t: usize, what: &str) -> Result<Vec<f32>> {
    if values.len().abs_diff(t) > 1 || values.is_empty() {
        return Err(Error::Shape(format!("{what} has {} frames, durations give {t}", values.len())));
    }
    let last = *values.last().expect("non-empty");
    let mut v = values;
    v.resize(t, last);
    Ok(v)
}

/// Reads the phoneme vocabulary stored beside the checkpoints.
pub fn checkpoint_vocab(ckpt: &Path) -> Result<PhonemeVocabulary> {
    read_json(&ckpt.join("vocab.json"))
}

pub fn synthesize(job: &SynthesisJob, cfg: &PipelineConfig, ckpt: &Path, out: &Path, force: bool) -> Result<SynthesisOutput> {
    let vocab = checkpoint_vocab(ckpt)?;
    let fp = cfg.audio.frame_period();
    let entries = parse_score(&job.score)?;
    let durations = match &job.durations {
        DurationMode::Intervals(path) => {
            let intervals = parse_intervals(path, fp)?;
            let checked = Utterance::singing(&job.name, job.speaker, entries.clone(), intervals, PathBuf::new())?;
            intervals_to_durations(&checked.intervals, fp)?
        }
        DurationMode::Predicted => {
            let dm = load_duration(ckpt, cfg, &vocab, force)?;
            dm.predict(&phoneme_rows(&entries, &vocab)?, job.seed, cfg.inference.duration_sampling)?
        }
    };
    let expansion = expand_to_frames(&entries, &durations, &vocab)?;
    let t = expansion.len();
    let lf0 = match &job.lf0 {
        Lf0Mode::Predicted => {
            let m = load_lf0(ckpt, cfg, &vocab, force)?;
            m.predict(&expansion.lf0_rows, job.seed.wrapping_add(1), cfg.inference.lf0_sampling, cfg.inference.lf0_median_filter)?
        }
        Lf0Mode::Audio(path) => {
            let track = extract_lf0(&read_wav(path)?, &cfg.audio, &AutocorrelationTracker::new(&cfg.audio))?;
            match_length(track.values, t, "reference audio")?
        }
        Lf0Mode::F0File(path) => match_length(continuous_lf0(&read_f0_text(path)?)?.values, t, "F0 file")?,
    };
    let (net, stats) = load_acoustic(ckpt, cfg, &vocab, force)?;
    if job.speaker as usize >= cfg.acoustic.n_speakers {
        return Err(Error::Validation(format!("speaker {} outside the model's {} speakers", job.speaker, cfg.acoustic.n_speakers)));
    }
    let norm_lf0: Vec<f32> = lf0.iter().map(|v| stats.lf0.apply(f64::from(*v)) as f32).collect();
    let rows = expansion.am_rows(job.speaker, job.style, &norm_lf0)?;
    let batch = AmBatch::from_rows(&[&rows], DType::F32, &candle_core::Device::Cpu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed.wrapping_add(2));
    let dropout = cfg.inference.prenet_dropout.then_some(&mut rng);
    let generated = crate::nn::with_large_stack(|| net.infer(&batch, dropout))?;
    let values = generated.squeeze(0)?.to_dtype(DType::F32)?.to_vec2::<f32>()?;
    let normalized = Array2::from_shape_fn((t, stats.mel_mean.len()), |(i, j)| values[i][j]);
    let mel = stats.denormalize_mel(&normalized);
    let spectrogram = MelSpectrogram { frames: mel.clone(), frame_period: fp, sample_rate: cfg.audio.sample_rate };
    let wav = invert_mel(&spectrogram, &cfg.audio, cfg.inference.griffin_lim_iters, job.seed);

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = |ext: &str| out.join(format!("{}.{ext}", job.name));
    let (wav_path, mel_path, lf0_path, durations_path) = (path("wav"), path("mel"), path("lf0"), path("dur.tsv"));
    std::fs::write(&durations_path, format_durations(&entries, &durations)).map_err(|e| Error::io(&durations_path, e))?;
    write_matrix(&lf0_path, &Array2::from_shape_vec((t, 1), lf0.clone()).expect("one column"))?;
    write_matrix(&mel_path, &mel)?;
    write_wav(&wav_path, &wav)?;
    plot::mel_comparison(&[&mel], &path("mel.png"))?;
    Ok(SynthesisOutput { durations, lf0, mel, wav, wav_path, mel_path, lf0_path, durations_path })
}
