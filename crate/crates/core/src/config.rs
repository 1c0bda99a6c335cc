//! Pipeline configuration. Loaded from TOML (or JSON when the file ends in
//! `.json`); every field has a default so partial files are fine.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub audio: AudioConfig,
    pub acoustic: AcousticConfig,
    pub duration: MdnModelConfig,
    pub lf0: MdnModelConfig,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub probe: ProbeConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            audio: AudioConfig::default(),
            acoustic: AcousticConfig::default(),
            duration: MdnModelConfig::default(),
            lf0: MdnModelConfig::default(),
            train: TrainConfig::default(),
            inference: InferenceConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    pub sample_rate: u32,
    pub hop_length: usize,
    pub win_length: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Amplitude floor applied before the log.
    pub mel_floor: f64,
    pub f0_min: f64,
    pub f0_max: f64,
    /// Minimum normalized autocorrelation peak for a voiced frame.
    pub voicing_threshold: f64,
    /// Frames quieter than this RMS are unvoiced.
    pub silence_rms: f64,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            sample_rate: 24_000,
            hop_length: 300,
            win_length: 1200,
            n_fft: 2048,
            n_mels: 80,
            fmin: 0.0,
            fmax: 12_000.0,
            mel_floor: 1e-5,
            f0_min: 50.0,
            f0_max: 1200.0,
            voicing_threshold: 0.45,
            silence_rms: 1e-3,
        }
    }
}

impl AudioConfig {
    pub fn frame_period(&self) -> f64 {
        self.hop_length as f64 / f64::from(self.sample_rate)
    }

    pub fn log_floor(&self) -> f32 {
        self.mel_floor.ln() as f32
    }
}

/// CBHG block: conv bank, max-pool, two projections, highways, bi-GRU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbhgConfig {
    /// Number of conv filter sets.
    pub bank_size: usize,
    /// Kernel width shared by every set; 0 gives set `k` width `k`.
    pub bank_kernel: usize,
    pub channels: usize,
    pub proj_kernel: usize,
    pub highway_layers: usize,
    /// Hidden width per direction; the block outputs twice this.
    pub gru_width: usize,
}

impl Default for CbhgConfig {
    fn default() -> Self {
        Self {
            bank_size: 16,
            bank_kernel: 3,
            channels: 256,
            proj_kernel: 3,
            highway_layers: 4,
            gru_width: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcousticConfig {
    pub n_speakers: usize,
    pub phoneme_embed: usize,
    pub frame_pos_dim: usize,
    pub speaker_embed: usize,
    pub style_embed: usize,
    pub lf0_dim: usize,
    pub encoder: CbhgConfig,
    pub prenet: Vec<usize>,
    pub prenet_dropout: f64,
    pub dat_width: usize,
    pub decoder_layers: usize,
    pub decoder_width: usize,
    pub postnet: CbhgConfig,
    pub classifier_hidden: usize,
}

impl Default for AcousticConfig {
    fn default() -> Self {
        Self {
            n_speakers: 4,
            phoneme_embed: 256,
            frame_pos_dim: 32,
            speaker_embed: 64,
            style_embed: 64,
            lf0_dim: 64,
            encoder: CbhgConfig::default(),
            prenet: vec![256, 128],
            prenet_dropout: 0.5,
            dat_width: 256,
            decoder_layers: 2,
            decoder_width: 512,
            postnet: CbhgConfig {
                bank_size: 8,
                bank_kernel: 3,
                channels: 256,
                proj_kernel: 3,
                highway_layers: 4,
                gru_width: 128,
            },
            classifier_hidden: 256,
        }
    }
}

/// Shared shape of the duration and LF0 mixture-density models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdnModelConfig {
    pub phoneme_embed: usize,
    pub pitch_embed: usize,
    pub slur_embed: usize,
    pub scalar_dim: usize,
    pub encoder: CbhgConfig,
    pub mixtures: usize,
    pub var_floor: f64,
}

impl Default for MdnModelConfig {
    fn default() -> Self {
        Self {
            phoneme_embed: 128,
            pitch_embed: 64,
            slur_embed: 16,
            scalar_dim: 32,
            encoder: CbhgConfig {
                bank_size: 8,
                bank_kernel: 3,
                channels: 128,
                proj_kernel: 3,
                highway_layers: 4,
                gru_width: 64,
            },
            mixtures: 8,
            var_floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dm_steps: usize,
    pub lf0_steps: usize,
    pub am_steps: usize,
    pub grad_clip: f64,
    /// Weight of the style-adversarial loss.
    pub lambda: f64,
    /// Scale applied to gradients passing backwards through the reversal
    /// connector (the connector multiplies them by `-grl_scale`).
    pub grl_scale: f64,
    pub l2: f64,
    /// Also fit the duration and LF0 models on speaking utterances.
    pub predictors_on_speaking: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 16,
            dm_steps: 20_000,
            lf0_steps: 20_000,
            am_steps: 100_000,
            grad_clip: 1.0,
            lambda: 0.001,
            grl_scale: 1.0,
            l2: 1e-6,
            predictors_on_speaking: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    Stochastic,
    MeanOfMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub duration_sampling: SamplingMode,
    pub lf0_sampling: SamplingMode,
    pub lf0_median_filter: bool,
    pub prenet_dropout: bool,
    pub griffin_lim_iters: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            duration_sampling: SamplingMode::Stochastic,
            lf0_sampling: SamplingMode::MeanOfMax,
            lf0_median_filter: true,
            prenet_dropout: true,
            griffin_lim_iters: 60,
        }
    }
}

/// Budget for the linear style probe that compares latents of an
/// adversarially trained acoustic model against a plain one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Acoustic training steps per compared model.
    pub am_steps: usize,
    /// Adversarial weight of the model compared against `lambda = 0`.
    pub lambda: f64,
    pub grl_scale: f64,
    /// Utterances per style withheld from probe fitting.
    pub held_out: usize,
    pub iterations: usize,
    pub l2: f64,
    pub seeds: Vec<u64>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            am_steps: 150,
            lambda: 0.001,
            grl_scale: 1.0,
            held_out: 3,
            iterations: 500,
            l2: 1e-3,
            seeds: vec![1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Duration,
    Lf0,
    Acoustic,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Duration => "duration",
            ModelKind::Lf0 => "lf0",
            ModelKind::Acoustic => "acoustic",
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Small widths and step budgets for the bundled synthetic corpus.
    pub fn desk() -> Self {
        let small_cbhg = |bank, channels, gru| CbhgConfig {
            bank_size: bank,
            bank_kernel: 3,
            channels,
            proj_kernel: 3,
            highway_layers: 2,
            gru_width: gru,
        };
        let mdn = MdnModelConfig {
            phoneme_embed: 16,
            pitch_embed: 16,
            slur_embed: 4,
            scalar_dim: 8,
            encoder: small_cbhg(4, 32, 16),
            mixtures: 8,
            var_floor: 1e-4,
        };
        Self {
            seed: 7,
            audio: AudioConfig::default(),
            acoustic: AcousticConfig {
                n_speakers: 4,
                phoneme_embed: 16,
                frame_pos_dim: 8,
                speaker_embed: 8,
                style_embed: 8,
                lf0_dim: 8,
                encoder: small_cbhg(4, 32, 16),
                prenet: vec![64, 32],
                prenet_dropout: 0.5,
                dat_width: 32,
                decoder_layers: 2,
                decoder_width: 96,
                postnet: small_cbhg(4, 48, 24),
                classifier_hidden: 32,
            },
            duration: mdn.clone(),
            lf0: mdn,
            train: TrainConfig {
                learning_rate: 3e-3,
                batch_size: 20,
                dm_steps: 400,
                lf0_steps: 400,
                am_steps: 600,
                grad_clip: 1.0,
                lambda: 0.001,
                grl_scale: 1.0,
                l2: 1e-6,
                predictors_on_speaking: false,
            },
            inference: InferenceConfig::default(),
            probe: ProbeConfig {
                am_steps: 150,
                lambda: 1.0,
                grl_scale: 0.03,
                ..ProbeConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.audio;
        if a.hop_length == 0 || a.win_length == 0 || a.n_fft < a.win_length || a.n_mels == 0 {
            return Err(Error::Config("audio: need hop > 0, 0 < win <= n_fft, n_mels > 0".into()));
        }
        if !(a.fmin >= 0.0 && a.fmax > a.fmin && a.fmax <= f64::from(a.sample_rate) / 2.0) {
            return Err(Error::Config("audio: need 0 <= fmin < fmax <= nyquist".into()));
        }
        if !(a.f0_min > 0.0 && a.f0_max > a.f0_min) {
            return Err(Error::Config("audio: need 0 < f0_min < f0_max".into()));
        }
        if self.duration.mixtures == 0 || self.lf0.mixtures == 0 {
            return Err(Error::Config("mixtures must be >= 1".into()));
        }
        if self.train.lambda < 0.0 {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if self.acoustic.prenet.is_empty() || self.acoustic.decoder_layers == 0 {
            return Err(Error::Config("acoustic: prenet and decoder need at least one layer".into()));
        }
        Ok(())
    }

    /// Digest of everything that fixes a model's parameter layout and
    /// feature space: audio parameters plus that model's architecture.
    pub fn model_hash(&self, kind: ModelKind) -> String {
        let arch = match kind {
            ModelKind::Duration => serde_json::to_value(&self.duration),
            ModelKind::Lf0 => serde_json::to_value(&self.lf0),
            ModelKind::Acoustic => serde_json::to_value(&self.acoustic),
        }
        .expect("config serializes");
        let audio = serde_json::to_value(&self.audio).expect("config serializes");
        let mut h = Sha256::new();
        h.update(kind.name().as_bytes());
        h.update(audio.to_string().as_bytes());
        h.update(arch.to_string().as_bytes());
        hex::encode(&h.finalize()[..8])
    }
}
