//! Audio analysis: log-mel spectrograms, continuous LF0, mel inversion and
//! the cached feature file format.

mod cache;
mod f0;
mod inversion;
mod mel;
mod stft;
mod wav;

pub use cache::{decode_matrix, encode_matrix, read_matrix, write_matrix, FEATURE_MAGIC};
pub use f0::{
    continuous_lf0, extract_lf0, read_f0_text, write_f0_text, AutocorrelationTracker, ExternalF0,
    Lf0Track, PitchTracker,
};
pub use inversion::invert_mel;
pub use mel::{extract_mel, hz_to_mel, mel_to_hz, MelFilterbank, MelSpectrogram};
pub use stft::Stft;
pub use wav::{read_wav, resample, write_wav, Waveform};
