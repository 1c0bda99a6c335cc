//! Neural network building blocks on top of candle tensors.

mod cbhg;
mod grl;
mod gru;
mod layers;
mod pad;
mod params;
mod train;

pub use cbhg::Cbhg;
pub use grl::GradientReversal;
pub use gru::{time_steps, BiGru, Gru};
pub use layers::{apply_mask, dropout, sequence_mask, Conv1d, Dense, Embedding, Highway, LayerNorm, Prenet};
pub use pad::{masked_mean, pad_frames, pad_ids};
pub use params::{ParamKind, ParamStore};
pub use train::{with_large_stack, Trainer};
