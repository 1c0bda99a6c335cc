//! Singing synthesis toolkit that trains one acoustic model on a singing
//! teacher and speech-only students, with mixture-density duration and LF0
//! predictors and a style-adversarial latent.
//!
//! Module map:
//! - [`corpus`]: scores, interval files, manifests, phoneme vocabulary.
//! - [`signal`]: mel extraction, continuous LF0, mel inversion, cache files.
//! - [`features`]: per-model input rows and frame expansion.
//! - [`mdn`]: Gaussian mixture heads, NLL and sampling.
//! - [`duration`], [`lf0`], [`acoustic`]: the three trainable models.
//! - [`pipeline`]: corpus preparation, training, synthesis and evaluation.

pub mod acoustic;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod duration;
mod error;
pub mod features;
pub mod lf0;
pub mod mdn;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod probe;
pub mod signal;

pub use error::{Error, Result};
