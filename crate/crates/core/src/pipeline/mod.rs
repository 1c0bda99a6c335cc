//! Corpus preparation, training orchestration, synthesis and evaluation.

pub mod dataset;
pub mod disentangle;
pub mod evaluate;
pub mod prepare;
pub mod synth;
pub mod toy;
pub mod train;

pub use dataset::{CachedUtterance, CorpusStats, Dataset};
pub use disentangle::{style_probe, ProbeOutcome};
pub use evaluate::{evaluate, EvalReport, Metric, Reference, Sources};
pub use prepare::{prepare, PrepareReport};
pub use synth::{synthesize, DurationMode, Lf0Mode, SynthesisJob, SynthesisOutput};
pub use toy::{make_toy_corpus, ToySpec};
pub use train::{fit_acoustic, fit_duration, fit_lf0, train_am, train_dm, train_lf0, AmData};
