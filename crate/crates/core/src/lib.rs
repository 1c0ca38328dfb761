//! Permuted restaurant-reservation dialogs and the models trained on them.
//!
//! The crate covers the whole pipeline: a simulator that writes corpora
//! annotated with every valid next system utterance, featurization for
//! end-to-end memory networks, the memory network itself with hand-derived
//! gradients, the answer-masking variant trained with supervised and
//! REINFORCE phases, and multi-answer evaluation.

pub mod chat;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod generator;
pub mod mask;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
