//! Compilation-error feedback for C programs.
//!
//! A corpus of (buggy, repaired) program pairs is compiled, each single-line
//! edit is abstracted to type tags and diffed, and the resulting
//! error-repair classes train a one-hidden-layer network. At inference each
//! compiler-reported line is classified and served frequency-ranked
//! example fixes from its predicted class.

pub mod abstraction;
pub mod api;
pub mod classifier;
pub mod corpus;
pub mod diagnostics;
pub mod encoder;
pub mod model;
pub mod repair;
pub mod suggester;
pub mod synth;

pub use model::{train_model, TrainedModel};
pub use suggester::{suggest, ExampleIndex, SuggestOptions, Suggestion};
