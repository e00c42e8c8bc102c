//! Beam-search length-bias laboratory.
//!
//! A small, exactly testable stand-in for the question "why do large beams
//! hurt translation quality?": a count-based transducer is trained on a
//! length-biased parallel corpus (optionally augmented by multi-sentence
//! resampling), decoded with beam search at many widths, and the outputs are
//! broken down into improved / early-EOS prefix / other categories.

pub mod analysis;
pub mod augment;
pub mod corpus;
pub mod decoded;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod model;
pub mod search;
