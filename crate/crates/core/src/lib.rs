//! Word-level two-speaker diarization for telephone interviews.
//!
//! Tags every recognized word with an Interviewer or Customer label by
//! fusing a character-level LSTM word classifier with GMM acoustic scores
//! in an iterative refinement loop, and scores the result at the word
//! level (WDER).

pub mod corpus;
pub mod error;
pub mod features;
pub mod neural;
pub mod scoring;
pub mod tagger;

pub use error::{Error, Result};
