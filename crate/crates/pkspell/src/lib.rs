//! Joint pitch spelling and key signature estimation for MIDI note sequences.
//!
//! Given only the information available in any Standard MIDI File — note
//! onsets, durations and pitches — this crate assigns each note a
//! tonal-pitch-class (one of 35 spelled names) and a key signature (one of 15
//! fifths counts). The estimator is a two-stage bidirectional gated recurrent
//! network over (pitch-class, duration-class) inputs: the first stage feeds a
//! 35-way spelling head, the second consumes the first stage's hidden states
//! and feeds a 15-way key signature head. Training minimizes the sum of the
//! two cross-entropies; gradients are computed analytically and checked
//! against finite differences.
//!
//! Supporting pieces:
//!
//! - [`tonal`]: pitch classes, tonal-pitch-classes, key signatures and
//!   line-of-fifths transposition.
//! - [`quant`]: per-piece duration classes via exact 1-D k-means.
//! - [`midi`]: Standard MIDI File note extraction with tempo maps.
//! - [`corpus`]: the labeled corpus and prediction interchange formats.
//! - [`augment`]: transposition-based augmentation with parsimonious
//!   spelling of each chromatic interval.
//! - [`neural`]: the recurrent model, its exact gradients and weight files.
//! - [`train`] / [`eval`]: the training loop (Adam, stepped learning rate)
//!   and the evaluation report.

pub mod augment;
pub mod corpus;
pub mod eval;
pub mod midi;
pub mod neural;
pub mod quant;
pub mod tonal;
pub mod train;

pub use corpus::{LabeledPiece, Note, Piece};
pub use neural::{ArchVariant, ModelConfig, ModelParams};
pub use tonal::{FifthShift, KeySignature, PitchClass, Tpc};
