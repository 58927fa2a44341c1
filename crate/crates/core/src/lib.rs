//! Online signature verification built on length-normalized path signatures.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`] parses signature files, builds labelled datasets and performs
//!   template/test splits.
//! * [`pathsig`] computes truncated path signatures of 2-D polylines, their
//!   length-normalized form and rotation-invariant combinations.
//! * [`features`] turns a signature into a per-point feature sequence with a
//!   sliding window and channel-wise z-normalization.
//! * [`dtw`] is the template-matching baseline.
//! * [`gru`] is the recurrent embedding network trained with triplet and
//!   center losses.
//! * [`eval`] scores probes against templates, computes equal error rates and
//!   runs repeated-trial experiments, including a synthetic data generator.
//!
//! Batch work (pairwise distances, probe scoring, per-triplet gradients) runs
//! on rayon when the `parallel` feature is enabled and sequentially otherwise.
//! Results are identical either way.

pub mod data;
pub mod dtw;
pub mod error;
pub mod eval;
pub mod features;
pub mod gru;
pub mod par;
pub mod pathsig;
pub mod seed;

pub use error::{Error, Result};
