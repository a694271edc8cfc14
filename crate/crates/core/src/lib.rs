//! Timestamp-supervised clip editing for caption-to-clip retrieval.
//!
//! Captions come with a single timestamp instead of start/end times. Rough
//! clips are cut around each timestamp, a dual encoder is warmed up on them,
//! and a teacher copy of the encoder then tightens every clip to the span
//! its most caption-like segments agree on while a student retrains on the
//! edited clips.
//!
//! Modules, bottom-up:
//! - [`timeline`]: intervals, IoU, segment grids, initial clips, jitter
//! - [`corpus`]: feature/annotation formats and a synthetic corpus generator
//! - [`encoder`]: dual encoder, symmetric InfoNCE, optimiser, checkpoints
//! - [`editor`]: Top-K segment selection and IoU-consensus boundary choice
//! - [`cotrain`]: warm-up, control set, student/teacher loop
//! - [`evalrep`]: R@K, MedR, IoU histograms

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod cotrain;
pub mod editor;
pub mod encoder;
mod error;
pub mod evalrep;
pub mod linalg;
pub mod timeline;

pub use error::{Error, Result};
