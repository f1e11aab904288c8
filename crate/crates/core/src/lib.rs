//! Two-pathway compositional action recognition at desk scale.
//!
//! The library is organized around four layers:
//!
//! - [`tensor`]: a minimal dense-tensor engine with reverse-mode
//!   differentiation on a per-forward tape, plus finite-difference
//!   gradient checking.
//! - [`data`]: a synthetic benchmark of moving-shape clips with exact
//!   ground-truth object tracks, and the compositional / few-shot split
//!   builders over it.
//! - [`model`]: the structured-information (track) pathway, the visual
//!   (pixel) pathway, the bidirectional cross-attention fusion operator,
//!   and the topologies that wire them together.
//! - [`train`]: SGD with momentum and a step schedule, evaluation
//!   metrics, few-shot finetuning with a frozen backbone, prediction
//!   ensembling, and checkpoint / run-manifest formats.

pub mod data;
mod error;
pub mod gradsuite;
pub mod model;
pub mod par;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
