//! Multi-source domain adaptation for text classification with a
//! curriculum-weighted, cycle-consistent adversarial generator.
//!
//! The pipeline: documents are encoded into a continuous representation
//! space ([`text`]), a source-to-target generator is trained adversarially
//! with cycle-consistency and per-batch instance weighting ([`ccgan`]), and
//! a classifier trained on the generated intermediate domain is applied to
//! the target directly. [`synth`] and [`eval`] provide oracle-backed tasks
//! and the experiment harness.

pub mod autodiff;
pub mod ccgan;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod nn;
pub mod sampling;
pub mod synth;
pub mod task;
pub mod text;

pub use autodiff::{Matrix, Tape, Var};
pub use dataset::{Document, EncodedDataset};
pub use error::{Error, Result};
pub use task::{HeldOutLabels, TrainingView};
