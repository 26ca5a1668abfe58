//! Adaptive filter sets learned from natural-image patches, with two
//! applications on top: full-reference image quality estimation (UNIQUE and
//! MS-UNIQUE) and hierarchical texture retrieval.
//!
//! The pipeline is: sample patches -> iterated ZCA whitening -> sparse linear
//! decoder trained with L-BFGS -> filter responses compared with Spearman
//! correlation. See the module docs for the individual stages.

pub mod decoder;
pub mod error;
pub mod image;
pub mod iqa;
pub mod lbfgs;
pub mod metrics;
pub mod model_io;
pub mod patches;
pub mod synth;
pub mod texture;
pub mod whitening;

pub use error::{Error, Result};
pub use image::Image;
pub use patches::PatchMatrix;
