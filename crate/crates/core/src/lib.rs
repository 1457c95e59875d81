//! Semi-supervised prediction distillation with adaptive sharpening.

pub mod data;
pub mod distill;
pub mod error;
pub mod harness;
pub mod net;
pub mod objective;
pub mod oracle;
pub mod probtransform;

pub use error::{AdsError, Result};
