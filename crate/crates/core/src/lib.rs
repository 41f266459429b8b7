//! Referential-game datasets of textured grid scenes, plus emergent-language
//! metrics and symbolic oracle agents.

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod par;
pub mod render;
pub mod sampler;
pub mod scene;

pub use error::{Error, FormatError, Result};
