//! Question generation for acquiring the class of unknown objects.

pub mod corpus;
pub mod error;
pub mod image;
pub mod kb;
pub mod metrics;
pub mod numeric;
pub mod pipeline;
pub mod poincare;
pub mod proposal;
pub mod qgen;
pub mod saliency;
pub mod synth;
pub mod taxonomy;
pub mod uncertainty;

pub use error::{Error, Result};
pub use image::Image;
