//! Copy-and-paste video inpainting.
//!
//! Each frame's hole is completed from other frames of the clip: references
//! are registered onto the target with a masked affine fit, a context matcher
//! scores them with a masked softmax, and the weighted content is pasted into
//! the hole. Pixels that no reference sees are filled by harmonic diffusion.
//! Completed frames replace their originals as references, and a forward and
//! a reverse pass are blended for temporal coherence.

pub mod align;
pub mod cli;
pub mod config;
pub mod datasynth;
pub mod error;
pub mod eval;
pub mod features;
pub mod losses;
pub mod matcher;
pub mod media;
pub mod paste;
pub mod pipeline;
pub mod texture;

pub use error::{Error, Result};
