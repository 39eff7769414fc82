//! Masked affine registration of reference frames onto a target frame.

mod affine;
mod estimate;
mod warp;

pub use affine::{
    compose_affine, corner_error, corner_error_px, invert_affine, AffineParams, PixelAffine,
    MIN_DET,
};
pub use estimate::{
    estimate_affine, register, AlignConfig, AlignProblem, InitMode, Registration, TraceEntry,
    MIN_JOINT_VISIBILITY,
};
pub use warp::{resample, warp_affine, Raster, VISIBILITY_THRESHOLD};
