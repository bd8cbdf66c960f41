//! Nearest-neighbor structure guidance for face enhancement.
//!
//! This crate turns decoupled morphable-model face parameters into the
//! inputs a depth/edge-conditioned image generator consumes:
//!
//! 1. [`protodb`] curates and searches an aesthetic-prototype database
//!    by cosine similarity over identity coefficients.
//! 2. [`morphable`] reconstructs shape and texture from parameters and
//!    fuses input and reference identities.
//! 3. [`renderer`] rasterizes the fused face in the input pose with a
//!    deterministic z-buffer.
//! 4. [`guidance`] extracts the depth map, contour map, and inpainting
//!    mask, and combines guidance latents with weighted addition.
//! 5. [`metrics`] scores results with identity similarity, PSNR, and
//!    SSIM.
//!
//! Heavy inner loops (search scans, rasterization, convolutions) run
//! on rayon when the default `parallel` feature is enabled, and as
//! plain loops otherwise. Both paths produce bit-identical results;
//! see [`parallel::configure_thread_cap`] for capping workers.

pub mod error;
pub mod guidance;
pub mod math;
pub mod metrics;
pub mod morphable;
pub mod parallel;
pub mod pixmap;
pub mod protodb;
pub mod renderer;
pub mod synth;

pub use error::{Error, Result};
