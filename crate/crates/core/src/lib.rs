//! Blind motion deblurring by an unrolled half-quadratic splitting solver.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is pure
//! computation on in-memory rasters; file formats, dataset directories,
//! checkpoints and the command line live in the companion `deblur` crate.
//!
//! Layout:
//!
//! - [`spectral`]: 2-D DFT, spectrum algebra, circular convolution.
//! - [`imaging`]: image and blur-kernel value types, kernel embedding/cropping.
//! - [`kernelgen`]: motion kernel synthesis and blurred-observation synthesis.
//! - [`unroll`]: the unrolled network (filter cascade, per-layer updates,
//!   reconstruction) written once over the [`unroll::Engine`] trait.
//! - [`graddiff`]: a recording engine with reverse-mode gradients and a
//!   finite-difference verifier.
//! - [`training`]: loss, projected Adam, parameter initialization, epochs.
//! - [`metrics`]: PSNR, ISNR, SSIM, shift alignment, kernel RMSE, reports.
#![no_std]

extern crate alloc;

mod error;
mod math;

pub mod graddiff;
pub mod imaging;
pub mod kernelgen;
pub mod metrics;
pub mod spectral;
pub mod training;
pub mod unroll;

pub use error::{Error, Result};
pub use imaging::{Image, Kernel};
pub use spectral::{Complex64, RealPlane, Spectrum};
