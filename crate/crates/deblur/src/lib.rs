//! File formats, dataset tooling, training and evaluation runners, and the
//! command line for [`deblur_core`].
//!
//! - [`pgm`]: grayscale PGM images.
//! - [`kernel_file`]: `KERNEL v1` text kernels.
//! - [`dataset`]: kernel banks, blurred datasets and manifests.
//! - [`checkpoint`]: binary training checkpoints.
//! - [`runner`]: training with per-epoch checkpoints, evaluation reports.
//! - [`cli`]: the `deblur` executable.

mod error;
mod fsutil;

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod kernel_file;
pub mod pgm;
pub mod runner;

pub use error::{Error, Result};
pub use fsutil::write_atomic;
