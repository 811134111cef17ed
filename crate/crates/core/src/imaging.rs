//! Image and blur-kernel value types.

use alloc::vec::Vec;

use crate::spectral::RealPlane;
use crate::{Error, Result};

/// Grayscale image with intensities nominally in `[0, 1]`.
///
/// Values are only clamped when written to disk; intermediate results may
/// leave the unit interval.
pub type Image = RealPlane;

/// Sum tolerance above which a loaded kernel is rejected rather than renormalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Odd-sized square blur kernel: nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    weights: RealPlane,
}

impl Kernel {
    /// Validates and wraps `size × size` row-major weights.
    ///
    /// Weights whose sum is within [`NORMALIZATION_TOLERANCE`] of one are
    /// renormalized; a sum already within 1e-12 is kept bit-for-bit.
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 {
            return Err(Error::EvenSize(size));
        }
        let plane = RealPlane::new(size, size, weights)?;
        if let Some((index, &value)) = plane.as_slice().iter().enumerate().find(|(_, &v)| v < 0.0)
        {
            return Err(Error::NegativeWeight { index, value });
        }
        let total = plane.sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::NotNormalized(total));
        }
        let weights = if (total - 1.0).abs() > 1e-12 {
            plane.map(|v| v / total)
        } else {
            plane
        };
        Ok(Self { weights })
    }

    /// Centered unit impulse of the given odd size.
    pub fn impulse(size: usize) -> Self {
        assert!(size % 2 == 1, "kernel size must be odd");
        let mut weights = RealPlane::zeros(size, size);
        weights[(size / 2, size / 2)] = 1.0;
        Self { weights }
    }

    /// Clamps negatives to zero and normalizes; an all-zero result falls
    /// back to the impulse.
    pub fn from_unnormalized(plane: &RealPlane) -> Result<Self> {
        let size = plane.height();
        if plane.width() != size {
            return Err(Error::ShapeMismatch("kernel must be square"));
        }
        if size % 2 == 0 {
            return Err(Error::EvenSize(size));
        }
        if !plane.is_finite() {
            return Err(Error::NonFinite("kernel"));
        }
        let clamped = plane.map(|v| v.max(0.0));
        let total = clamped.sum();
        if total <= 0.0 {
            return Ok(Self::impulse(size));
        }
        Ok(Self {
            weights: clamped.map(|v| v / total),
        })
    }

    pub fn size(&self) -> usize {
        self.weights.height()
    }

    pub fn as_plane(&self) -> &RealPlane {
        &self.weights
    }

    pub fn weights(&self) -> &[f64] {
        self.weights.as_slice()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights.get(row, col)
    }

    /// Zero-pads to a larger odd size, keeping the center.
    pub fn padded(&self, size: usize) -> Result<Self> {
        if size % 2 == 0 {
            return Err(Error::EvenSize(size));
        }
        let own = self.size();
        if size < own {
            return Err(Error::KernelTooLarge {
                size: own,
                height: size,
                width: size,
            });
        }
        let offset = (size - own) / 2;
        let weights = RealPlane::from_fn(size, size, |r, c| {
            if (offset..offset + own).contains(&r) && (offset..offset + own).contains(&c) {
                self.weights.get(r - offset, c - offset)
            } else {
                0.0
            }
        });
        Ok(Self { weights })
    }
}

/// Extracts the `size × size` window centered on the origin of a full-grid
/// kernel estimate (circular indexing), clamps negatives and renormalizes.
pub fn crop_kernel(plane: &RealPlane, size: usize) -> Result<Kernel> {
    if size % 2 == 0 {
        return Err(Error::EvenSize(size));
    }
    let (height, width) = plane.dims();
    if size > height.min(width) {
        return Err(Error::KernelTooLarge {
            size,
            height,
            width,
        });
    }
    let half = (size / 2) as isize;
    let window = RealPlane::from_fn(size, size, |r, c| {
        plane.get_wrapped(r as isize - half, c as isize - half)
    });
    Kernel::from_unnormalized(&window)
}
