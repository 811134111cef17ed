//! 2-D discrete Fourier transforms, spectrum algebra and circular convolution.
//!
//! Conventions: the forward transform is unnormalized, the inverse carries
//! the 1/(HW) factor. Every grid is the image grid; small kernels and
//! filters are embedded with their center at index (0, 0) and negative
//! offsets wrapped to the opposite border.

mod fft;

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

pub use fft::Fft2Plan;
pub use num_complex::Complex64;

use crate::imaging::Kernel;
use crate::{Error, Result};

/// Relative imaginary energy above which an inverse transform is rejected.
pub const IMAGINARY_RESIDUE_LIMIT: f64 = 1e-6;

/// Row-major real raster. Images, feature maps and full-grid kernel
/// estimates all use this carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct RealPlane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RealPlane {
    /// Checked constructor: positive dimensions, matching length, finite values.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyPlane { height, width });
        }
        if data.len() != height * width {
            return Err(Error::ShapeMismatch("plane data length"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("plane"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub(crate) fn from_parts(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_parts(height, width, vec![0.0; height * width])
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self::from_parts(height, width, vec![value; height * width])
    }

    /// Unit impulse at (0, 0).
    pub fn impulse(height: usize, width: usize) -> Self {
        let mut plane = Self::zeros(height, width);
        plane.data[0] = 1.0;
        plane
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::from_parts(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Value at a possibly negative or out-of-range position, wrapped circularly.
    pub fn get_wrapped(&self, row: isize, col: isize) -> f64 {
        let r = row.rem_euclid(self.height as isize) as usize;
        let c = col.rem_euclid(self.width as isize) as usize;
        self.data[r * self.width + c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Circularly shifted copy: `out[r, c] = self[r - dy, c - dx]`.
    pub fn shifted(&self, dy: isize, dx: isize) -> Self {
        Self::from_fn(self.height, self.width, |r, c| {
            self.get_wrapped(r as isize - dy, c as isize - dx)
        })
    }

    /// Copy with every value clamped to `[lo, hi]`.
    pub fn clamped(&self, lo: f64, hi: f64) -> Self {
        self.map(|v| v.clamp(lo, hi))
    }

    pub(crate) fn check_same_dims(&self, other: &RealPlane) -> Result<()> {
        check_dims(self.dims(), other.dims())
    }
}

impl Index<(usize, usize)> for RealPlane {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.width + c]
    }
}

impl IndexMut<(usize, usize)> for RealPlane {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.width + c]
    }
}

/// Complex raster holding a 2-D DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyPlane { height, width });
        }
        if data.len() != height * width {
            return Err(Error::ShapeMismatch("spectrum data length"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub(crate) fn from_parts(height: usize, width: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_parts(height, width, vec![Complex64::new(0.0, 0.0); height * width])
    }

    pub fn filled(height: usize, width: usize, value: Complex64) -> Self {
        Self::from_parts(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }
}

impl Index<(usize, usize)> for Spectrum {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.width + c]
    }
}

pub(crate) fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            left_h: a.0,
            left_w: a.1,
            right_h: b.0,
            right_w: b.1,
        });
    }
    Ok(())
}

impl Fft2Plan {
    /// Forward transform of a real plane on this plan's grid.
    pub fn forward(&self, plane: &RealPlane) -> Spectrum {
        assert_eq!(plane.dims(), (self.height(), self.width()));
        let mut data: Vec<Complex64> = plane
            .as_slice()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        self.forward_in_place(&mut data);
        Spectrum::from_parts(plane.height(), plane.width(), data)
    }

    /// Normalized inverse transform; fails if the discarded imaginary part
    /// carries more than [`IMAGINARY_RESIDUE_LIMIT`] of the energy.
    pub fn inverse(&self, spectrum: &Spectrum) -> Result<RealPlane> {
        assert_eq!(spectrum.dims(), (self.height(), self.width()));
        let mut data = spectrum.as_slice().to_vec();
        self.inverse_unnormalized_in_place(&mut data);
        let scale = 1.0 / data.len() as f64;
        let (mut real_energy, mut imag_energy) = (0.0, 0.0);
        for v in &data {
            real_energy += v.re * v.re;
            imag_energy += v.im * v.im;
        }
        let total = real_energy + imag_energy;
        if total > 0.0 {
            let ratio = imag_energy / total;
            if ratio > IMAGINARY_RESIDUE_LIMIT || !ratio.is_finite() {
                return Err(Error::ImaginaryResidue { ratio });
            }
        } else if !total.is_finite() {
            return Err(Error::NonFinite("inverse transform"));
        }
        Ok(RealPlane::from_parts(
            spectrum.height(),
            spectrum.width(),
            data.iter().map(|v| v.re * scale).collect(),
        ))
    }
}

/// Unnormalized forward 2-D DFT.
pub fn fft2(plane: &RealPlane) -> Spectrum {
    Fft2Plan::new(plane.height(), plane.width()).forward(plane)
}

/// Inverse 2-D DFT with 1/(HW) normalization, returning the real part.
pub fn ifft2(spectrum: &Spectrum) -> Result<RealPlane> {
    Fft2Plan::new(spectrum.height(), spectrum.width()).inverse(spectrum)
}

/// Elementwise product, conjugating `a` first when `conjugate_a` is set.
pub fn spectrum_combine(a: &Spectrum, b: &Spectrum, conjugate_a: bool) -> Result<Spectrum> {
    check_dims(a.dims(), b.dims())?;
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| if conjugate_a { x.conj() * y } else { x * y })
        .collect();
    Ok(Spectrum::from_parts(a.height(), a.width(), data))
}

/// Places an odd-sized square `filter` on a `height × width` grid with its
/// center at (0, 0), wrapping negative offsets circularly.
pub fn embed_centered(filter: &RealPlane, height: usize, width: usize) -> Result<RealPlane> {
    let size = filter.height();
    if filter.width() != size {
        return Err(Error::ShapeMismatch("filter must be square"));
    }
    if size % 2 == 0 {
        return Err(Error::EvenSize(size));
    }
    if size > height.min(width) {
        return Err(Error::KernelTooLarge {
            size,
            height,
            width,
        });
    }
    let half = (size / 2) as isize;
    let mut out = RealPlane::zeros(height, width);
    for r in 0..size {
        let row = (r as isize - half).rem_euclid(height as isize) as usize;
        for c in 0..size {
            let col = (c as isize - half).rem_euclid(width as isize) as usize;
            out[(row, col)] += filter.get(r, c);
        }
    }
    Ok(out)
}

/// Embeds a blur kernel on the DFT grid (center at the origin).
pub fn embed_kernel(kernel: &Kernel, height: usize, width: usize) -> Result<RealPlane> {
    embed_centered(kernel.as_plane(), height, width)
}

/// Circular convolution through the DFT.
pub fn circ_conv(a: &RealPlane, b: &RealPlane) -> Result<RealPlane> {
    a.check_same_dims(b)?;
    let plan = Fft2Plan::new(a.height(), a.width());
    let product = spectrum_combine(&plan.forward(a), &plan.forward(b), false)?;
    plan.inverse(&product)
}
