//! The primitive set the unrolled network is written in.
//!
//! [`Direct`] evaluates eagerly on planes; the recording engine in
//! [`crate::graddiff`] evaluates the same calls while keeping a tape for
//! reverse-mode differentiation.

use alloc::vec::Vec;

use crate::spectral::{check_dims, Complex64, Fft2Plan, RealPlane, Spectrum};
use crate::{Error, Result};

/// Denominators below this value are reported instead of divided by.
pub const DENOMINATOR_FLOOR: f64 = 1e-15;

/// Operations on grid-sized real planes, spectra and scalars.
///
/// All `Real` and `Complex` operands of one engine share the grid given by
/// [`Engine::grid`], except the small square filters handled by
/// [`Engine::conv_full`] and [`Engine::embed`].
pub trait Engine {
    type Real: Clone;
    type Complex: Clone;
    type Scalar: Clone;

    fn grid(&self) -> (usize, usize);

    fn real_const(&mut self, plane: RealPlane) -> Self::Real;
    fn complex_const(&mut self, spectrum: Spectrum) -> Self::Complex;
    fn scalar_const(&mut self, value: f64) -> Self::Scalar;

    fn real_value<'a>(&'a self, x: &'a Self::Real) -> &'a RealPlane;
    fn scalar_value(&self, x: &Self::Scalar) -> f64;

    /// Full (zero-padded) 2-D convolution of two small planes.
    fn conv_full(&mut self, a: &Self::Real, b: &Self::Real) -> Self::Real;
    fn add(&mut self, a: &Self::Real, b: &Self::Real) -> Result<Self::Real>;
    /// Centers an odd square filter on the grid origin.
    fn embed(&mut self, filter: &Self::Real) -> Result<Self::Real>;

    fn fft2(&mut self, x: &Self::Real) -> Self::Complex;
    fn ifft2(&mut self, x: &Self::Complex) -> Result<Self::Real>;
    fn mul(&mut self, a: &Self::Complex, b: &Self::Complex, conjugate_a: bool) -> Self::Complex;
    fn add_complex(&mut self, a: &Self::Complex, b: &Self::Complex) -> Self::Complex;
    fn scale_complex(&mut self, s: &Self::Scalar, a: &Self::Complex) -> Self::Complex;
    fn abs_sq(&mut self, a: &Self::Complex) -> Self::Real;
    fn scale(&mut self, s: &Self::Scalar, a: &Self::Real) -> Self::Real;
    fn add_scalar(&mut self, a: &Self::Real, s: &Self::Scalar) -> Self::Real;
    /// Per-frequency division by a real plane, refusing denominators below
    /// [`DENOMINATOR_FLOOR`].
    fn divide(&mut self, num: &Self::Complex, den: &Self::Real) -> Result<Self::Complex>;

    fn soft_threshold(&mut self, x: &Self::Real, threshold: &Self::Scalar) -> Self::Real;
    fn relu(&mut self, x: &Self::Real) -> Self::Real;
    /// `x / Σ|x|`, or the impulse at (0, 0) when `x` is identically zero.
    fn l1_normalize(&mut self, x: &Self::Real) -> Self::Real;
    /// Zeroes everything outside the `size × size` window around the origin.
    fn mask_window(&mut self, x: &Self::Real, size: usize) -> Self::Real;

    fn mse(&mut self, x: &Self::Real, target: &RealPlane) -> Result<Self::Scalar>;
    fn add_scalars(&mut self, a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn scale_scalar(&mut self, a: &Self::Scalar, factor: f64) -> Self::Scalar;
}

// Shared numerical kernels, used by both engines so their values agree bitwise.

pub(crate) fn conv_full_values(a: &RealPlane, b: &RealPlane) -> RealPlane {
    let (ha, wa) = a.dims();
    let (hb, wb) = b.dims();
    let mut out = RealPlane::zeros(ha + hb - 1, wa + wb - 1);
    for i in 0..ha {
        for j in 0..wa {
            let av = a.get(i, j);
            if av == 0.0 {
                continue;
            }
            for p in 0..hb {
                for q in 0..wb {
                    out[(i + p, j + q)] += av * b.get(p, q);
                }
            }
        }
    }
    out
}

pub(crate) fn soft_threshold_value(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub(crate) fn l1_normalize_values(x: &RealPlane) -> RealPlane {
    let total: f64 = x.as_slice().iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        RealPlane::impulse(x.height(), x.width())
    } else {
        x.map(|v| v / total)
    }
}

pub(crate) fn in_window(r: usize, c: usize, height: usize, width: usize, size: usize) -> bool {
    // Offsets in [-half, half] around the origin, circularly.
    let half = size / 2;
    (r <= half || height - r <= half) && (c <= half || width - c <= half)
}

pub(crate) fn divide_values(num: &Spectrum, den: &RealPlane) -> Result<Spectrum> {
    check_dims(num.dims(), den.dims())?;
    let width = den.width();
    let mut data = Vec::with_capacity(den.len());
    for (idx, (&n, &d)) in num.as_slice().iter().zip(den.as_slice()).enumerate() {
        if !(d >= DENOMINATOR_FLOOR) {
            return Err(Error::SingularDenominator {
                row: idx / width,
                col: idx % width,
                value: d,
            });
        }
        data.push(n / d);
    }
    Ok(Spectrum::from_parts(num.height(), num.width(), data))
}

pub(crate) fn mse_value(x: &RealPlane, target: &RealPlane) -> Result<f64> {
    if x.dims() != target.dims() {
        return Err(Error::ShapeMismatch("loss operands"));
    }
    let n = x.len() as f64;
    Ok(x.as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

pub(crate) fn zip_complex(
    a: &Spectrum,
    b: &Spectrum,
    f: impl Fn(Complex64, Complex64) -> Complex64,
) -> Spectrum {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Spectrum::from_parts(a.height(), a.width(), data)
}

/// Eager engine: every call returns its value immediately.
#[derive(Debug, Clone)]
pub struct Direct {
    plan: Fft2Plan,
}

impl Direct {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            plan: Fft2Plan::new(height, width),
        }
    }

    pub fn plan(&self) -> &Fft2Plan {
        &self.plan
    }
}

impl Engine for Direct {
    type Real = RealPlane;
    type Complex = Spectrum;
    type Scalar = f64;

    fn grid(&self) -> (usize, usize) {
        (self.plan.height(), self.plan.width())
    }

    fn real_const(&mut self, plane: RealPlane) -> RealPlane {
        plane
    }

    fn complex_const(&mut self, spectrum: Spectrum) -> Spectrum {
        spectrum
    }

    fn scalar_const(&mut self, value: f64) -> f64 {
        value
    }

    fn real_value<'a>(&'a self, x: &'a RealPlane) -> &'a RealPlane {
        x
    }

    fn scalar_value(&self, x: &f64) -> f64 {
        *x
    }

    fn conv_full(&mut self, a: &RealPlane, b: &RealPlane) -> RealPlane {
        conv_full_values(a, b)
    }

    fn add(&mut self, a: &RealPlane, b: &RealPlane) -> Result<RealPlane> {
        a.check_same_dims(b)?;
        let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x + y).collect();
        Ok(RealPlane::from_parts(a.height(), a.width(), data))
    }

    fn embed(&mut self, filter: &RealPlane) -> Result<RealPlane> {
        let (h, w) = self.grid();
        crate::spectral::embed_centered(filter, h, w)
    }

    fn fft2(&mut self, x: &RealPlane) -> Spectrum {
        self.plan.forward(x)
    }

    fn ifft2(&mut self, x: &Spectrum) -> Result<RealPlane> {
        self.plan.inverse(x)
    }

    fn mul(&mut self, a: &Spectrum, b: &Spectrum, conjugate_a: bool) -> Spectrum {
        if conjugate_a {
            zip_complex(a, b, |x, y| x.conj() * y)
        } else {
            zip_complex(a, b, |x, y| x * y)
        }
    }

    fn add_complex(&mut self, a: &Spectrum, b: &Spectrum) -> Spectrum {
        zip_complex(a, b, |x, y| x + y)
    }

    fn scale_complex(&mut self, s: &f64, a: &Spectrum) -> Spectrum {
        let data = a.as_slice().iter().map(|&x| x * *s).collect();
        Spectrum::from_parts(a.height(), a.width(), data)
    }

    fn abs_sq(&mut self, a: &Spectrum) -> RealPlane {
        let data = a.as_slice().iter().map(|x| x.norm_sqr()).collect();
        RealPlane::from_parts(a.height(), a.width(), data)
    }

    fn scale(&mut self, s: &f64, a: &RealPlane) -> RealPlane {
        a.map(|v| *s * v)
    }

    fn add_scalar(&mut self, a: &RealPlane, s: &f64) -> RealPlane {
        a.map(|v| v + *s)
    }

    fn divide(&mut self, num: &Spectrum, den: &RealPlane) -> Result<Spectrum> {
        divide_values(num, den)
    }

    fn soft_threshold(&mut self, x: &RealPlane, threshold: &f64) -> RealPlane {
        x.map(|v| soft_threshold_value(v, *threshold))
    }

    fn relu(&mut self, x: &RealPlane) -> RealPlane {
        x.map(|v| v.max(0.0))
    }

    fn l1_normalize(&mut self, x: &RealPlane) -> RealPlane {
        l1_normalize_values(x)
    }

    fn mask_window(&mut self, x: &RealPlane, size: usize) -> RealPlane {
        let (h, w) = x.dims();
        RealPlane::from_fn(h, w, |r, c| {
            if in_window(r, c, h, w, size) {
                x.get(r, c)
            } else {
                0.0
            }
        })
    }

    fn mse(&mut self, x: &RealPlane, target: &RealPlane) -> Result<f64> {
        mse_value(x, target)
    }

    fn add_scalars(&mut self, a: &f64, b: &f64) -> f64 {
        a + b
    }

    fn scale_scalar(&mut self, a: &f64, factor: f64) -> f64 {
        a * factor
    }
}
