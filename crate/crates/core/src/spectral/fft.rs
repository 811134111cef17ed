//! Complex FFT plans: iterative radix-2 for power-of-two lengths and
//! Bluestein's chirp-z algorithm for everything else.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::math::{cos, sin};

#[derive(Debug, Clone)]
enum Algorithm {
    Identity,
    Radix2 {
        twiddles: Vec<Complex64>,
        bit_reverse: Vec<usize>,
    },
    Bluestein {
        chirp: Vec<Complex64>,
        filter_spectrum: Vec<Complex64>,
        inner: Box<Fft1d>,
    },
}

/// Forward (e^{-2πi jk/n}) unnormalized 1-D transform of a fixed length.
#[derive(Debug, Clone)]
pub(crate) struct Fft1d {
    len: usize,
    algorithm: Algorithm,
}

fn unit_root(numerator: usize, denominator: usize) -> Complex64 {
    // exp(-2πi · numerator / denominator), evaluated directly for accuracy.
    let angle = -2.0 * PI * numerator as f64 / denominator as f64;
    Complex64::new(cos(angle), sin(angle))
}

impl Fft1d {
    pub(crate) fn new(len: usize) -> Self {
        assert!(len > 0, "FFT length must be positive");
        let algorithm = if len == 1 {
            Algorithm::Identity
        } else if len.is_power_of_two() {
            let bits = len.trailing_zeros();
            let bit_reverse = (0..len)
                .map(|i| i.reverse_bits() >> (usize::BITS - bits))
                .collect();
            let twiddles = (0..len / 2).map(|k| unit_root(k, len)).collect();
            Algorithm::Radix2 {
                twiddles,
                bit_reverse,
            }
        } else {
            let padded = (2 * len - 1).next_power_of_two();
            // w_j = exp(-πi j²/n); j² is reduced mod 2n to keep the angle small.
            let chirp: Vec<Complex64> = (0..len)
                .map(|j| {
                    let jj = (j as u128 * j as u128 % (2 * len as u128)) as usize;
                    unit_root(jj, 2 * len)
                })
                .collect();
            let inner = Fft1d::new(padded);
            let mut filter = vec![Complex64::new(0.0, 0.0); padded];
            filter[0] = chirp[0].conj();
            for j in 1..len {
                filter[j] = chirp[j].conj();
                filter[padded - j] = chirp[j].conj();
            }
            inner.forward(&mut filter);
            Algorithm::Bluestein {
                chirp,
                filter_spectrum: filter,
                inner: Box::new(inner),
            }
        };
        Self { len, algorithm }
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.len);
        match &self.algorithm {
            Algorithm::Identity => {}
            Algorithm::Radix2 {
                twiddles,
                bit_reverse,
            } => {
                for (i, &j) in bit_reverse.iter().enumerate() {
                    if i < j {
                        data.swap(i, j);
                    }
                }
                let n = self.len;
                let mut half = 1;
                while half < n {
                    let stride = n / (2 * half);
                    for start in (0..n).step_by(2 * half) {
                        for k in 0..half {
                            let t = twiddles[k * stride] * data[start + k + half];
                            let u = data[start + k];
                            data[start + k] = u + t;
                            data[start + k + half] = u - t;
                        }
                    }
                    half *= 2;
                }
            }
            Algorithm::Bluestein {
                chirp,
                filter_spectrum,
                inner,
            } => {
                let m = inner.len();
                let mut work = vec![Complex64::new(0.0, 0.0); m];
                for ((w, &x), &c) in work.iter_mut().zip(data.iter()).zip(chirp) {
                    *w = x * c;
                }
                inner.forward(&mut work);
                for (w, &f) in work.iter_mut().zip(filter_spectrum) {
                    *w *= f;
                }
                inner.inverse_unnormalized(&mut work);
                let scale = 1.0 / m as f64;
                for ((x, &w), &c) in data.iter_mut().zip(&work).zip(chirp) {
                    *x = w * c * scale;
                }
            }
        }
    }

    /// Unnormalized inverse (e^{+2πi jk/n}).
    pub(crate) fn inverse_unnormalized(&self, data: &mut [Complex64]) {
        for x in data.iter_mut() {
            *x = x.conj();
        }
        self.forward(data);
        for x in data.iter_mut() {
            *x = x.conj();
        }
    }
}

/// Row-column 2-D transform plan for a fixed `height × width` grid.
#[derive(Debug, Clone)]
pub struct Fft2Plan {
    height: usize,
    width: usize,
    rows: Fft1d,
    cols: Fft1d,
}

impl Fft2Plan {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            rows: Fft1d::new(width),
            cols: Fft1d::new(height),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// In-place unnormalized forward transform of a row-major grid.
    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// In-place unnormalized inverse transform (no 1/HW factor).
    pub fn inverse_unnormalized_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.height * self.width);
        let run = |plan: &Fft1d, buf: &mut [Complex64]| {
            if inverse {
                plan.inverse_unnormalized(buf)
            } else {
                plan.forward(buf)
            }
        };
        for row in data.chunks_exact_mut(self.width) {
            run(&self.rows, row);
        }
        if self.height > 1 {
            let mut column = vec![Complex64::new(0.0, 0.0); self.height];
            for c in 0..self.width {
                for (r, v) in column.iter_mut().enumerate() {
                    *v = data[r * self.width + c];
                }
                run(&self.cols, &mut column);
                for (r, v) in column.iter().enumerate() {
                    data[r * self.width + c] = *v;
                }
            }
        }
    }
}
