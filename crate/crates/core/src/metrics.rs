//! Image and kernel quality metrics, shift alignment and batch evaluation.

use alloc::string::String;
use alloc::vec::Vec;

use crate::imaging::{Image, Kernel};
use crate::kernelgen::DatasetRecord;
use crate::math;
use crate::spectral::RealPlane;
use crate::unroll::{forward, Direct, ModelParams, Network, TvPreset};
use crate::{Error, Result};

/// Side length of the SSIM window.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Sum that does not depend on the order of its terms: the terms are
/// sorted first, so permuted inputs give bitwise equal results.
fn ordered_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

/// Pairwise (cascade) summation.
fn pairwise_sum(terms: &[f64]) -> f64 {
    match terms.len() {
        0 => 0.0,
        1 => terms[0],
        n => pairwise_sum(&terms[..n / 2]) + pairwise_sum(&terms[n / 2..]),
    }
}

fn squared_error(a: &RealPlane, b: &RealPlane) -> Result<f64> {
    a.check_same_dims(b)?;
    let terms: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).collect();
    Ok(pairwise_sum(&terms) / a.len() as f64)
}

/// Peak signal-to-noise ratio in dB for peak 1; `f64::INFINITY` when the
/// images are identical.
pub fn psnr(estimate: &Image, reference: &Image) -> Result<f64> {
    let mse = squared_error(estimate, reference)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * math::log10(1.0 / mse))
}

/// `psnr(estimate) − psnr(blurred)`. When both are infinite the
/// improvement is 0.
pub fn isnr(estimate: &Image, blurred: &Image, reference: &Image) -> Result<f64> {
    let after = psnr(estimate, reference)?;
    let before = psnr(blurred, reference)?;
    if after.is_infinite() && before.is_infinite() {
        return Ok(0.0);
    }
    Ok(after - before)
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = math::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    for r in 0..SSIM_WINDOW {
        for c in 0..SSIM_WINDOW {
            w[r * SSIM_WINDOW + c] = taps[r] * taps[c];
        }
    }
    let total: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= total;
    }
    w
}

/// Mean structural similarity over every window position that fits inside
/// the image (no padding), dynamic range 1.
pub fn ssim(estimate: &Image, reference: &Image) -> Result<f64> {
    estimate.check_same_dims(reference)?;
    let (h, w) = estimate.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            height: h,
            width: w,
            min: SSIM_WINDOW,
        });
    }
    let window = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    let positions = (h - SSIM_WINDOW + 1) * (w - SSIM_WINDOW + 1);
    for r0 in 0..=h - SSIM_WINDOW {
        for c0 in 0..=w - SSIM_WINDOW {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in 0..SSIM_WINDOW {
                for c in 0..SSIM_WINDOW {
                    let wt = window[r * SSIM_WINDOW + c];
                    let x = estimate.get(r0 + r, c0 + c);
                    let y = reference.get(r0 + r, c0 + c);
                    mx += wt * x;
                    my += wt * y;
                    sxx += wt * x * x;
                    syy += wt * y * y;
                    sxy += wt * x * y;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cxy = sxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    Ok(total / positions as f64)
}

/// Best circular shift found by [`align_shift`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub dy: isize,
    pub dx: isize,
    /// MSE between the shifted estimate and the reference.
    pub mse: f64,
}

/// Circular shift `(dy, dx)` in `[−radius, radius]²` that, applied to
/// `estimate` (see [`RealPlane::shifted`]), minimizes the MSE against
/// `reference`. Exhaustive; ties go to the smallest `|dy| + |dx|`, then
/// the lexicographically smallest `(dy, dx)`.
pub fn align_shift(estimate: &RealPlane, reference: &RealPlane, radius: usize) -> Result<Alignment> {
    estimate.check_same_dims(reference)?;
    let r = radius as isize;
    let n = estimate.len() as f64;
    let mut best: Option<Alignment> = None;
    for dy in -r..=r {
        for dx in -r..=r {
            let moved = estimate.shifted(dy, dx);
            let terms = moved
                .as_slice()
                .iter()
                .zip(reference.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .collect();
            let mse = ordered_sum(terms) / n;
            let better = match best {
                None => true,
                Some(b) => {
                    mse < b.mse
                        || (mse == b.mse
                            && (dy.abs() + dx.abs(), dy, dx) < (b.dy.abs() + b.dx.abs(), b.dy, b.dx))
                }
            };
            if better {
                best = Some(Alignment { dy, dx, mse });
            }
        }
    }
    Ok(best.expect("at least the zero shift is tried"))
}

/// RMSE between kernels after centered padding to a common support and
/// circular alignment within `[−K/2, K/2]²`.
pub fn kernel_rmse(estimate: &Kernel, truth: &Kernel) -> Result<f64> {
    Ok(math::sqrt(kernel_alignment(estimate, truth)?.mse))
}

fn kernel_alignment(estimate: &Kernel, truth: &Kernel) -> Result<Alignment> {
    let size = estimate.size().max(truth.size());
    let a = estimate.padded(size)?;
    let b = truth.padded(size)?;
    align_shift(a.as_plane(), b.as_plane(), size / 2)
}

/// Anything that turns a blurred image into an image and kernel estimate.
pub trait Restorer {
    fn restore(&self, blurred: &Image) -> Result<(Image, Kernel)>;
}

impl Restorer for ModelParams {
    fn restore(&self, blurred: &Image) -> Result<(Image, Kernel)> {
        let out = forward(blurred, self)?;
        Ok((out.image, out.kernel))
    }
}

impl Restorer for Network<Direct> {
    fn restore(&self, blurred: &Image) -> Result<(Image, Kernel)> {
        let out = self.run(blurred)?;
        Ok((out.image, out.kernel))
    }
}

impl Restorer for TvPreset {
    fn restore(&self, blurred: &Image) -> Result<(Image, Kernel)> {
        self.network().restore(blurred)
    }
}

/// Metrics of one record.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub record: String,
    pub psnr_db: f64,
    pub isnr_db: f64,
    pub ssim: f64,
    pub kernel_rmse: f64,
    /// Shift applied to the restored image before the image metrics.
    pub shift_dy: isize,
    pub shift_dx: isize,
}

/// Arithmetic means over all rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMeans {
    pub psnr_db: f64,
    pub isnr_db: f64,
    pub ssim: f64,
    pub kernel_rmse: f64,
    pub shift_dy: f64,
    pub shift_dx: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn means(&self) -> EvalMeans {
        let n = self.rows.len() as f64;
        let mean = |f: fn(&EvalRow) -> f64| self.rows.iter().map(f).sum::<f64>() / n;
        EvalMeans {
            psnr_db: mean(|r| r.psnr_db),
            isnr_db: mean(|r| r.isnr_db),
            ssim: mean(|r| r.ssim),
            kernel_rmse: mean(|r| r.kernel_rmse),
            shift_dy: mean(|r| r.shift_dy as f64),
            shift_dx: mean(|r| r.shift_dx as f64),
        }
    }
}

/// Metrics of one restored record. The restored image is aligned to the
/// sharp image within the kernel radius before PSNR, ISNR and SSIM.
pub fn evaluate_record(name: &str, record: &DatasetRecord, restored: &Image, kernel: &Kernel) -> Result<EvalRow> {
    let radius = kernel.size().max(record.kernel.size()) / 2;
    let shift = align_shift(restored, &record.sharp, radius)?;
    let aligned = restored.shifted(shift.dy, shift.dx);
    Ok(EvalRow {
        record: String::from(name),
        psnr_db: psnr(&aligned, &record.sharp)?,
        isnr_db: isnr(&aligned, &record.blurred, &record.sharp)?,
        ssim: ssim(&aligned, &record.sharp)?,
        kernel_rmse: kernel_rmse(kernel, &record.kernel)?,
        shift_dy: shift.dy,
        shift_dx: shift.dx,
    })
}

/// Restores and scores every record, in order.
pub fn evaluate<R: Restorer + ?Sized>(restorer: &R, records: &[(String, DatasetRecord)]) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(records.len());
    for (name, record) in records {
        let (image, kernel) = restorer.restore(&record.blurred)?;
        rows.push(evaluate_record(name, record, &image, &kernel)?);
    }
    Ok(EvalReport { rows })
}
