//! Motion-blur kernel synthesis and blurred-observation synthesis.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::imaging::{Image, Kernel};
use crate::math::{ceil, cos, floor, sin, sqrt};
use crate::spectral::{circ_conv, embed_kernel, RealPlane};
use crate::{Error, Result};

/// Velocity damping of the trajectory random walk.
pub const TRAJECTORY_DAMPING: f64 = 0.95;
/// Per-axis variance of the velocity innovations.
pub const TRAJECTORY_STEP_VARIANCE: f64 = 0.25;
pub const TRAJECTORY_STEPS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionKind {
    /// Straight segment through the kernel center.
    Linear { angle: f64, length: f64 },
    /// Seeded second-order random walk.
    Trajectory { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSpec {
    pub kind: MotionKind,
    pub support: usize,
}

impl MotionSpec {
    pub fn linear(angle: f64, length: f64, support: usize) -> Self {
        Self {
            kind: MotionKind::Linear { angle, length },
            support,
        }
    }

    pub fn trajectory(seed: u64, support: usize) -> Self {
        Self {
            kind: MotionKind::Trajectory { seed },
            support,
        }
    }

    pub fn kernel(&self) -> Result<Kernel> {
        match self.kind {
            MotionKind::Linear { angle, length } => linear_motion_kernel(angle, length, self.support),
            MotionKind::Trajectory { seed } => trajectory_motion_kernel(seed, self.support),
        }
    }
}

/// One training or evaluation sample: observation, ground truth, and the
/// kernel that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub blurred: Image,
    pub sharp: Image,
    pub kernel: Kernel,
    pub noise_sigma: f64,
}

impl DatasetRecord {
    pub fn new(blurred: Image, sharp: Image, kernel: Kernel, noise_sigma: f64) -> Result<Self> {
        blurred.check_same_dims(&sharp)?;
        if kernel.size() > blurred.height().min(blurred.width()) {
            return Err(Error::KernelTooLarge {
                size: kernel.size(),
                height: blurred.height(),
                width: blurred.width(),
            });
        }
        Ok(Self {
            blurred,
            sharp,
            kernel,
            noise_sigma,
        })
    }
}

/// Accumulates bilinear weights of (row, col) points on a `size × size` grid.
fn bilinear_splat(points: impl Iterator<Item = (f64, f64)>, size: usize) -> RealPlane {
    let mut grid = RealPlane::zeros(size, size);
    let mut deposit = |r: isize, c: isize, w: f64| {
        if w != 0.0 && (0..size as isize).contains(&r) && (0..size as isize).contains(&c) {
            grid[(r as usize, c as usize)] += w;
        }
    };
    for (row, col) in points {
        let (r0, c0) = (floor(row), floor(col));
        let (fr, fc) = (row - r0, col - c0);
        let (r0, c0) = (r0 as isize, c0 as isize);
        deposit(r0, c0, (1.0 - fr) * (1.0 - fc));
        deposit(r0, c0 + 1, (1.0 - fr) * fc);
        deposit(r0 + 1, c0, fr * (1.0 - fc));
        deposit(r0 + 1, c0 + 1, fr * fc);
    }
    grid
}

fn normalized(plane: RealPlane) -> Result<Kernel> {
    Kernel::from_unnormalized(&plane)
}

/// Rasterizes a centered segment of the given length and direction.
///
/// The angle is measured counterclockwise from the +column axis with rows
/// growing downward. The segment is sampled at `max(1000, 100·length)`
/// equispaced points, each splatted bilinearly.
pub fn linear_motion_kernel(angle: f64, length: f64, support: usize) -> Result<Kernel> {
    if support % 2 == 0 {
        return Err(Error::EvenSize(support));
    }
    if !(0.0..=PI).contains(&angle) {
        return Err(Error::InvalidMotion("angle must lie in [0, pi]"));
    }
    if !(length >= 1.0) || !length.is_finite() {
        return Err(Error::InvalidMotion("length must be at least 1"));
    }
    if (support as f64) < ceil(length) + 2.0 {
        return Err(Error::SupportTooSmall { support, length });
    }
    let center = ((support - 1) / 2) as f64;
    let samples = 1000usize.max(ceil(100.0 * length) as usize);
    let (dx, dy) = (cos(angle), sin(angle));
    let points = (0..samples).map(|j| {
        let t = -length / 2.0 + length * j as f64 / (samples - 1) as f64;
        (center - t * dy, center + t * dx)
    });
    normalized(bilinear_splat(points, support))
}

/// Deterministic curved kernel from a damped random walk.
///
/// Velocity follows `v ← 0.95·v + N(0, 0.25)` per axis for 256 steps. The
/// path is densely resampled, recentered on the centroid of the samples,
/// shrunk to fit within `(K−1)/2` of the center and splatted bilinearly,
/// so the kernel's center of mass sits on the center cell.
pub fn trajectory_motion_kernel(seed: u64, support: usize) -> Result<Kernel> {
    if support % 2 == 0 {
        return Err(Error::EvenSize(support));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let innovation = Normal::new(0.0, sqrt(TRAJECTORY_STEP_VARIANCE))
        .map_err(|_| Error::InvalidMotion("trajectory innovation"))?;
    let mut vertices = Vec::with_capacity(TRAJECTORY_STEPS + 1);
    let (mut pos, mut vel) = ((0.0f64, 0.0f64), (0.0f64, 0.0f64));
    vertices.push(pos);
    for _ in 0..TRAJECTORY_STEPS {
        vel.0 = TRAJECTORY_DAMPING * vel.0 + innovation.sample(&mut rng);
        vel.1 = TRAJECTORY_DAMPING * vel.1 + innovation.sample(&mut rng);
        pos = (pos.0 + vel.0, pos.1 + vel.1);
        vertices.push(pos);
    }

    // Dense resampling keeps the rasterized path connected.
    let mut samples = Vec::new();
    for pair in vertices.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let span = sqrt((b.0 - a.0) * (b.0 - a.0) + (b.1 - a.1) * (b.1 - a.1));
        let steps = 1usize.max(ceil(10.0 * span) as usize);
        for s in 0..steps {
            let f = s as f64 / steps as f64;
            samples.push((a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1)));
        }
    }
    samples.push(*vertices.last().unwrap_or(&(0.0, 0.0)));

    let n = samples.len() as f64;
    let mean = samples
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
    let extent = samples
        .iter()
        .map(|p| (p.0 - mean.0).abs().max((p.1 - mean.1).abs()))
        .fold(0.0, f64::max);
    let half = ((support - 1) / 2) as f64;
    let scale = if extent > half { half / extent } else { 1.0 };
    let points = samples
        .iter()
        .map(|p| (half + scale * (p.0 - mean.0), half + scale * (p.1 - mean.1)));
    normalized(bilinear_splat(points, support))
}

/// `y = k ∗ x + n` with circular boundaries and i.i.d. Gaussian noise of
/// standard deviation `sigma` drawn from a stream seeded by `rng_seed`.
/// The result is not clamped.
pub fn synthesize_blurred(sharp: &Image, kernel: &Kernel, sigma: f64, rng_seed: u64) -> Result<Image> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter("noise sigma must be nonnegative"));
    }
    let plane = embed_kernel(kernel, sharp.height(), sharp.width())?;
    let mut blurred = circ_conv(sharp, &plane)?;
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        for v in blurred.as_mut_slice() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * n;
        }
    }
    Ok(blurred)
}

/// Mixes a base seed with a record index into an independent stream seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Piecewise-smooth synthetic scene: a shallow gradient overlaid with
/// opaque rectangles and disks of random intensity. Used where no photo
/// corpus is at hand (tests, demos).
pub fn synthetic_scene(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = rng.random_range(0.2..0.6);
    let gy = rng.random_range(-0.2..0.2);
    let gx = rng.random_range(-0.2..0.2);
    let mut img = RealPlane::from_fn(height, width, |r, c| {
        base + gy * r as f64 / height as f64 + gx * c as f64 / width as f64
    });
    let (h, w) = (height as f64, width as f64);
    let shapes = rng.random_range(6..13);
    for _ in 0..shapes {
        let value = rng.random_range(0.05..0.95);
        let cy = rng.random_range(0.0..h);
        let cx = rng.random_range(0.0..w);
        if rng.random_bool(0.5) {
            let hh = rng.random_range(0.05..0.3) * h;
            let hw = rng.random_range(0.05..0.3) * w;
            for r in 0..height {
                for c in 0..width {
                    if (r as f64 - cy).abs() <= hh && (c as f64 - cx).abs() <= hw {
                        img[(r, c)] = value;
                    }
                }
            }
        } else {
            let radius = rng.random_range(0.05..0.25) * h.min(w);
            for r in 0..height {
                for c in 0..width {
                    let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                    if dy * dy + dx * dx <= radius * radius {
                        img[(r, c)] = value;
                    }
                }
            }
        }
    }
    img.clamped(0.0, 1.0)
}
