use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::record_loss;
use crate::imaging::Image;
use crate::spectral::RealPlane;
use crate::unroll::{ModelParams, ParamField};
use crate::{Error, Result};

/// A training example and loss weight to differentiate against.
#[derive(Debug, Clone)]
pub struct LossProblem {
    pub blurred: Image,
    pub sharp: Image,
    /// True kernel embedded on the full grid.
    pub kernel_target: RealPlane,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdSample {
    /// Index into the flattened parameter vector.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub checked: Vec<FdSample>,
    /// Sampled indices whose central difference straddles a kink.
    pub skipped: Vec<usize>,
}

impl FdReport {
    /// Worst sample under the mixed criterion: relative error, except
    /// that gradients below `small` in magnitude are judged on absolute
    /// error against `abs_tol`.
    pub fn passes(&self, rel_tol: f64, small: f64, abs_tol: f64) -> bool {
        self.checked.iter().all(|s| {
            if s.analytic.abs() < small {
                (s.analytic - s.numeric).abs() < abs_tol || s.rel_error < rel_tol
            } else {
                s.rel_error < rel_tol
            }
        })
    }
}

fn sample_indices(count: usize, samples: usize, seed: u64) -> Vec<usize> {
    let mut all: Vec<usize> = (0..count).collect();
    if samples >= count {
        return all;
    }
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    all.truncate(samples);
    all.sort_unstable();
    all
}

/// Central differences of an arbitrary flat-vector loss.
///
/// `loss` returns the loss and its activation pattern; a sample is skipped
/// when the pattern at `p ± h` differs from the one at `p`, or when a
/// nonnegative parameter sits closer than `2h` to zero.
pub fn finite_diff_check_fn<F>(
    mut loss: F,
    point: &[f64],
    analytic: &[f64],
    nonnegative: &[bool],
    h: f64,
    samples: usize,
    seed: u64,
) -> Result<FdReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<bool>)>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter("step must be positive"));
    }
    if analytic.len() != point.len() || nonnegative.len() != point.len() {
        return Err(Error::ShapeMismatch("finite difference inputs"));
    }
    if samples > point.len() {
        return Err(Error::InvalidParameter("more samples than parameters"));
    }
    let (_, pattern) = loss(point)?;
    let mut report = FdReport::default();
    let mut probe = point.to_vec();
    for index in sample_indices(point.len(), samples, seed) {
        let p = point[index];
        if nonnegative[index] && p < 2.0 * h {
            report.skipped.push(index);
            continue;
        }
        probe[index] = p + h;
        let (plus, pat_plus) = loss(&probe)?;
        probe[index] = p - h;
        let (minus, pat_minus) = loss(&probe)?;
        probe[index] = p;
        if pat_plus != pattern || pat_minus != pattern {
            report.skipped.push(index);
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[index];
        let rel_error = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        report.max_rel_error = report.max_rel_error.max(rel_error);
        report.checked.push(FdSample {
            index,
            analytic: a,
            numeric,
            rel_error,
        });
    }
    Ok(report)
}

/// Compares tape gradients of the network loss with central differences
/// on a deterministic sample of `samples` parameters.
pub fn finite_diff_check(problem: &LossProblem, params: &ModelParams, h: f64, samples: usize, seed: u64) -> Result<FdReport> {
    let run = |p: &ModelParams| {
        record_loss(p, &problem.blurred, &problem.sharp, &problem.kernel_target, problem.kappa)
    };
    let base = run(params)?;
    let analytic = base.backward()?.to_flat();
    let nonnegative: Vec<bool> = params.flat_fields().into_iter().map(ParamField::nonnegative).collect();
    let mut scratch = params.clone();
    finite_diff_check_fn(
        |flat| {
            scratch.set_flat(flat)?;
            let rec = run(&scratch)?;
            Ok((rec.tape.scalar(rec.loss), rec.tape.activation_pattern()))
        },
        &params.to_flat(),
        &analytic,
        &nonnegative,
        h,
        samples,
        seed,
    )
}

/// Random gradient-check instance: a `size`×`size` scene blurred by a
/// random 3×3 kernel, and parameters with every soft threshold and kernel
/// path active (`b ∈ [0.01, 0.1)`, `λ ∈ [0.1, 1)`, `η ∈ [1, 20)`).
pub fn gradient_check_setup(size: usize, layers: usize, channels: usize, seed: u64) -> Result<(LossProblem, ModelParams)> {
    use rand::Rng;
    if size < 4 || layers == 0 || channels == 0 {
        return Err(Error::InvalidParameter("check needs size >= 4 and a nonempty network"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sharp = RealPlane::from_fn(size, size, |_, _| rng.random_range(0.0..1.0));
    let raw = RealPlane::from_fn(3, 3, |_, _| rng.random_range(0.0..1.0));
    let kernel = crate::imaging::Kernel::from_unnormalized(&raw)?;
    let blurred = crate::kernelgen::synthesize_blurred(&sharp, &kernel, 0.01, rng.random())?;
    let kernel_target = crate::spectral::embed_kernel(&kernel, size, size)?;

    let mut filters = crate::unroll::FilterWeights::zeros(layers, channels);
    for v in filters.base.iter_mut().chain(filters.mixing.iter_mut()) {
        *v = rng.random_range(-0.5..0.5);
    }
    let mut lp = crate::unroll::LayerParams::uniform(layers, channels, 0.0, 0.0, 0.0, 1.0);
    for v in lp.threshold.iter_mut() {
        *v = rng.random_range(0.01..0.1);
    }
    for v in lp.lambda.iter_mut() {
        *v = rng.random_range(0.1..1.0);
    }
    for v in lp.eta.iter_mut() {
        *v = rng.random_range(1.0..20.0);
    }
    let params = ModelParams {
        filters,
        layer_params: lp,
        support: 3,
        restrict_support: false,
    };
    params.validate()?;
    Ok((
        LossProblem {
            blurred,
            sharp,
            kernel_target,
            kappa: 1e5,
        },
        params,
    ))
}
