//! Layer updates and the full forward pass.

use alloc::vec::Vec;

use super::engine::{Direct, Engine};
use super::filters::{build_filters, FilterBanks};
use super::params::ModelParams;
use crate::imaging::{crop_kernel, Image, Kernel};
use crate::spectral::{RealPlane, Spectrum};
use crate::{Error, Result};

/// Concrete operands of an unrolled network on engine `E`: the per-layer
/// filter banks and scalars, already in the engine's representation.
pub struct Network<E: Engine> {
    /// `banks[l][i]` is `f_i^{l+1}`.
    pub banks: Vec<Vec<E::Real>>,
    /// `threshold[l][i]` is `b_i^{l+1}`.
    pub threshold: Vec<Vec<E::Scalar>>,
    pub lambda: Vec<Vec<E::Scalar>>,
    pub eta: Vec<E::Scalar>,
    pub epsilon: E::Scalar,
    pub support: usize,
    pub restrict_support: bool,
}

impl<E: Engine> Network<E> {
    pub fn layers(&self) -> usize {
        self.banks.len()
    }

    pub fn channels(&self) -> usize {
        self.banks.first().map_or(0, Vec::len)
    }
}

impl Network<Direct> {
    /// Builds the filter cascade and lays out the scalars per layer.
    pub fn from_params(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let banks = build_filters(&params.filters);
        Self::from_banks(banks, params)
    }

    pub(crate) fn from_banks(banks: FilterBanks, params: &ModelParams) -> Result<Self> {
        let lp = &params.layer_params;
        let (layers, channels) = (lp.layers(), lp.channels());
        let per_layer = |values: &[f64]| -> Vec<Vec<f64>> {
            (0..layers).map(|l| values[l * channels..(l + 1) * channels].to_vec()).collect()
        };
        Ok(Self {
            banks,
            threshold: per_layer(&lp.threshold),
            lambda: per_layer(&lp.lambda),
            eta: lp.eta.clone(),
            epsilon: lp.epsilon,
            support: params.support,
            restrict_support: params.restrict_support,
        })
    }

    /// Plain forward pass on an image.
    pub fn run(&self, blurred: &Image) -> Result<ForwardOutput> {
        let mut engine = Direct::new(blurred.height(), blurred.width());
        let state = forward_with(&mut engine, blurred, self)?;
        let kernel = crop_kernel(&state.kernel_plane, self.support)?;
        let features = state.layers.last().map(|t| t.g.clone()).unwrap_or_default();
        Ok(ForwardOutput {
            kernel,
            image: state.image.clone(),
            features,
            state,
        })
    }
}

/// Intermediate values of one layer.
pub struct LayerTrace<E: Engine> {
    /// Spectra of `y_i^l = f_i^l ∗ y`.
    pub filtered: Vec<E::Complex>,
    /// `g_i^{l+1}`.
    pub g: Vec<E::Real>,
    /// `z_i^{l+1}`.
    pub z: Vec<E::Real>,
    /// Unprojected kernel estimate `k^{l+1/3}`.
    pub kernel_raw: E::Real,
    /// Projected kernel `k^{l+1}` (full grid, on the simplex).
    pub kernel: E::Real,
}

/// Everything a forward pass produced, layer by layer.
pub struct ForwardState<E: Engine> {
    pub layers: Vec<LayerTrace<E>>,
    /// Final full-grid kernel `k^{L+1}`.
    pub kernel_plane: E::Real,
    /// Reconstructed image `x̃`.
    pub image: E::Real,
}

/// Result of a plain forward pass.
pub struct ForwardOutput {
    /// `k̃`, cropped to the model's support.
    pub kernel: Kernel,
    /// Reconstructed image, not clamped.
    pub image: Image,
    /// Final feature maps `g̃_i`.
    pub features: Vec<RealPlane>,
    pub state: ForwardState<Direct>,
}

impl ForwardState<Direct> {
    /// The filtered observations `y_i^l` of a layer, back in the image domain.
    pub fn feature_inputs(&self, engine: &mut Direct, layer: usize) -> Result<Vec<RealPlane>> {
        self.layers[layer].filtered.iter().map(|s| engine.ifft2(s)).collect()
    }
}

/// `g = F⁻¹{(b·conj(k̂)⊙ŷ_i + λ·ẑ_i) / (b·|k̂|² + λ)}`.
///
/// With `b = λζ` this is the exact minimizer of
/// `½‖y_i − k∗g‖² + (1/2ζ)‖g − z_i‖²`, and it stays defined at `λ = 0`.
pub fn g_update_with<E: Engine>(
    engine: &mut E,
    filtered: &E::Complex,
    z_spec: &E::Complex,
    kernel_spec: &E::Complex,
    threshold: &E::Scalar,
    lambda: &E::Scalar,
) -> Result<E::Real> {
    let data = engine.mul(kernel_spec, filtered, true);
    let data = engine.scale_complex(threshold, &data);
    let prior = engine.scale_complex(lambda, z_spec);
    let num = engine.add_complex(&data, &prior);
    let power = engine.abs_sq(kernel_spec);
    let den = engine.scale(threshold, &power);
    let den = engine.add_scalar(&den, lambda);
    let g_spec = engine.divide(&num, &den)?;
    engine.ifft2(&g_spec)
}

/// `k = F⁻¹{Σ conj(ẑ_i)⊙ŷ_i / (Σ|ẑ_i|² + ε)}`.
pub fn k_update_with<E: Engine>(
    engine: &mut E,
    z_specs: &[E::Complex],
    filtered: &[E::Complex],
    epsilon: &E::Scalar,
) -> Result<E::Real> {
    if z_specs.is_empty() || z_specs.len() != filtered.len() {
        return Err(Error::ShapeMismatch("kernel update channels"));
    }
    let mut num = engine.mul(&z_specs[0], &filtered[0], true);
    let mut den = engine.abs_sq(&z_specs[0]);
    for (z, y) in z_specs.iter().zip(filtered).skip(1) {
        let term = engine.mul(z, y, true);
        num = engine.add_complex(&num, &term);
        let power = engine.abs_sq(z);
        den = engine.add(&den, &power)?;
    }
    let den = engine.add_scalar(&den, epsilon);
    let k_spec = engine.divide(&num, &den)?;
    engine.ifft2(&k_spec)
}

/// `[k]_+ / ‖[k]_+‖₁`, falling back to the impulse at the origin.
pub fn k_project_with<E: Engine>(engine: &mut E, plane: &E::Real) -> E::Real {
    let clamped = engine.relu(plane);
    engine.l1_normalize(&clamped)
}

/// `x̃ = F⁻¹{(conj(k̂)ŷ + Σ η_i conj(f̂_i)ĝ_i) / (|k̂|² + Σ η_i |f̂_i|²)}`.
pub fn reconstruct_with<E: Engine>(
    engine: &mut E,
    observed_spec: &E::Complex,
    kernel_spec: &E::Complex,
    features: &[E::Real],
    filter_specs: &[E::Complex],
    eta: &[E::Scalar],
) -> Result<E::Real> {
    if features.len() != filter_specs.len() || features.len() != eta.len() {
        return Err(Error::ShapeMismatch("reconstruction channels"));
    }
    let mut num = engine.mul(kernel_spec, observed_spec, true);
    let mut den = engine.abs_sq(kernel_spec);
    for ((g, f), w) in features.iter().zip(filter_specs).zip(eta) {
        let g_spec = engine.fft2(g);
        let term = engine.mul(f, &g_spec, true);
        let term = engine.scale_complex(w, &term);
        num = engine.add_complex(&num, &term);
        let power = engine.abs_sq(f);
        let power = engine.scale(w, &power);
        den = engine.add(&den, &power)?;
    }
    let x_spec = engine.divide(&num, &den)?;
    engine.ifft2(&x_spec)
}

/// Runs the unrolled solver: `k ← δ`, `z_i ← 0`, then `L` layers of
/// filter / g-update / threshold / kernel-update / projection, and the final
/// image reconstruction with the last layer's filters.
pub fn forward_with<E: Engine>(engine: &mut E, blurred: &Image, net: &Network<E>) -> Result<ForwardState<E>> {
    let (h, w) = engine.grid();
    if blurred.dims() != (h, w) {
        return Err(Error::DimensionMismatch {
            left_h: blurred.height(),
            left_w: blurred.width(),
            right_h: h,
            right_w: w,
        });
    }
    let layers = net.layers();
    let channels = net.channels();
    if layers == 0 || channels == 0 {
        return Err(Error::InvalidParameter("network needs at least one layer and channel"));
    }
    if net.threshold.len() != layers || net.lambda.len() != layers || net.eta.len() != channels {
        return Err(Error::ShapeMismatch("network parameters"));
    }

    let observed = engine.real_const(blurred.clone());
    let observed_spec = engine.fft2(&observed);
    let mut kernel = engine.real_const(RealPlane::impulse(h, w));
    let zero = engine.complex_const(Spectrum::zeros(h, w));
    let mut z_specs: Vec<E::Complex> = (0..channels).map(|_| zero.clone()).collect();
    let mut traces = Vec::with_capacity(layers);
    let mut last_filter_specs = Vec::new();

    for l in 0..layers {
        let bank = &net.banks[l];
        if bank.len() != channels || net.threshold[l].len() != channels || net.lambda[l].len() != channels {
            return Err(Error::ShapeMismatch("layer channels"));
        }
        let kernel_spec = engine.fft2(&kernel);
        let mut filter_specs = Vec::with_capacity(channels);
        let mut filtered = Vec::with_capacity(channels);
        let mut gs = Vec::with_capacity(channels);
        let mut zs = Vec::with_capacity(channels);
        let mut next_z_specs = Vec::with_capacity(channels);
        for i in 0..channels {
            let embedded = engine.embed(&bank[i])?;
            let f_spec = engine.fft2(&embedded);
            let y_i = engine.mul(&f_spec, &observed_spec, false);
            let g = g_update_with(engine, &y_i, &z_specs[i], &kernel_spec, &net.threshold[l][i], &net.lambda[l][i])?;
            let z = engine.soft_threshold(&g, &net.threshold[l][i]);
            next_z_specs.push(engine.fft2(&z));
            filter_specs.push(f_spec);
            filtered.push(y_i);
            gs.push(g);
            zs.push(z);
        }
        let kernel_raw = k_update_with(engine, &next_z_specs, &filtered, &net.epsilon)?;
        let mut projected = k_project_with(engine, &kernel_raw);
        if net.restrict_support {
            let masked = engine.mask_window(&projected, net.support);
            projected = engine.l1_normalize(&masked);
        }
        kernel = projected.clone();
        z_specs = next_z_specs;
        last_filter_specs = filter_specs;
        traces.push(LayerTrace {
            filtered,
            g: gs,
            z: zs,
            kernel_raw,
            kernel: projected,
        });
    }

    let kernel_spec = engine.fft2(&kernel);
    let features = &traces.last().expect("at least one layer").g;
    let image = reconstruct_with(engine, &observed_spec, &kernel_spec, features, &last_filter_specs, &net.eta)?;
    Ok(ForwardState {
        layers: traces,
        kernel_plane: kernel,
        image,
    })
}

/// Plain forward pass of a learned model.
pub fn forward(blurred: &Image, params: &ModelParams) -> Result<ForwardOutput> {
    Network::from_params(params)?.run(blurred)
}

fn check_nonnegative(value: f64, what: &'static str) -> Result<()> {
    if !(value >= 0.0) || !value.is_finite() {
        return Err(Error::InvalidParameter(what));
    }
    Ok(())
}

/// Single-channel g-update on plain values.
pub fn g_update(
    filtered_spec: &Spectrum,
    z: &RealPlane,
    kernel_spec: &Spectrum,
    threshold: f64,
    lambda: f64,
) -> Result<RealPlane> {
    check_nonnegative(threshold, "threshold must be nonnegative")?;
    check_nonnegative(lambda, "lambda must be nonnegative")?;
    if threshold + lambda <= 0.0 {
        return Err(Error::InvalidParameter("threshold and lambda cannot both be zero"));
    }
    let mut engine = Direct::new(z.height(), z.width());
    crate::spectral::check_dims(filtered_spec.dims(), z.dims())?;
    crate::spectral::check_dims(kernel_spec.dims(), z.dims())?;
    let z_spec = engine.fft2(z);
    g_update_with(&mut engine, filtered_spec, &z_spec, kernel_spec, &threshold, &lambda)
}

/// Elementwise soft-thresholding `sign(x)·max(|x| − b, 0)`.
pub fn z_update(g: &RealPlane, threshold: f64) -> Result<RealPlane> {
    check_nonnegative(threshold, "threshold must be nonnegative")?;
    Ok(Direct::new(1, 1).soft_threshold(g, &threshold))
}

/// Kernel update on plain spectra.
pub fn k_update(z_specs: &[Spectrum], filtered: &[Spectrum], epsilon: f64) -> Result<RealPlane> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("epsilon must be positive"));
    }
    let (h, w) = z_specs.first().map(Spectrum::dims).ok_or(Error::ShapeMismatch("no channels"))?;
    for s in z_specs.iter().chain(filtered) {
        crate::spectral::check_dims(s.dims(), (h, w))?;
    }
    k_update_with(&mut Direct::new(h, w), z_specs, filtered, &epsilon)
}

/// Simplex projection of a full-grid kernel estimate.
pub fn k_project(plane: &RealPlane) -> RealPlane {
    k_project_with(&mut Direct::new(plane.height(), plane.width()), plane)
}

/// Closed-form image reconstruction from a kernel plane, feature maps and
/// the filters they were computed with.
pub fn reconstruct(
    blurred: &Image,
    kernel_plane: &RealPlane,
    features: &[RealPlane],
    bank: &[RealPlane],
    eta: &[f64],
) -> Result<Image> {
    let (h, w) = blurred.dims();
    kernel_plane.check_same_dims(blurred)?;
    for g in features {
        g.check_same_dims(blurred)?;
    }
    for &e in eta {
        check_nonnegative(e, "eta must be nonnegative")?;
    }
    let mut engine = Direct::new(h, w);
    let observed_spec = engine.fft2(blurred);
    let kernel_spec = engine.fft2(kernel_plane);
    let filter_specs = bank
        .iter()
        .map(|f| Ok(engine.fft2(&crate::spectral::embed_centered(f, h, w)?)))
        .collect::<Result<Vec<_>>>()?;
    reconstruct_with(&mut engine, &observed_spec, &kernel_spec, features, &filter_specs, eta)
}
