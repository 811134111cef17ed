use alloc::vec;
use alloc::vec::Vec;

use crate::spectral::RealPlane;
use crate::{Error, Result};

/// Entries in one 3×3 filter.
pub const TAPS: usize = 9;

/// Cascade weights: `C` base 3×3 filters for the last layer and `C×C`
/// mixing 3×3 filters for each earlier layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterWeights {
    layers: usize,
    channels: usize,
    /// `C × 9`, filter `i` at `[i*9..(i+1)*9]`.
    pub base: Vec<f64>,
    /// `(L−1) × C × C × 9`, see [`FilterWeights::mixing_offset`].
    pub mixing: Vec<f64>,
}

impl FilterWeights {
    pub fn zeros(layers: usize, channels: usize) -> Self {
        Self {
            layers,
            channels,
            base: vec![0.0; channels * TAPS],
            mixing: vec![0.0; layers.saturating_sub(1) * channels * channels * TAPS],
        }
    }

    pub fn from_parts(layers: usize, channels: usize, base: Vec<f64>, mixing: Vec<f64>) -> Result<Self> {
        let out = Self {
            layers,
            channels,
            base,
            mixing,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Start of `w_ij^l` in [`FilterWeights::mixing`], for 1-based layer `l < L`.
    pub fn mixing_offset(&self, layer: usize, i: usize, j: usize) -> usize {
        debug_assert!(layer >= 1 && layer < self.layers);
        (((layer - 1) * self.channels + i) * self.channels + j) * TAPS
    }

    pub fn base_filter(&self, i: usize) -> RealPlane {
        RealPlane::from_parts(3, 3, self.base[i * TAPS..(i + 1) * TAPS].to_vec())
    }

    pub fn mixing_filter(&self, layer: usize, i: usize, j: usize) -> RealPlane {
        let at = self.mixing_offset(layer, i, j);
        RealPlane::from_parts(3, 3, self.mixing[at..at + TAPS].to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.channels == 0 {
            return Err(Error::InvalidParameter("layers and channels must be positive"));
        }
        if self.base.len() != self.channels * TAPS
            || self.mixing.len() != (self.layers - 1) * self.channels * self.channels * TAPS
        {
            return Err(Error::ShapeMismatch("filter weights"));
        }
        if self.base.iter().chain(&self.mixing).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("filter weights"));
        }
        Ok(())
    }
}

/// Per-layer thresholds and sparsity weights plus the global reconstruction
/// weights and kernel ridge.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    layers: usize,
    channels: usize,
    /// `b_i^l = λ_i^l ζ_i^l`, `L × C`, index `(l−1)·C + i`.
    pub threshold: Vec<f64>,
    /// `λ_i^l`, `L × C`.
    pub lambda: Vec<f64>,
    /// `η_i`, `C`.
    pub eta: Vec<f64>,
    /// Kernel ridge `ε`, fixed during training.
    pub epsilon: f64,
}

impl LayerParams {
    pub fn uniform(layers: usize, channels: usize, threshold: f64, lambda: f64, eta: f64, epsilon: f64) -> Self {
        Self {
            layers,
            channels,
            threshold: vec![threshold; layers * channels],
            lambda: vec![lambda; layers * channels],
            eta: vec![eta; channels],
            epsilon,
        }
    }

    pub fn from_parts(
        layers: usize,
        channels: usize,
        threshold: Vec<f64>,
        lambda: Vec<f64>,
        eta: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let out = Self {
            layers,
            channels,
            threshold,
            lambda,
            eta,
            epsilon,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Flat index of channel `i` in 1-based layer `l`.
    pub fn index(&self, layer: usize, i: usize) -> usize {
        (layer - 1) * self.channels + i
    }

    pub fn validate(&self) -> Result<()> {
        let per_layer = self.layers * self.channels;
        if self.threshold.len() != per_layer || self.lambda.len() != per_layer || self.eta.len() != self.channels {
            return Err(Error::ShapeMismatch("layer parameters"));
        }
        let all = self.threshold.iter().chain(&self.lambda).chain(&self.eta);
        for v in all {
            if !v.is_finite() {
                return Err(Error::NonFinite("layer parameters"));
            }
            if *v < 0.0 {
                return Err(Error::InvalidParameter("thresholds, lambdas and etas must be nonnegative"));
            }
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter("epsilon must be positive"));
        }
        Ok(())
    }
}

/// Everything the unrolled network needs: learnable cascade weights and
/// layer parameters, the deliverable kernel support, and whether the running
/// kernel estimate is restricted to that support after every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub filters: FilterWeights,
    pub layer_params: LayerParams,
    pub support: usize,
    pub restrict_support: bool,
}

/// Which learnable array a scalar belongs to, in flattening order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamField {
    Base,
    Mixing,
    Threshold,
    Lambda,
    Eta,
}

impl ParamField {
    pub const ALL: [ParamField; 5] = [
        ParamField::Base,
        ParamField::Mixing,
        ParamField::Threshold,
        ParamField::Lambda,
        ParamField::Eta,
    ];

    /// Whether the field is projected onto `[0, ∞)` during training.
    pub fn nonnegative(self) -> bool {
        !matches!(self, ParamField::Base | ParamField::Mixing)
    }
}

impl ModelParams {
    pub fn layers(&self) -> usize {
        self.filters.layers()
    }

    pub fn channels(&self) -> usize {
        self.filters.channels()
    }

    pub fn validate(&self) -> Result<()> {
        self.filters.validate()?;
        self.layer_params.validate()?;
        if self.filters.layers() != self.layer_params.layers() || self.filters.channels() != self.layer_params.channels() {
            return Err(Error::ShapeMismatch("filters vs layer parameters"));
        }
        if self.support % 2 == 0 {
            return Err(Error::EvenSize(self.support));
        }
        Ok(())
    }

    pub fn field(&self, field: ParamField) -> &[f64] {
        match field {
            ParamField::Base => &self.filters.base,
            ParamField::Mixing => &self.filters.mixing,
            ParamField::Threshold => &self.layer_params.threshold,
            ParamField::Lambda => &self.layer_params.lambda,
            ParamField::Eta => &self.layer_params.eta,
        }
    }

    pub fn field_mut(&mut self, field: ParamField) -> &mut Vec<f64> {
        match field {
            ParamField::Base => &mut self.filters.base,
            ParamField::Mixing => &mut self.filters.mixing,
            ParamField::Threshold => &mut self.layer_params.threshold,
            ParamField::Lambda => &mut self.layer_params.lambda,
            ParamField::Eta => &mut self.layer_params.eta,
        }
    }

    /// Number of learnable scalars.
    pub fn learnable_len(&self) -> usize {
        ParamField::ALL.iter().map(|&f| self.field(f).len()).sum()
    }

    /// Learnables concatenated in [`ParamField::ALL`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.learnable_len());
        for f in ParamField::ALL {
            out.extend_from_slice(self.field(f));
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.learnable_len() {
            return Err(Error::ShapeMismatch("flat parameter vector"));
        }
        let mut at = 0;
        for f in ParamField::ALL {
            let dst = self.field_mut(f);
            let n = dst.len();
            dst.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    /// Field of each flat index.
    pub fn flat_fields(&self) -> Vec<ParamField> {
        let mut out = Vec::with_capacity(self.learnable_len());
        for f in ParamField::ALL {
            out.extend(core::iter::repeat(f).take(self.field(f).len()));
        }
        out
    }
}
