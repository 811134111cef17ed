//! Classical gradient-domain TV mode: two fixed derivative filters reused in
//! every layer with a geometric continuation schedule.

use alloc::vec;
use alloc::vec::Vec;

use super::engine::Direct;
use super::network::Network;
use crate::math::powi;
use crate::spectral::RealPlane;

/// Which pair of 3×3 derivative filters to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientFilters {
    Prewitt,
    Sobel,
}

impl GradientFilters {
    /// Horizontal and vertical derivative filters.
    pub fn pair(self) -> [RealPlane; 2] {
        let side = match self {
            GradientFilters::Prewitt => 1.0,
            GradientFilters::Sobel => 2.0,
        };
        let dx = RealPlane::from_parts(3, 3, vec![-1.0, 0.0, 1.0, -side, 0.0, side, -1.0, 0.0, 1.0]);
        let dy = RealPlane::from_parts(3, 3, vec![-1.0, -side, -1.0, 0.0, 0.0, 0.0, 1.0, side, 1.0]);
        [dx, dy]
    }
}

/// Schedule `b^l = b₀·r^l`, `λ^l = λ₀·r^l` for 1-based `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvPreset {
    pub filters: GradientFilters,
    pub layers: usize,
    pub threshold0: f64,
    pub lambda0: f64,
    pub ratio: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub support: usize,
    pub restrict_support: bool,
}

impl TvPreset {
    pub fn prewitt(support: usize) -> Self {
        Self {
            filters: GradientFilters::Prewitt,
            layers: 30,
            threshold0: 2.0,
            lambda0: 2e-3,
            ratio: 0.9,
            epsilon: 1.0,
            eta: 20.0,
            support,
            restrict_support: false,
        }
    }

    pub fn network(&self) -> Network<Direct> {
        let bank: Vec<RealPlane> = self.filters.pair().into();
        let decay = |l: usize| powi(self.ratio, l as i32);
        Network {
            banks: vec![bank; self.layers],
            threshold: (1..=self.layers).map(|l| vec![self.threshold0 * decay(l); 2]).collect(),
            lambda: (1..=self.layers).map(|l| vec![self.lambda0 * decay(l); 2]).collect(),
            eta: vec![self.eta; 2],
            epsilon: self.epsilon,
            support: self.support,
            restrict_support: self.restrict_support,
        }
    }
}
