//! The unrolled half-quadratic splitting network.
//!
//! Each layer filters the observation with its bank, solves the quadratic
//! feature subproblem per frequency, soft-thresholds the result, re-estimates
//! the kernel per frequency and projects it onto the simplex. The image is
//! recovered at the end from the final kernel and features.

mod engine;
mod filters;
mod network;
mod params;
mod preset;

#[cfg(test)]
mod tests;

pub use engine::{Direct, Engine, DENOMINATOR_FLOOR};
pub use filters::{apply_filter_bank, build_filters, build_filters_with, FilterBanks};
pub use network::{
    forward, forward_with, g_update, g_update_with, k_project, k_project_with, k_update, k_update_with,
    reconstruct, reconstruct_with, z_update, ForwardOutput, ForwardState, LayerTrace, Network,
};
pub use params::{FilterWeights, LayerParams, ModelParams, ParamField, TAPS};
pub use preset::{GradientFilters, TvPreset};

pub(crate) use engine::{conv_full_values, divide_values, in_window, l1_normalize_values, mse_value, soft_threshold_value};
