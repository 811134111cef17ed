//! Filter cascade: the last layer uses its 3×3 base filters directly and
//! every earlier layer mixes the next layer's filters through 3×3
//! convolutions, `f_i^l = Σ_j w_ij^l ∗ f_j^{l+1}`, so layer `l` filters are
//! `(3 + 2(L−l))` wide.

use alloc::vec::Vec;

use super::engine::{Direct, Engine};
use super::params::FilterWeights;
use crate::imaging::Image;
use crate::spectral::{embed_centered, Fft2Plan, RealPlane};
use crate::Result;

/// Per-layer filter banks, index 0 is the first layer.
pub type FilterBanks = Vec<Vec<RealPlane>>;

/// Builds the cascade on any engine. `mixing[l][i][j]` holds `w_ij^{l+1}`
/// for `l = 0..L−1`; `base[i]` holds `w_i1^L`.
pub fn build_filters_with<E: Engine>(
    engine: &mut E,
    base: &[E::Real],
    mixing: &[Vec<Vec<E::Real>>],
) -> Result<Vec<Vec<E::Real>>> {
    let layers = mixing.len() + 1;
    let mut banks: Vec<Vec<E::Real>> = Vec::with_capacity(layers);
    banks.push(base.to_vec());
    for layer_mix in mixing.iter().rev() {
        let next = banks.last().expect("at least the base bank");
        let mut bank = Vec::with_capacity(layer_mix.len());
        for row in layer_mix {
            let mut acc: Option<E::Real> = None;
            for (w, f) in row.iter().zip(next) {
                let term = engine.conv_full(w, f);
                acc = Some(match acc {
                    None => term,
                    Some(prev) => engine.add(&prev, &term)?,
                });
            }
            bank.push(acc.expect("at least one channel"));
        }
        banks.push(bank);
    }
    banks.reverse();
    Ok(banks)
}

/// Composes the per-layer filter banks from cascade weights.
pub fn build_filters(weights: &FilterWeights) -> FilterBanks {
    let (layers, channels) = (weights.layers(), weights.channels());
    let base: Vec<RealPlane> = (0..channels).map(|i| weights.base_filter(i)).collect();
    let mixing: Vec<Vec<Vec<RealPlane>>> = (1..layers)
        .map(|l| {
            (0..channels)
                .map(|i| (0..channels).map(|j| weights.mixing_filter(l, i, j)).collect())
                .collect()
        })
        .collect();
    // The engine grid is irrelevant for convolutions of small filters.
    let mut engine = Direct::new(1, 1);
    build_filters_with(&mut engine, &base, &mixing).expect("cascade shapes are consistent by construction")
}

/// Circularly convolves `image` with every filter of `bank`.
pub fn apply_filter_bank(image: &Image, bank: &[RealPlane]) -> Result<Vec<RealPlane>> {
    let (h, w) = image.dims();
    let plan = Fft2Plan::new(h, w);
    let image_spec = plan.forward(image);
    bank.iter()
        .map(|f| {
            let f_spec = plan.forward(&embed_centered(f, h, w)?);
            let product = crate::spectral::spectrum_combine(&f_spec, &image_spec, false)?;
            plan.inverse(&product)
        })
        .collect()
}
