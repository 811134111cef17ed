//! Loss, Adam with nonnegativity projection, initialization and the epoch
//! loop.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graddiff::{loss_and_gradient, GradientSet};
use crate::kernelgen::{derive_seed, DatasetRecord};
use crate::math;
use crate::spectral::{embed_kernel, RealPlane};
use crate::unroll::{Engine, FilterWeights, LayerParams, ModelParams, ParamField, TAPS};
use crate::{Error, Result};

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub layers: usize,
    pub channels: usize,
    /// Kernel support `K` of the model.
    pub support: usize,
    pub restrict_support: bool,
    pub kappa: f64,
    pub learning_rate: f64,
    /// Learning-rate factor applied after every epoch.
    pub decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub init_threshold: f64,
    pub init_lambda: f64,
    pub init_eta: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layers: 10,
            channels: 16,
            support: 31,
            restrict_support: false,
            kappa: 1e5,
            learning_rate: 1e-3,
            decay: 0.9,
            epochs: 20,
            batch_size: 1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            init_threshold: 1.0,
            init_lambda: 0.0,
            init_eta: 20.0,
            epsilon: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.channels == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("layers, channels, epochs and batch size must be positive"));
        }
        if self.support % 2 == 0 {
            return Err(Error::EvenSize(self.support));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidParameter("kappa must be nonnegative"));
        }
        if [self.adam_eps, self.epsilon].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("Adam eps and epsilon must be positive"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter("learning rate must be nonnegative"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidParameter("decay must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidParameter("Adam betas must lie in [0, 1)"));
        }
        let inits = [self.init_threshold, self.init_lambda, self.init_eta];
        if inits.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("initial b, lambda and eta must be nonnegative"));
        }
        Ok(())
    }

    /// Learning rate used throughout epoch `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * math::powi(self.decay, epoch as i32)
    }
}

/// Loss value with its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub image_mse: f64,
    pub kernel_mse: f64,
}

/// `MSE(image, sharp) + κ·MSE(kernel_plane, kernel_target)` on any engine.
/// Returns `(total, image term, kernel term)`. `κ = 0` trains on the image
/// term alone.
pub fn loss_with<E: Engine>(
    engine: &mut E,
    image: &E::Real,
    kernel_plane: &E::Real,
    sharp: &RealPlane,
    kernel_target: &RealPlane,
    kappa: f64,
) -> Result<(E::Scalar, E::Scalar, E::Scalar)> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter("kappa must be nonnegative"));
    }
    let image_mse = engine.mse(image, sharp)?;
    let kernel_mse = engine.mse(kernel_plane, kernel_target)?;
    let weighted = engine.scale_scalar(&kernel_mse, kappa);
    let total = engine.add_scalars(&image_mse, &weighted);
    Ok((total, image_mse, kernel_mse))
}

/// Training loss on plain planes.
pub fn loss(image: &RealPlane, kernel_plane: &RealPlane, sharp: &RealPlane, kernel_target: &RealPlane, kappa: f64) -> Result<LossParts> {
    let mut engine = crate::unroll::Direct::new(image.height(), image.width());
    let (total, image_mse, kernel_mse) = loss_with(&mut engine, image, kernel_plane, sharp, kernel_target, kappa)?;
    Ok(LossParts {
        total,
        image_mse,
        kernel_mse,
    })
}

/// Adam moments, laid out like [`ModelParams::to_flat`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of updates applied so far.
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One Adam update with bias correction, then projection of `b`, `λ` and
/// `η` onto `[0, ∞)`.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradientSet,
    state: &mut AdamState,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    let g = grads.to_flat();
    let n = params.learnable_len();
    if g.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::ShapeMismatch("Adam state"));
    }
    state.step += 1;
    let t = state.step.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - math::powi(beta1, t);
    let c2 = 1.0 - math::powi(beta2, t);
    let mut flat = params.to_flat();
    let fields = params.flat_fields();
    for k in 0..n {
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g[k];
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g[k] * g[k];
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        flat[k] -= learning_rate * m_hat / (math::sqrt(v_hat) + eps);
        if fields[k].nonnegative() && flat[k] < 0.0 {
            flat[k] = 0.0;
        }
    }
    params.set_flat(&flat)
}

/// Glorot-uniform filters, `b`, `λ`, `η` and `ε` from the config.
pub fn init_params(config: &TrainConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let (layers, channels) = (config.layers, config.channels);
    let fan = (TAPS * channels) as f64;
    let bound = math::sqrt(6.0 / (fan + fan));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..=bound)).collect() };
    let base = draw(channels * TAPS);
    let mixing = draw((layers - 1) * channels * channels * TAPS);
    let params = ModelParams {
        filters: FilterWeights::from_parts(layers, channels, base, mixing)?,
        layer_params: LayerParams::uniform(
            layers,
            channels,
            config.init_threshold,
            config.init_lambda,
            config.init_eta,
            config.epsilon,
        ),
        support: config.support,
        restrict_support: config.restrict_support,
    };
    params.validate()?;
    Ok(params)
}

/// One row of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    /// 1-based epoch.
    pub epoch: usize,
    /// Optimizer step after this update (1-based, global).
    pub step: u64,
    pub loss: f64,
    pub image_mse: f64,
    pub kernel_mse: f64,
    pub lr: f64,
}

pub const LOG_HEADER: &str = "epoch,step,loss,image_mse,kernel_mse,lr";

/// Optimizer state between epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub adam: AdamState,
    /// Epochs completed so far.
    pub epoch: usize,
}

impl Trainer {
    /// Fresh run, parameters initialized from `config.seed`.
    pub fn new(config: TrainConfig) -> Result<Self> {
        let params = init_params(&config, config.seed)?;
        let adam = AdamState::new(params.learnable_len());
        Ok(Self {
            config,
            params,
            adam,
            epoch: 0,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    /// Order in which records are visited during epoch `epoch` (0-based).
    pub fn epoch_order(&self, epoch: usize, count: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..count).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, epoch as u64));
        order.shuffle(&mut rng);
        order
    }

    /// Runs the next epoch; returns one log row per optimizer step.
    pub fn run_epoch(&mut self, records: &[DatasetRecord]) -> Result<Vec<LogRow>> {
        if records.is_empty() {
            return Err(Error::InvalidParameter("training needs at least one record"));
        }
        let lr = self.config.learning_rate_at(self.epoch);
        let order = self.epoch_order(self.epoch, records.len());
        let mut rows = Vec::with_capacity(order.len().div_ceil(self.config.batch_size));
        for batch in order.chunks(self.config.batch_size) {
            let mut total = GradientSet::zeros_like(&self.params);
            let mut parts = LossParts {
                total: 0.0,
                image_mse: 0.0,
                kernel_mse: 0.0,
            };
            for &index in batch {
                let (p, g) = example_gradient(&self.params, &records[index], self.config.kappa)
                    .map_err(|e| match e {
                        Error::NonFinite(_) | Error::SingularDenominator { .. } => Error::NonFiniteLoss { record: index },
                        other => other,
                    })?;
                if !p.total.is_finite() || !g.is_finite() {
                    return Err(Error::NonFiniteLoss { record: index });
                }
                total.accumulate(&g)?;
                parts.total += p.total;
                parts.image_mse += p.image_mse;
                parts.kernel_mse += p.kernel_mse;
            }
            let scale = 1.0 / batch.len() as f64;
            total.scale(scale);
            adam_step(
                &mut self.params,
                &total,
                &mut self.adam,
                lr,
                self.config.beta1,
                self.config.beta2,
                self.config.adam_eps,
            )?;
            rows.push(LogRow {
                epoch: self.epoch + 1,
                step: self.adam.step,
                loss: parts.total * scale,
                image_mse: parts.image_mse * scale,
                kernel_mse: parts.kernel_mse * scale,
                lr,
            });
        }
        self.epoch += 1;
        Ok(rows)
    }
}

/// Loss and gradient of one dataset record.
pub fn example_gradient(params: &ModelParams, record: &DatasetRecord, kappa: f64) -> Result<(LossParts, GradientSet)> {
    let (h, w) = record.blurred.dims();
    let target = embed_kernel(&record.kernel, h, w)?;
    loss_and_gradient(params, &record.blurred, &record.sharp, &target, kappa)
}

/// Mean loss of `params` over `records` without updating anything.
pub fn evaluate_loss(params: &ModelParams, records: &[DatasetRecord], kappa: f64) -> Result<LossParts> {
    let mut acc = LossParts {
        total: 0.0,
        image_mse: 0.0,
        kernel_mse: 0.0,
    };
    for record in records {
        let (h, w) = record.blurred.dims();
        let out = crate::unroll::forward(&record.blurred, params)?;
        let target = embed_kernel(&record.kernel, h, w)?;
        let p = loss(&out.image, &out.state.kernel_plane, &record.sharp, &target, kappa)?;
        acc.total += p.total;
        acc.image_mse += p.image_mse;
        acc.kernel_mse += p.kernel_mse;
    }
    let n = records.len().max(1) as f64;
    Ok(LossParts {
        total: acc.total / n,
        image_mse: acc.image_mse / n,
        kernel_mse: acc.kernel_mse / n,
    })
}

/// Which parameters the optimizer projects, in flat order.
pub fn projected_mask(params: &ModelParams) -> Vec<bool> {
    params.flat_fields().into_iter().map(ParamField::nonnegative).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Kernel;
    use crate::kernelgen::{linear_motion_kernel, synthesize_blurred, synthetic_scene};
    use proptest::prelude::{any, prop_assert, proptest};

    fn random_plane(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RealPlane {
        RealPlane::from_fn(h, w, |_, _| rng.random_range(-1.0..1.0))
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            layers: 2,
            channels: 3,
            support: 5,
            epochs: 2,
            ..TrainConfig::default()
        }
    }

    fn records(count: usize, size: usize) -> Vec<DatasetRecord> {
        (0..count)
            .map(|i| {
                let sharp = synthetic_scene(size, size, i as u64);
                let kernel = linear_motion_kernel(0.3 * i as f64, 3.0, 5).unwrap();
                let blurred = synthesize_blurred(&sharp, &kernel, 0.01, 100 + i as u64).unwrap();
                DatasetRecord::new(blurred, sharp, kernel, 0.01).unwrap()
            })
            .collect()
    }

    #[test]
    fn loss_vanishes_on_exact_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_plane(&mut rng, 6, 7);
        let k = random_plane(&mut rng, 6, 7);
        let p = loss(&x, &k, &x, &k, 1e5).unwrap();
        assert_eq!(p.total, 0.0);
    }

    #[test]
    fn kernel_term_is_weighted() {
        let x = RealPlane::filled(4, 4, 0.5);
        let k = RealPlane::impulse(4, 4);
        let shifted = k.map(|v| v + 0.01);
        let p = loss(&x, &shifted, &x, &k, 1e5).unwrap();
        let m = p.kernel_mse;
        assert!((m - 1e-4).abs() < 1e-18);
        assert_eq!(p.total, 1e5 * m);
    }

    #[test]
    fn loss_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let (h, w) = (rng.random_range(1..9), rng.random_range(1..9));
            let planes: Vec<RealPlane> = (0..4).map(|_| random_plane(&mut rng, h, w)).collect();
            let kappa = rng.random_range(0.0..1e5);
            let mse = |a: &RealPlane, b: &RealPlane| {
                let mut s = 0.0;
                for r in 0..h {
                    for c in 0..w {
                        let d = a.get(r, c) - b.get(r, c);
                        s += d * d;
                    }
                }
                s / (h * w) as f64
            };
            let p = loss(&planes[0], &planes[1], &planes[2], &planes[3], kappa).unwrap();
            assert_eq!(p.total, mse(&planes[0], &planes[2]) + kappa * mse(&planes[1], &planes[3]));
        }
    }

    #[test]
    fn loss_rejects_mismatched_shapes() {
        let a = RealPlane::zeros(3, 3);
        let b = RealPlane::zeros(3, 4);
        assert!(loss(&a, &a, &b, &a, 1.0).is_err());
        assert!(loss(&a, &a, &a, &a, -1.0).is_err());
    }

    fn tiny_params() -> ModelParams {
        init_params(&small_config(), 3).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut params = tiny_params();
        let before = params.clone();
        let mut state = AdamState::new(params.learnable_len());
        let zeros = GradientSet::zeros_like(&params);
        adam_step(&mut params, &zeros, &mut state, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut params = tiny_params();
        let before = params.to_flat();
        let mut grads = GradientSet::zeros_like(&params);
        grads.base[0] = 1.0;
        let mut state = AdamState::new(params.learnable_len());
        adam_step(&mut params, &grads, &mut state, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        let delta = params.to_flat()[0] - before[0];
        assert!((delta + 1e-3).abs() < 1e-10, "{delta}");
    }

    #[test]
    fn projection_clamps_to_zero() {
        let mut params = tiny_params();
        params.layer_params.threshold[0] = 0.0005;
        let mut grads = GradientSet::zeros_like(&params);
        grads.threshold[0] = 1.0;
        let mut state = AdamState::new(params.learnable_len());
        adam_step(&mut params, &grads, &mut state, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(params.layer_params.threshold[0], 0.0);
    }

    #[test]
    fn adam_rejects_mismatched_state() {
        let mut params = tiny_params();
        let grads = GradientSet::zeros_like(&params);
        let mut state = AdamState::new(3);
        assert!(adam_step(&mut params, &grads, &mut state, 1e-3, 0.9, 0.999, 1e-8).is_err());
    }

    proptest! {
        #[test]
        fn adam_keeps_constrained_fields_nonnegative(seed in any::<u64>(), lr in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut params = tiny_params();
            let mut state = AdamState::new(params.learnable_len());
            for _ in 0..3 {
                let mut grads = GradientSet::zeros_like(&params);
                for f in ParamField::ALL {
                    for g in grads.field_mut(f) {
                        *g = rng.random_range(-10.0..10.0);
                    }
                }
                adam_step(&mut params, &grads, &mut state, lr, 0.9, 0.999, 1e-8).unwrap();
                for f in ParamField::ALL.into_iter().filter(|f| f.nonnegative()) {
                    prop_assert!(params.field(f).iter().all(|&v| v >= 0.0));
                }
            }
        }
    }

    #[test]
    fn init_uses_documented_constants() {
        let config = TrainConfig::default();
        let params = init_params(&config, 0).unwrap();
        assert!(params.layer_params.lambda.iter().all(|&v| v == 0.0));
        assert!(params.layer_params.threshold.iter().all(|&v| v == 1.0));
        assert!(params.layer_params.eta.iter().all(|&v| v == 20.0));
        assert_eq!(params.layer_params.epsilon, 1.0);
        assert_eq!(params.layers(), 10);
        assert_eq!(params.channels(), 16);
        assert_eq!(params.support, 31);
        let bound = math::sqrt(6.0 / (9.0 * 16.0 + 9.0 * 16.0));
        assert!((bound - 0.1443).abs() < 1e-4);
        let weights = params.filters.base.iter().chain(&params.filters.mixing);
        let max = weights.clone().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= bound && max > 0.9 * bound);
        assert_eq!(init_params(&config, 0).unwrap(), params);
        assert_ne!(init_params(&config, 1).unwrap(), params);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { layers: 0, ..TrainConfig::default() },
            TrainConfig { support: 4, ..TrainConfig::default() },
            TrainConfig { decay: 0.0, ..TrainConfig::default() },
            TrainConfig { decay: 1.5, ..TrainConfig::default() },
            TrainConfig { beta1: 1.0, ..TrainConfig::default() },
            TrainConfig { init_eta: -1.0, ..TrainConfig::default() },
            TrainConfig { learning_rate: f64::NAN, ..TrainConfig::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate_at(0), 1e-3);
        assert!((c.learning_rate_at(2) - 1e-3 * 0.81).abs() < 1e-18);
    }

    #[test]
    fn one_record_one_epoch_is_one_step() {
        let mut trainer = Trainer::new(TrainConfig { epochs: 1, ..small_config() }).unwrap();
        let rows = trainer.run_epoch(&records(1, 16)).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(trainer.adam.step, 1);
        assert_eq!(rows[0].epoch, 1);
        assert!(trainer.is_finished());
    }

    #[test]
    fn mini_batches_take_one_step_each() {
        let mut trainer = Trainer::new(TrainConfig { batch_size: 2, ..small_config() }).unwrap();
        let rows = trainer.run_epoch(&records(3, 16)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(trainer.adam.step, 2);
    }

    #[test]
    fn continued_run_equals_uninterrupted_run() {
        let data = records(3, 16);
        let mut whole = Trainer::new(small_config()).unwrap();
        whole.run_epoch(&data).unwrap();
        let snapshot = whole.clone();
        let tail = whole.run_epoch(&data).unwrap();
        let mut resumed = snapshot;
        assert_eq!(resumed.run_epoch(&data).unwrap(), tail);
        assert_eq!(resumed, whole);
    }

    #[test]
    fn evaluation_mode_is_order_independent() {
        let data = records(4, 16);
        let mut losses = Vec::new();
        for seed in [1, 2] {
            let config = TrainConfig {
                learning_rate: 0.0,
                seed,
                ..small_config()
            };
            let mut trainer = Trainer::new(config).unwrap();
            trainer.params = tiny_params();
            let order = trainer.epoch_order(0, data.len());
            let rows = trainer.run_epoch(&data).unwrap();
            let mut by_record: Vec<(usize, u64)> = order.iter().zip(&rows).map(|(&i, r)| (i, r.loss.to_bits())).collect();
            by_record.sort_unstable();
            losses.push((order, by_record));
        }
        assert_ne!(losses[0].0, losses[1].0, "seeds should shuffle differently");
        assert_eq!(losses[0].1, losses[1].1);
    }

    #[test]
    fn identity_target_training_is_stable() {
        let sharp = synthetic_scene(16, 16, 4);
        let record = DatasetRecord::new(sharp.clone(), sharp, Kernel::impulse(5), 0.0).unwrap();
        let config = TrainConfig {
            layers: 2,
            channels: 4,
            support: 5,
            kappa: 0.0,
            learning_rate: 1e-4,
            decay: 1.0,
            epochs: 20,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(config).unwrap();
        let data = [record];
        let initial = evaluate_loss(&trainer.params, &data, 0.0).unwrap().total;
        for _ in 0..20 {
            trainer.run_epoch(&data).unwrap();
            let now = evaluate_loss(&trainer.params, &data, 0.0).unwrap().total;
            assert!(now <= 1.1 * initial + 1e-15, "{now} vs {initial}");
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut trainer = Trainer::new(small_config()).unwrap();
        assert!(trainer.run_epoch(&[]).is_err());
    }
}
