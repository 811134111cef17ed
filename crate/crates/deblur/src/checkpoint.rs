//! Binary training checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! | field | encoding |
//! |---|---|
//! | magic | 8 bytes `DAUCKPT1` |
//! | version | `u32`, currently 1 |
//! | config block length | `u32`, bytes that follow in the config block |
//! | config block | see [`encode_config`] |
//! | arrays | `u64` count then `count` × `f64`, in the order base filters, mixing filters, thresholds `b`, `λ`, `η`, `ε` (one entry), Adam `m`, Adam `v` |
//! | Adam step | `u64` |
//! | completed epochs | `u64` |
//!
//! Nothing may follow the last field.

use std::fs;
use std::path::Path;

use deblur_core::training::{AdamState, TrainConfig, Trainer};
use deblur_core::unroll::{FilterWeights, LayerParams, ModelParams};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const MAGIC: &[u8; 8] = b"DAUCKPT1";
pub const VERSION: u32 = 1;

/// Everything needed to resume training or run the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub adam: AdamState,
    /// Epochs completed.
    pub epoch: usize,
}

impl From<Trainer> for Checkpoint {
    fn from(t: Trainer) -> Self {
        Self {
            config: t.config,
            params: t.params,
            adam: t.adam,
            epoch: t.epoch,
        }
    }
}

impl From<Checkpoint> for Trainer {
    fn from(c: Checkpoint) -> Self {
        Trainer {
            config: c.config,
            params: c.params,
            adam: c.adam,
            epoch: c.epoch,
        }
    }
}

impl Checkpoint {
    pub fn of(trainer: &Trainer) -> Self {
        trainer.clone().into()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let config = encode_config(&self.config);
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        let p = &self.params;
        let lp = &p.layer_params;
        let arrays: [&[f64]; 8] = [
            &p.filters.base,
            &p.filters.mixing,
            &lp.threshold,
            &lp.lambda,
            &lp.eta,
            std::slice::from_ref(&lp.epsilon),
            &self.adam.m,
            &self.adam.v,
        ];
        for a in arrays {
            out.extend_from_slice(&(a.len() as u64).to_le_bytes());
            for v in a {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        out.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let config_len = r.u32()? as usize;
        let config = decode_config(r.take(config_len)?)?;
        let mut arrays = Vec::with_capacity(8);
        for _ in 0..8 {
            arrays.push(r.f64_array()?);
        }
        let step = r.u64()?;
        let epoch = r.u64()? as usize;
        if r.pos != bytes.len() {
            return Err(corrupt(&format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let [base, mixing, threshold, lambda, eta, epsilon, m, v]: [Vec<f64>; 8] =
            arrays.try_into().expect("eight arrays");
        let epsilon = match epsilon[..] {
            [e] => e,
            _ => return Err(corrupt("epsilon must hold one value")),
        };
        let (layers, channels) = (config.layers, config.channels);
        let shape = |e: deblur_core::Error| corrupt(&e.to_string());
        let params = ModelParams {
            filters: FilterWeights::from_parts(layers, channels, base, mixing).map_err(shape)?,
            layer_params: LayerParams::from_parts(layers, channels, threshold, lambda, eta, epsilon).map_err(shape)?,
            support: config.support,
            restrict_support: config.restrict_support,
        };
        params.validate().map_err(shape)?;
        let n = params.learnable_len();
        if m.len() != n || v.len() != n {
            return Err(corrupt("Adam moments do not match the parameter count"));
        }
        if epoch > config.epochs {
            return Err(corrupt("completed epochs exceed the configured count"));
        }
        Ok(Self {
            config,
            params,
            adam: AdamState { m, v, step },
            epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.encode())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| e.in_file(path))
    }
}

fn corrupt(msg: &str) -> Error {
    Error::CorruptCheckpoint(msg.to_string())
}

/// Config block: `u64` layers, channels, support; `u8` restrict flag;
/// `f64` κ, learning rate, decay; `u64` epochs, batch size; `f64` β1, β2,
/// Adam eps; `u64` seed; `f64` initial `b`, `λ`, `η` and `ε`.
pub fn encode_config(c: &TrainConfig) -> Vec<u8> {
    let mut out = Vec::with_capacity(129);
    for v in [c.layers, c.channels, c.support] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.push(c.restrict_support as u8);
    for v in [c.kappa, c.learning_rate, c.decay] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [c.epochs, c.batch_size] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for v in [c.beta1, c.beta2, c.adam_eps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&c.seed.to_le_bytes());
    for v in [c.init_threshold, c.init_lambda, c.init_eta, c.epsilon] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode_config(bytes: &[u8]) -> Result<TrainConfig> {
    let mut r = Reader { bytes, pos: 0 };
    let layers = r.usize()?;
    let channels = r.usize()?;
    let support = r.usize()?;
    let restrict_support = match r.take(1)?[0] {
        0 => false,
        1 => true,
        other => return Err(corrupt(&format!("restrict flag {other}"))),
    };
    let kappa = r.f64()?;
    let learning_rate = r.f64()?;
    let decay = r.f64()?;
    let epochs = r.usize()?;
    let batch_size = r.usize()?;
    let beta1 = r.f64()?;
    let beta2 = r.f64()?;
    let adam_eps = r.f64()?;
    let seed = r.u64()?;
    let init_threshold = r.f64()?;
    let init_lambda = r.f64()?;
    let init_eta = r.f64()?;
    let epsilon = r.f64()?;
    if r.pos != bytes.len() {
        return Err(corrupt("config block length mismatch"));
    }
    let config = TrainConfig {
        layers,
        channels,
        support,
        restrict_support,
        kappa,
        learning_rate,
        decay,
        epochs,
        batch_size,
        beta1,
        beta2,
        adam_eps,
        seed,
        init_threshold,
        init_lambda,
        init_eta,
        epsilon,
    };
    config.validate().map_err(|e| corrupt(&format!("config: {e}")))?;
    Ok(config)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(corrupt(&format!("truncated at byte {}", self.bytes.len())));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("count overflows usize"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_array(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(corrupt(&format!("array of {n} values runs past the end")));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = TrainConfig {
            layers: 2,
            channels: 3,
            support: 5,
            epochs: 4,
            seed: 11,
            ..TrainConfig::default()
        };
        let mut c = Checkpoint::from(Trainer::new(config).unwrap());
        c.adam.m.iter_mut().enumerate().for_each(|(i, m)| *m = i as f64 * 1e-3);
        c.adam.v.iter_mut().enumerate().for_each(|(i, v)| *v = 1.0 / (i + 1) as f64);
        c.adam.step = 9;
        c.epoch = 3;
        c
    }

    #[test]
    fn encode_decode_is_identity() {
        let c = sample();
        let bytes = c.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn config_block_size() {
        assert_eq!(encode_config(&TrainConfig::default()).len(), 129);
    }

    #[test]
    fn every_truncation_is_corrupt() {
        let bytes = sample().encode();
        for len in 0..bytes.len() {
            assert!(
                matches!(Checkpoint::decode(&bytes[..len]), Err(Error::CorruptCheckpoint(_))),
                "length {len}"
            );
        }
    }

    #[test]
    fn version_and_magic_checks() {
        let mut bytes = sample().encode();
        bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::decode(&bytes),
            Err(Error::VersionMismatch { found: 99, expected: 1 })
        ));
        let mut bytes = sample().encode();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::CorruptCheckpoint(_))));
        let mut bytes = sample().encode();
        bytes.push(0);
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::CorruptCheckpoint(_))));
    }

    #[test]
    fn rejects_negative_threshold() {
        let mut c = sample();
        c.params.layer_params.threshold[0] = -1.0;
        assert!(matches!(Checkpoint::decode(&c.encode()), Err(Error::CorruptCheckpoint(_))));
    }
}
