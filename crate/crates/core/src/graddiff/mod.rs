//! Reverse-mode gradients of the unrolled network and a finite-difference
//! verifier.

mod check;
mod tape;


pub use check::{finite_diff_check, finite_diff_check_fn, gradient_check_setup, FdReport, FdSample, LossProblem};
pub use tape::{Adjoint, GradientSet, NodeId, ParamSlot, Tape, Value};

use crate::imaging::Image;
use crate::spectral::RealPlane;
use crate::training::{loss_with, LossParts};
use crate::unroll::{forward_with, ModelParams};
use crate::Result;

/// A forward pass and its loss, recorded on a tape.
pub struct LossRecord {
    pub tape: Tape,
    pub loss: NodeId,
    pub image_mse: NodeId,
    pub kernel_mse: NodeId,
}

impl LossRecord {
    pub fn parts(&self) -> LossParts {
        LossParts {
            total: self.tape.scalar(self.loss),
            image_mse: self.tape.scalar(self.image_mse),
            kernel_mse: self.tape.scalar(self.kernel_mse),
        }
    }

    pub fn backward(&self) -> Result<GradientSet> {
        self.tape.backward(self.loss)
    }
}

/// Records forward pass plus `MSE(x̃, sharp) + κ·MSE(k̃, kernel_target)`,
/// where `kernel_target` is the full-grid plane of the true kernel.
pub fn record_loss(
    params: &ModelParams,
    blurred: &Image,
    sharp: &Image,
    kernel_target: &RealPlane,
    kappa: f64,
) -> Result<LossRecord> {
    let (h, w) = blurred.dims();
    let mut tape = Tape::new(h, w);
    let net = tape.network(params)?;
    let state = forward_with(&mut tape, blurred, &net)?;
    let (loss, image_mse, kernel_mse) = loss_with(&mut tape, &state.image, &state.kernel_plane, sharp, kernel_target, kappa)?;
    Ok(LossRecord {
        tape,
        loss,
        image_mse,
        kernel_mse,
    })
}

/// Loss value and its gradient with respect to every learnable.
pub fn loss_and_gradient(
    params: &ModelParams,
    blurred: &Image,
    sharp: &Image,
    kernel_target: &RealPlane,
    kappa: f64,
) -> Result<(LossParts, GradientSet)> {
    let record = record_loss(params, blurred, sharp, kernel_target, kappa)?;
    let grads = record.backward()?;
    Ok((record.parts(), grads))
}
