use crate::diffcore::{Gradients, Tape, Tensor, Var};
use crate::dynamics::{shortcut_step_tape, two_step_target, Schedule};
use crate::error::{dim_err, Error, Result};
use crate::nets::{ConsistencyHead, ControlNet, TimeArg};

/// A scalar loss recorded on a tape.
pub struct TapeLoss {
    tape: Tape,
    loss: Var,
    pub value: f64,
}

impl TapeLoss {
    fn new(tape: Tape, loss: Var, what: &str) -> Result<Self> {
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Numeric(what.into()));
        }
        Ok(Self { tape, loss, value })
    }

    /// Accumulates `weight * d value / d theta`.
    pub fn backward(&self, weight: f64, grads: &mut Gradients) -> Result<()> {
        self.tape
            .backward_seeded(self.loss, &Tensor::scalar(weight), grads)
    }
}

/// Batch mean of `|online - target|^2` with `target` held constant.
fn mean_squared_gap(tape: &mut Tape, online: Var, target: Tensor) -> Result<Var> {
    if tape.value(online).shape() != target.shape() {
        return Err(dim_err!(
            "branch shapes {:?} vs {:?}",
            tape.value(online).shape(),
            target.shape()
        ));
    }
    let rows = target.rows();
    let target = tape.constant(target);
    let gap = tape.sub(online, target)?;
    let sq = tape.square(gap);
    let total = tape.sum(sq);
    Ok(tape.scale(total, 1.0 / rows as f64))
}

/// Consistency-distillation loss: batch mean of
/// `|f'(x_{n+1}, t_{n+1}) - f(x_n, t_n)|^2`, gradient through `f` only.
///
/// The stop-gradient branch `f'` shares the current parameters.
pub fn cd_loss(
    head: &ConsistencyHead,
    x_n: &Tensor,
    t_n: TimeArg,
    x_np1: &Tensor,
    t_np1: TimeArg,
) -> Result<TapeLoss> {
    let target = head.forward(x_np1, t_np1)?;
    let mut tape = Tape::new();
    let online = head.forward_tape(&mut tape, x_n, t_n)?;
    let loss = mean_squared_gap(&mut tape, online, target)?;
    TapeLoss::new(tape, loss, "consistency-distillation loss")
}

/// Self-consistency loss: batch mean of `|two_step - shortcut|^2` where the
/// two-step target uses stop-gradient parameters and the shortcut carries
/// the gradient.
pub fn sc_loss(
    net: &ControlNet,
    sched: &Schedule,
    x_t: &Tensor,
    t: TimeArg,
    d: TimeArg,
) -> Result<TapeLoss> {
    let mut tape = Tape::new();
    let online = shortcut_step_tape(net, &mut tape, sched, x_t, t, d)?;
    let target = two_step_target(net, sched, x_t, t, d)?;
    let loss = mean_squared_gap(&mut tape, online, target)?;
    TapeLoss::new(tape, loss, "self-consistency loss")
}

/// `lambda_s * sampling + lambda_sc * self_consistency`.
pub fn total_scds_loss(sampling: f64, self_consistency: f64, lambda_s: f64, lambda_sc: f64) -> f64 {
    lambda_s * sampling + lambda_sc * self_consistency
}
