use alloc::vec::Vec;

use super::{Control, Schedule};
use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{contract_err, dim_err, Error, Result};
use crate::nets::{ControlNet, TimeArg};

fn check_steps(sched: &Schedule, rows: usize, t: TimeArg, step: TimeArg) -> Result<()> {
    let horizon = sched.horizon();
    for arg in [t, step] {
        if let TimeArg::PerRow(v) = arg {
            if v.len() != rows {
                return Err(dim_err!("{} per-row values for {} rows", v.len(), rows));
            }
        }
    }
    for i in 0..rows {
        let (ti, hi) = (t.at(i), step.at(i));
        if !(hi >= 0.0) || ti + hi > horizon + 1e-12 {
            return Err(contract_err!(
                "step from {} by {} overshoots T = {}",
                ti,
                hi,
                horizon
            ));
        }
    }
    Ok(())
}

/// Row-wise `x + mu(t) h x` together with the control weights `g(t) h / 2`.
fn drift_part(sched: &Schedule, x: &Tensor, t: TimeArg, step: TimeArg) -> (Tensor, Vec<f64>) {
    let cols = x.cols();
    let mut base = x.clone();
    let mut weights = Vec::with_capacity(x.rows());
    for (i, row) in base.data_mut().chunks_exact_mut(cols).enumerate() {
        let (ti, hi) = (t.at(i), step.at(i));
        let a = sched.mu(ti) * hi;
        row.iter_mut().for_each(|v| *v += a * *v);
        weights.push(0.5 * sched.g(ti) * hi);
    }
    (base, weights)
}

/// Euler step of the probability-flow ODE,
/// `x + (mu(t) x + g(t) u(x, t, cond) / 2) h`, with per-row times and steps.
pub fn pf_euler(
    control: &dyn Control,
    sched: &Schedule,
    x: &Tensor,
    t: TimeArg,
    step: TimeArg,
    cond: TimeArg,
) -> Result<Tensor> {
    check_steps(sched, x.rows(), t, step)?;
    let u = control.eval(x, t, cond)?;
    let (mut out, weights) = drift_part(sched, x, t, step);
    let cols = x.cols();
    for (i, row) in out.data_mut().chunks_exact_mut(cols).enumerate() {
        for (o, &uv) in row.iter_mut().zip(u.row(i)) {
            *o += weights[i] * uv;
        }
    }
    if !out.is_finite() {
        return Err(Error::Numeric("ODE state".into()));
    }
    Ok(out)
}

/// [`pf_euler`] for a network, recorded on `tape`; bitwise identical values.
pub fn pf_euler_tape(
    net: &ControlNet,
    tape: &mut Tape,
    sched: &Schedule,
    x: &Tensor,
    t: TimeArg,
    step: TimeArg,
    cond: TimeArg,
) -> Result<Var> {
    check_steps(sched, x.rows(), t, step)?;
    let u = net.forward_tape(tape, x, t, cond)?;
    let (base, weights) = drift_part(sched, x, t, step);
    let base = tape.constant(base);
    let w = tape.constant(Tensor::matrix(x.rows(), 1, weights)?);
    let scaled = tape.mul_col(u, w)?;
    tape.add(base, scaled)
}

/// Single ODE step of size `d_step` from a batch-shared time `t`.
pub fn pf_ode_step(
    control: &dyn Control,
    sched: &Schedule,
    x: &Tensor,
    t: f64,
    d_step: f64,
    cond: f64,
) -> Result<Tensor> {
    pf_euler(
        control,
        sched,
        x,
        TimeArg::Shared(t),
        TimeArg::Shared(d_step),
        TimeArg::Shared(cond),
    )
}

fn doubled(d: TimeArg) -> Vec<f64> {
    match d {
        TimeArg::Shared(v) => alloc::vec![2.0 * v],
        TimeArg::PerRow(v) => v.iter().map(|x| 2.0 * x).collect(),
    }
}

fn as_arg(v: &[f64]) -> TimeArg<'_> {
    if v.len() == 1 {
        TimeArg::Shared(v[0])
    } else {
        TimeArg::PerRow(v)
    }
}

/// One step of size `2d` with the control conditioned on `2d`.
pub fn shortcut_step(
    control: &dyn Control,
    sched: &Schedule,
    x: &Tensor,
    t: TimeArg,
    d: TimeArg,
) -> Result<Tensor> {
    let two_d = doubled(d);
    pf_euler(control, sched, x, t, as_arg(&two_d), as_arg(&two_d))
}

/// [`shortcut_step`] recorded on `tape` (the trainable branch).
pub fn shortcut_step_tape(
    net: &ControlNet,
    tape: &mut Tape,
    sched: &Schedule,
    x: &Tensor,
    t: TimeArg,
    d: TimeArg,
) -> Result<Var> {
    let two_d = doubled(d);
    pf_euler_tape(net, tape, sched, x, t, as_arg(&two_d), as_arg(&two_d))
}

/// Two chained steps of size `d`, each conditioned on `d`.
pub fn two_step_target(
    control: &dyn Control,
    sched: &Schedule,
    x: &Tensor,
    t: TimeArg,
    d: TimeArg,
) -> Result<Tensor> {
    let mid = pf_euler(control, sched, x, t, d, d)?;
    let t_mid: Vec<f64> = (0..x.rows()).map(|i| t.at(i) + d.at(i)).collect();
    let t_mid = match (t, d) {
        (TimeArg::Shared(_), TimeArg::Shared(_)) => TimeArg::Shared(t_mid[0]),
        _ => TimeArg::PerRow(&t_mid),
    };
    pf_euler(control, sched, &mid, t_mid, d, d)
}
