use alloc::vec;
use alloc::vec::Vec;

use crate::diffcore::{Gradients, Tape, Tensor, Var};
use crate::dynamics::{em_step, Control, Schedule, SdePath, TimeGrid};
use crate::error::{contract_err, dim_err, Error, Result};
use crate::math::log_std_normal;
use crate::nets::{ControlNet, TimeArg};
use crate::targets::TargetDensity;

/// Per-trajectory `R`, `S` and `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct RnTerms {
    /// `sum_n (u_n . v_n - |u_n|^2 / 2 - div(mu(t_n) x)) dt`, where `v_n` is
    /// the control that generated the path (so `|u_n|^2 / 2` on-policy).
    pub r: Vec<f64>,
    /// `sum_n u_n . dW_n`.
    pub s: Vec<f64>,
    /// `log p_prior(x_0) - log rho(x_T)`.
    pub b: Vec<f64>,
}

impl RnTerms {
    pub fn batch(&self) -> usize {
        self.r.len()
    }

    /// `R + S + B` per trajectory.
    pub fn total(&self) -> Vec<f64> {
        self.r
            .iter()
            .zip(&self.s)
            .zip(&self.b)
            .map(|((r, s), b)| r + s + b)
            .collect()
    }

    fn check(&self) -> Result<()> {
        let ok = self
            .r
            .iter()
            .chain(&self.s)
            .chain(&self.b)
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Numeric("Radon-Nikodym terms".into()))
        }
    }
}

/// Scalar objective of the trajectory terms with its cotangents
/// `d value / d R_i` and `d value / d S_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLoss {
    pub value: f64,
    pub d_r: Vec<f64>,
    pub d_s: Vec<f64>,
}

/// Unbiased sample variance of `R + S + B`.
pub fn lv_loss(terms: &RnTerms) -> Result<TrajectoryLoss> {
    let n = terms.batch();
    if n < 2 {
        return Err(contract_err!(
            "log-variance needs at least two trajectories, got {}",
            n
        ));
    }
    terms.check()?;
    let y = terms.total();
    let mean = y.iter().sum::<f64>() / n as f64;
    let value = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let d: Vec<f64> = y
        .iter()
        .map(|v| 2.0 * (v - mean) / (n - 1) as f64)
        .collect();
    Ok(TrajectoryLoss {
        value,
        d_r: d.clone(),
        d_s: d,
    })
}

/// Mean of `R + B`: the KL divergence up to the additive `log Z`.
pub fn kl_objective(terms: &RnTerms) -> Result<TrajectoryLoss> {
    let n = terms.batch();
    if n == 0 {
        return Err(contract_err!("KL objective needs at least one trajectory"));
    }
    terms.check()?;
    let value = terms
        .r
        .iter()
        .zip(&terms.b)
        .map(|(r, b)| r + b)
        .sum::<f64>()
        / n as f64;
    Ok(TrajectoryLoss {
        value,
        d_r: vec![1.0 / n as f64; n],
        d_s: vec![0.0; n],
    })
}

fn endpoint_terms(path: &SdePath, target: &dyn TargetDensity) -> Result<Vec<f64>> {
    let log_rho = target.log_rho(path.terminal())?;
    let x0 = path.initial();
    Ok((0..x0.rows())
        .map(|i| log_std_normal(x0.row(i)) - log_rho[i])
        .collect())
}

/// Adds node `n`'s running-cost and stochastic-integral contributions of
/// control `u` on a path generated by control `v`.
///
/// The `u . v - |u|^2 / 2` form keeps `R + S + B` the log density ratio of
/// the `u`-process and the target process along paths of the `v`-process;
/// its derivative in `u` vanishes on-policy.
fn accumulate(
    terms: &mut RnTerms,
    sched: &Schedule,
    t: f64,
    dt: f64,
    u: &Tensor,
    v: &Tensor,
    dw: &Tensor,
) {
    let dim = u.cols();
    let div = sched.mu(t) * dim as f64;
    for i in 0..u.rows() {
        let (ui, vi, wi) = (u.row(i), v.row(i), dw.row(i));
        let cross: f64 = ui.iter().zip(vi).map(|(a, b)| a * b - 0.5 * a * a).sum();
        terms.r[i] += (cross - div) * dt;
        terms.s[i] += ui.iter().zip(wi).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `R`, `S`, `B` of a recorded path with `control` re-evaluated at its states.
pub fn rn_terms(
    path: &SdePath,
    control: &dyn Control,
    sched: &Schedule,
    target: &dyn TargetDensity,
) -> Result<RnTerms> {
    let grid = path.grid;
    let dt = grid.dt();
    let batch = path.batch();
    let mut terms = RnTerms {
        r: vec![0.0; batch],
        s: vec![0.0; batch],
        b: Vec::new(),
    };
    for (n, dw) in path.increments.iter().enumerate() {
        let t = grid.node(n);
        let u = control.eval(&path.states[n], TimeArg::Shared(t), TimeArg::Shared(dt))?;
        accumulate(&mut terms, sched, t, dt, &u, &path.controls[n], dw);
    }
    terms.b = endpoint_terms(path, target)?;
    terms.check()?;
    Ok(terms)
}

/// A simulated path together with one tape per control evaluation, ready
/// to backpropagate any [`TrajectoryLoss`].
pub struct RnGraph {
    pub path: SdePath,
    pub terms: RnTerms,
    tapes: Vec<(Tape, Var)>,
}

impl RnGraph {
    /// Accumulates `weight * d loss / d theta` into `grads`.
    pub fn backward(
        &self,
        loss: &TrajectoryLoss,
        weight: f64,
        grads: &mut Gradients,
    ) -> Result<()> {
        let batch = self.path.batch();
        if loss.d_r.len() != batch || loss.d_s.len() != batch {
            return Err(dim_err!(
                "loss cotangents for {} trajectories, graph has {}",
                loss.d_r.len(),
                batch
            ));
        }
        let dt = self.path.grid.dt();
        for (((tape, out), dw), v) in self
            .tapes
            .iter()
            .zip(&self.path.increments)
            .zip(&self.path.controls)
        {
            let u = tape.value(*out);
            let mut seed = u.clone();
            let cols = u.cols();
            for (i, row) in seed.data_mut().chunks_exact_mut(cols).enumerate() {
                let (a, b) = (weight * loss.d_r[i] * dt, weight * loss.d_s[i]);
                for ((s, &w), &vj) in row.iter_mut().zip(dw.row(i)).zip(v.row(i)) {
                    *s = a * (vj - *s) + b * w;
                }
            }
            tape.backward_seeded(*out, &seed, grads)?;
        }
        Ok(())
    }
}

/// Simulates the SDE from `x0` with the given increments, evaluating each
/// node's control once on its own tape; the same evaluation drives the
/// state update and enters `R` and `S`.
pub fn simulate_with_graph(
    net: &ControlNet,
    sched: &Schedule,
    grid: &TimeGrid,
    target: &dyn TargetDensity,
    x0: Tensor,
    increments: Vec<Tensor>,
) -> Result<RnGraph> {
    if increments.len() != grid.steps() {
        return Err(dim_err!(
            "{} increments for {} steps",
            increments.len(),
            grid.steps()
        ));
    }
    let dt = grid.dt();
    let batch = x0.rows();
    let mut terms = RnTerms {
        r: vec![0.0; batch],
        s: vec![0.0; batch],
        b: Vec::new(),
    };
    let mut states = Vec::with_capacity(grid.steps() + 1);
    let mut controls = Vec::with_capacity(grid.steps());
    let mut tapes = Vec::with_capacity(grid.steps());
    states.push(x0);
    for (n, dw) in increments.iter().enumerate() {
        let t = grid.node(n);
        let mut tape = Tape::new();
        let out = net.forward_tape(
            &mut tape,
            &states[n],
            TimeArg::Shared(t),
            TimeArg::Shared(dt),
        )?;
        let u = tape.value(out).clone();
        accumulate(&mut terms, sched, t, dt, &u, &u, dw);
        let next = em_step(sched, &states[n], &u, t, dt, dw)?;
        states.push(next);
        controls.push(u);
        tapes.push((tape, out));
    }
    let path = SdePath {
        grid: *grid,
        states,
        increments,
        controls,
    };
    terms.b = endpoint_terms(&path, target)?;
    terms.check()?;
    Ok(RnGraph { path, terms, tapes })
}

/// Re-evaluates `net` on tapes at the recorded states of `path`.
pub fn rn_graph_from_path(
    path: &SdePath,
    net: &ControlNet,
    sched: &Schedule,
    target: &dyn TargetDensity,
) -> Result<RnGraph> {
    let grid = path.grid;
    let dt = grid.dt();
    let batch = path.batch();
    let mut terms = RnTerms {
        r: vec![0.0; batch],
        s: vec![0.0; batch],
        b: Vec::new(),
    };
    let mut tapes = Vec::with_capacity(grid.steps());
    for (n, dw) in path.increments.iter().enumerate() {
        let t = grid.node(n);
        let mut tape = Tape::new();
        let out = net.forward_tape(
            &mut tape,
            &path.states[n],
            TimeArg::Shared(t),
            TimeArg::Shared(dt),
        )?;
        accumulate(
            &mut terms,
            sched,
            t,
            dt,
            tape.value(out),
            &path.controls[n],
            dw,
        );
        tapes.push((tape, out));
    }
    terms.b = endpoint_terms(path, target)?;
    terms.check()?;
    Ok(RnGraph {
        path: path.clone(),
        terms,
        tapes,
    })
}
