use alloc::vec::Vec;

use super::{ControlNet, TimeArg};
use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{contract_err, Result};

/// Consistency function `f(x, t) = c_skip(t) x + c_out(t) F(x, t)`.
///
/// `F` is a [`ControlNet`] trunk whose step-size input is pinned to a fixed
/// value. With `c_skip(T) = 1` and `c_out(T) = 0` the boundary condition
/// `f(x, T) = x` holds exactly for every parameter value.
#[derive(Clone, Debug)]
pub struct ConsistencyHead {
    trunk: ControlNet,
    scale: f64,
    d_input: f64,
}

impl ConsistencyHead {
    pub fn new(trunk: ControlNet, scale: f64, d_input: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(contract_err!("skip scale must be positive, got {}", scale));
        }
        if !(d_input > 0.0 && d_input <= trunk.horizon()) {
            return Err(contract_err!(
                "trunk step-size input {} outside (0, T]",
                d_input
            ));
        }
        Ok(Self {
            trunk,
            scale,
            d_input,
        })
    }

    /// Student initialized from a trained control network.
    pub fn from_teacher(teacher: &ControlNet, scale: f64, d_input: f64) -> Result<Self> {
        let trunk = teacher.clone();
        trunk.reset_nfe();
        Self::new(trunk, scale, d_input)
    }

    pub fn trunk(&self) -> &ControlNet {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut ControlNet {
        &mut self.trunk
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn d_input(&self) -> f64 {
        self.d_input
    }

    pub fn horizon(&self) -> f64 {
        self.trunk.horizon()
    }

    /// `(c_skip(t), c_out(t))`.
    pub fn coefficients(&self, t: f64) -> (f64, f64) {
        let s = self.scale;
        let r = self.horizon() - t;
        let denom = r * r + s * s;
        (s * s / denom, s * r / crate::math::sqrt(denom))
    }

    fn coefficient_columns(&self, rows: usize, t: TimeArg) -> (Vec<f64>, Vec<f64>) {
        (0..rows).map(|i| self.coefficients(t.at(i))).unzip()
    }

    /// Gradient-free `f(x, t)`.
    pub fn forward(&self, x: &Tensor, t: TimeArg) -> Result<Tensor> {
        let trunk = self.trunk.forward(x, t, TimeArg::Shared(self.d_input))?;
        let (skip, out) = self.coefficient_columns(x.rows(), t);
        let cols = x.cols();
        let mut y = x.clone();
        for (i, row) in y.data_mut().chunks_exact_mut(cols).enumerate() {
            let (cs, co) = (skip[i], out[i]);
            for (v, &f) in row.iter_mut().zip(trunk.row(i)) {
                *v = *v * cs + f * co;
            }
        }
        Ok(y)
    }

    /// `f(x, t)` recorded on `tape`; bitwise identical to [`Self::forward`].
    pub fn forward_tape(&self, tape: &mut Tape, x: &Tensor, t: TimeArg) -> Result<Var> {
        let trunk = self
            .trunk
            .forward_tape(tape, x, t, TimeArg::Shared(self.d_input))?;
        let rows = x.rows();
        let (skip, out) = self.coefficient_columns(rows, t);
        let cols = x.cols();
        let mut skipped = x.clone();
        for (i, row) in skipped.data_mut().chunks_exact_mut(cols).enumerate() {
            row.iter_mut().for_each(|v| *v *= skip[i]);
        }
        let skipped = tape.constant(skipped);
        let out = tape.constant(Tensor::matrix(rows, 1, out)?);
        let scaled = tape.mul_col(trunk, out)?;
        tape.add(skipped, scaled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::NetConfig;
    use rand::Rng as _;

    fn random_head(seed: u64) -> ConsistencyHead {
        let mut rng = crate::seeded_rng(seed, 0);
        let mut cfg = NetConfig::new(2);
        cfg.hidden = 6;
        let mut net = ControlNet::new(cfg, &mut rng).unwrap();
        let ids: Vec<_> = net.params().ids().collect();
        for id in ids {
            for v in net.params_mut().get_mut(id).data_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        ConsistencyHead::new(net, 1.0, 1.0 / 128.0).unwrap()
    }

    #[test]
    fn boundary_condition_is_exact() {
        for seed in 0..5 {
            let head = random_head(seed);
            let x = Tensor::from_fn(7, 2, |i, j| (i as f64 - 3.0) * 1.7 + j as f64 * 0.3);
            let y = head.forward(&x, TimeArg::Shared(1.0)).unwrap();
            assert_eq!(y, x);
            let mut tape = Tape::new();
            let v = head
                .forward_tape(&mut tape, &x, TimeArg::Shared(1.0))
                .unwrap();
            assert_eq!(tape.value(v).data(), x.data());
        }
    }

    #[test]
    fn coefficients_at_zero_with_unit_scale() {
        let head = random_head(1);
        let (cs, co) = head.coefficients(0.0);
        assert!((cs - 0.5).abs() < 1e-15);
        assert!((co - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn tape_and_plain_agree_for_mixed_times() {
        let head = random_head(2);
        let x = Tensor::from_fn(4, 2, |i, j| i as f64 * 0.5 - j as f64);
        let ts = [0.0, 0.3, 0.9, 1.0];
        let plain = head.forward(&x, TimeArg::PerRow(&ts)).unwrap();
        let mut tape = Tape::new();
        let v = head
            .forward_tape(&mut tape, &x, TimeArg::PerRow(&ts))
            .unwrap();
        assert_eq!(tape.value(v).data(), plain.data());
        assert_eq!(plain.row(3), x.row(3));
    }
}
