use alloc::vec::Vec;

use super::Schedule;
use crate::diffcore::Tensor;
use crate::error::{dim_err, Result};
use crate::nets::{ControlNet, TimeArg};

/// Anything that can play the role of `u(x, t, d)` in the dynamics.
pub trait Control {
    fn dim(&self) -> usize;
    fn eval(&self, x: &Tensor, t: TimeArg, d: TimeArg) -> Result<Tensor>;
}

impl Control for ControlNet {
    fn dim(&self) -> usize {
        ControlNet::dim(self)
    }

    fn eval(&self, x: &Tensor, t: TimeArg, d: TimeArg) -> Result<Tensor> {
        self.forward(x, t, d)
    }
}

impl<C: Control + ?Sized> Control for &C {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval(&self, x: &Tensor, t: TimeArg, d: TimeArg) -> Result<Tensor> {
        (**self).eval(x, t, d)
    }
}

fn check(x: &Tensor, dim: usize) -> Result<()> {
    if x.cols() != dim {
        return Err(dim_err!("control expects dim {}, got {}", dim, x.cols()));
    }
    Ok(())
}

/// `u = 0`.
#[derive(Clone, Copy, Debug)]
pub struct ZeroControl {
    pub dim: usize,
}

impl Control for ZeroControl {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &Tensor, _: TimeArg, _: TimeArg) -> Result<Tensor> {
        check(x, self.dim)?;
        Ok(Tensor::zeros(x.shape()))
    }
}

/// `u = factor * g(t) * x`; `factor = -1` keeps `N(0, I)` stationary under
/// the VP drift.
#[derive(Clone, Copy, Debug)]
pub struct ScaledIdentityControl {
    pub dim: usize,
    pub factor: f64,
    pub schedule: Schedule,
}

impl Control for ScaledIdentityControl {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &Tensor, t: TimeArg, _: TimeArg) -> Result<Tensor> {
        check(x, self.dim)?;
        let mut out = x.clone();
        for (i, row) in out.data_mut().chunks_exact_mut(self.dim).enumerate() {
            let s = self.factor * self.schedule.g(t.at(i));
            row.iter_mut().for_each(|v| *v *= s);
        }
        Ok(out)
    }
}

/// `u = c`, independent of every input.
#[derive(Clone, Debug)]
pub struct ConstantControl {
    pub value: Vec<f64>,
}

impl Control for ConstantControl {
    fn dim(&self) -> usize {
        self.value.len()
    }

    fn eval(&self, x: &Tensor, _: TimeArg, _: TimeArg) -> Result<Tensor> {
        check(x, self.value.len())?;
        let mut out = x.clone();
        for row in out.data_mut().chunks_exact_mut(self.value.len()) {
            row.copy_from_slice(&self.value);
        }
        Ok(out)
    }
}
