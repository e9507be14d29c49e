//! Benchmark unnormalized densities.

mod funnel;
mod gmm;
mod image;
mod lgcp;
mod manywell;
mod quadrature;

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use rand::RngCore;

pub use funnel::FunnelTarget;
pub use gmm::GmmTarget;
pub use image::ImageTarget;
pub use lgcp::{lgcp_generate, LgcpConfig, LgcpTarget};
pub use manywell::ManyWellTarget;
pub use quadrature::adaptive_simpson;

use crate::diffcore::Tensor;
use crate::error::{dim_err, Error, Result};

/// A density `rho` known up to its normalizing constant `Z`.
pub trait TargetDensity: Send + Sync {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    /// `log rho(x)` for every row of `x`.
    fn log_rho(&self, x: &Tensor) -> Result<Vec<f64>>;

    /// `grad log rho(x)`, where an analytic form exists.
    fn grad_log_rho(&self, _x: &Tensor) -> Result<Tensor> {
        Err(Error::Capability(alloc::format!(
            "{} has no analytic score",
            self.name()
        )))
    }

    /// `log Z` when it is known exactly.
    fn exact_log_z(&self) -> Option<f64> {
        None
    }

    /// Exact samples from `rho / Z`.
    fn gt_sample(&self, _n: usize, _rng: &mut dyn RngCore) -> Result<Tensor> {
        Err(Error::Capability(alloc::format!(
            "{} has no exact sampler",
            self.name()
        )))
    }

    /// Mode locations used for coverage diagnostics.
    fn modes(&self) -> Option<Vec<Vec<f64>>> {
        None
    }
}

pub(crate) fn check_dim(x: &Tensor, dim: usize) -> Result<()> {
    if x.cols() != dim {
        return Err(dim_err!(
            "target has dimension {}, input has {}",
            dim,
            x.cols()
        ));
    }
    Ok(())
}

/// `c * rho` for a positive constant `c = exp(log_c)`.
pub struct Scaled<T> {
    pub inner: T,
    pub log_c: f64,
}

impl<T: TargetDensity> TargetDensity for Scaled<T> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn log_rho(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut v = self.inner.log_rho(x)?;
        v.iter_mut().for_each(|l| *l += self.log_c);
        Ok(v)
    }

    fn grad_log_rho(&self, x: &Tensor) -> Result<Tensor> {
        self.inner.grad_log_rho(x)
    }

    fn exact_log_z(&self) -> Option<f64> {
        self.inner.exact_log_z().map(|z| z + self.log_c)
    }

    fn gt_sample(&self, n: usize, rng: &mut dyn RngCore) -> Result<Tensor> {
        self.inner.gt_sample(n, rng)
    }

    fn modes(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.modes()
    }
}

impl<T: TargetDensity + ?Sized> TargetDensity for Box<T> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_rho(&self, x: &Tensor) -> Result<Vec<f64>> {
        (**self).log_rho(x)
    }
    fn grad_log_rho(&self, x: &Tensor) -> Result<Tensor> {
        (**self).grad_log_rho(x)
    }
    fn exact_log_z(&self) -> Option<f64> {
        (**self).exact_log_z()
    }
    fn gt_sample(&self, n: usize, rng: &mut dyn RngCore) -> Result<Tensor> {
        (**self).gt_sample(n, rng)
    }
    fn modes(&self) -> Option<Vec<Vec<f64>>> {
        (**self).modes()
    }
}

/// Built-in targets by name: `gmm`, `funnel`, `mw54`, `mw52`, `image` (the
/// procedural default picture) and `lgcp` (an `lgcp_grid x lgcp_grid` grid
/// generated from `seed`).
pub fn builtin(name: &str, lgcp_grid: usize, seed: u64) -> Result<Box<dyn TargetDensity>> {
    Ok(match name {
        "gmm" => Box::new(GmmTarget::grid9()),
        "funnel" => Box::new(FunnelTarget::new(10, 3.0)?),
        "mw54" => Box::new(ManyWellTarget::mw54()),
        "mw52" => Box::new(ManyWellTarget::mw52()),
        "image" => Box::new(ImageTarget::builtin()),
        "lgcp" => Box::new(lgcp_generate(&LgcpConfig::new(lgcp_grid), seed)?),
        other => {
            return Err(Error::Capability(alloc::format!(
                "unknown target '{other}'"
            )))
        }
    })
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 6] = ["gmm", "image", "funnel", "mw54", "mw52", "lgcp"];
