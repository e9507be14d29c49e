use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::{check_dim, TargetDensity};
use crate::diffcore::Tensor;
use crate::error::{contract_err, Result};
use crate::math::{exp, ln, log_sum_exp, LN_2PI};

/// Isotropic Gaussian mixture with uniform weights.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmTarget {
    means: Vec<Vec<f64>>,
    std: f64,
}

impl GmmTarget {
    pub fn new(means: Vec<Vec<f64>>, std: f64) -> Result<Self> {
        let dim = means.first().map_or(0, Vec::len);
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(contract_err!(
                "mixture means must be non-empty and of equal length"
            ));
        }
        if !(std > 0.0) {
            return Err(contract_err!("component std must be positive"));
        }
        Ok(Self { means, std })
    }

    /// Nine components on `{-5, 0, 5}^2` with standard deviation 0.3.
    pub fn grid9() -> Self {
        let mut means = Vec::new();
        for a in [-5.0, 0.0, 5.0] {
            for b in [-5.0, 0.0, 5.0] {
                means.push(alloc::vec![a, b]);
            }
        }
        Self { means, std: 0.3 }
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    fn component_logs(&self, x: &[f64], out: &mut Vec<f64>) {
        let var = self.std * self.std;
        let dim = x.len() as f64;
        let norm = -ln(self.means.len() as f64) - 0.5 * dim * (LN_2PI + ln(var));
        out.clear();
        for m in &self.means {
            let sq: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
            out.push(norm - 0.5 * sq / var);
        }
    }
}

impl TargetDensity for GmmTarget {
    fn name(&self) -> String {
        "gmm".into()
    }

    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn log_rho(&self, x: &Tensor) -> Result<Vec<f64>> {
        check_dim(x, self.dim())?;
        let mut buf = Vec::with_capacity(self.means.len());
        Ok((0..x.rows())
            .map(|i| {
                self.component_logs(x.row(i), &mut buf);
                log_sum_exp(&buf)
            })
            .collect())
    }

    fn grad_log_rho(&self, x: &Tensor) -> Result<Tensor> {
        check_dim(x, self.dim())?;
        let var = self.std * self.std;
        let mut out = Tensor::zeros(x.shape());
        let mut buf = Vec::with_capacity(self.means.len());
        for i in 0..x.rows() {
            let xi = x.row(i);
            self.component_logs(xi, &mut buf);
            let lse = log_sum_exp(&buf);
            let row = out.row_mut(i);
            for (l, m) in buf.iter().zip(&self.means) {
                let w = exp(l - lse);
                for ((o, &a), &b) in row.iter_mut().zip(xi).zip(m) {
                    *o += w * (b - a) / var;
                }
            }
        }
        Ok(out)
    }

    fn exact_log_z(&self) -> Option<f64> {
        Some(0.0)
    }

    fn gt_sample(&self, n: usize, rng: &mut dyn RngCore) -> Result<Tensor> {
        let dim = self.dim();
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let k = rng.random_range(0..self.means.len());
            for &m in &self.means[k] {
                let z: f64 = StandardNormal.sample(rng);
                data.push(m + self.std * z);
            }
        }
        Tensor::matrix(n, dim, data)
    }

    fn modes(&self) -> Option<Vec<Vec<f64>>> {
        Some(self.means.clone())
    }
}
