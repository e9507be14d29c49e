use alloc::string::String;
use alloc::vec::Vec;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{check_dim, TargetDensity};
use crate::diffcore::Tensor;
use crate::error::{contract_err, Result};
use crate::math::{exp, ln, LN_2PI};

/// Neal's funnel: `x_1 ~ N(0, v^2)`, `x_i | x_1 ~ N(0, exp(x_1))`.
#[derive(Clone, Debug, PartialEq)]
pub struct FunnelTarget {
    dim: usize,
    scale: f64,
}

impl FunnelTarget {
    pub fn new(dim: usize, scale: f64) -> Result<Self> {
        if dim < 2 || !(scale > 0.0) {
            return Err(contract_err!("funnel needs dim >= 2 and a positive scale"));
        }
        Ok(Self { dim, scale })
    }
}

impl TargetDensity for FunnelTarget {
    fn name(&self) -> String {
        "funnel".into()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn log_rho(&self, x: &Tensor) -> Result<Vec<f64>> {
        check_dim(x, self.dim)?;
        let v2 = self.scale * self.scale;
        let rest = (self.dim - 1) as f64;
        Ok((0..x.rows())
            .map(|i| {
                let r = x.row(i);
                let x1 = r[0];
                let sq: f64 = r[1..].iter().map(|a| a * a).sum();
                let head = -0.5 * x1 * x1 / v2 - 0.5 * (LN_2PI + ln(v2));
                head - 0.5 * sq * exp(-x1) - 0.5 * rest * (x1 + LN_2PI)
            })
            .collect())
    }

    fn grad_log_rho(&self, x: &Tensor) -> Result<Tensor> {
        check_dim(x, self.dim)?;
        let v2 = self.scale * self.scale;
        let rest = (self.dim - 1) as f64;
        let mut out = Tensor::zeros(x.shape());
        for i in 0..x.rows() {
            let r = x.row(i);
            let e = exp(-r[0]);
            let sq: f64 = r[1..].iter().map(|a| a * a).sum();
            let o = out.row_mut(i);
            o[0] = -r[0] / v2 + 0.5 * sq * e - 0.5 * rest;
            for (oj, &xj) in o[1..].iter_mut().zip(&r[1..]) {
                *oj = -xj * e;
            }
        }
        Ok(out)
    }

    fn exact_log_z(&self) -> Option<f64> {
        Some(0.0)
    }

    fn gt_sample(&self, n: usize, rng: &mut dyn RngCore) -> Result<Tensor> {
        let mut data = Vec::with_capacity(n * self.dim);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(rng);
            let x1 = self.scale * z;
            data.push(x1);
            let s = exp(0.5 * x1);
            for _ in 1..self.dim {
                let z: f64 = StandardNormal.sample(rng);
                data.push(s * z);
            }
        }
        Tensor::matrix(n, self.dim, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::testing::score_error;

    #[test]
    fn log_density_at_origin() {
        let f = FunnelTarget::new(10, 3.0).unwrap();
        let v = f.log_rho(&Tensor::zeros(&[1, 10])).unwrap()[0];
        let expected = -0.5 * (LN_2PI + ln(9.0)) - 9.0 * 0.5 * LN_2PI;
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn score_matches_finite_differences() {
        let f = FunnelTarget::new(4, 3.0).unwrap();
        let x = Tensor::from_rows(&[
            alloc::vec![0.5, 0.2, -0.4, 1.0],
            alloc::vec![-1.5, 0.1, 0.3, -0.2],
        ])
        .unwrap();
        assert!(score_error(&f, &x) < 1e-5);
    }

    #[test]
    fn first_coordinate_variance_is_nine() {
        let f = FunnelTarget::new(10, 3.0).unwrap();
        let s = f.gt_sample(100_000, &mut crate::seeded_rng(22, 0)).unwrap();
        let n = s.rows() as f64;
        let mean = (0..s.rows()).map(|i| s.row(i)[0]).sum::<f64>() / n;
        let var = (0..s.rows())
            .map(|i| (s.row(i)[0] - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        // SE of the variance is 9 sqrt(2 / n) ~ 0.04.
        assert!((var - 9.0).abs() < 0.15, "{var}");
    }
}
