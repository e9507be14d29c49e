use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::{adaptive_simpson, check_dim, TargetDensity};
use crate::diffcore::Tensor;
use crate::error::{contract_err, Result};
use crate::math::{exp, ln, sqrt, LN_2PI};

const TABLE_POINTS: usize = 16_385;

/// `log rho(x) = -sum_{i<m} (x_i^2 - delta)^2 - sum_{i>=m} x_i^2 / 2`, with
/// `2^m` modes at `x_i = +-sqrt(delta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManyWellTarget {
    dim: usize,
    wells: usize,
    delta: f64,
    log_z_1d: f64,
    /// Cumulative distribution of one double-well coordinate on `[-l, l]`.
    cdf: Vec<f64>,
    half_width: f64,
}

impl ManyWellTarget {
    pub fn new(dim: usize, wells: usize, delta: f64) -> Result<Self> {
        if wells == 0 || wells > dim || !(delta > 0.0) {
            return Err(contract_err!("many-well needs 1 <= m <= d and delta > 0"));
        }
        let well = |s: f64| {
            let q = s * s - delta;
            exp(-q * q)
        };
        let l = sqrt(delta) + 4.0;
        let r = sqrt(delta);
        let z = adaptive_simpson(&well, -l, -r, 1e-13)
            + adaptive_simpson(&well, -r, 0.0, 1e-13)
            + adaptive_simpson(&well, 0.0, r, 1e-13)
            + adaptive_simpson(&well, r, l, 1e-13);
        // Cumulative table by composite Simpson on sub-intervals.
        let h = 2.0 * l / (TABLE_POINTS - 1) as f64;
        let mut cdf = Vec::with_capacity(TABLE_POINTS);
        let mut acc = 0.0;
        cdf.push(0.0);
        for k in 1..TABLE_POINTS {
            let a = -l + (k - 1) as f64 * h;
            let b = a + h;
            acc += h / 6.0 * (well(a) + 4.0 * well(0.5 * (a + b)) + well(b));
            cdf.push(acc);
        }
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self {
            dim,
            wells,
            delta,
            log_z_1d: ln(z),
            cdf,
            half_width: l,
        })
    }

    /// `d = 5`, `m = 5`, `delta = 4`.
    pub fn mw54() -> Self {
        Self::new(5, 5, 4.0).expect("valid preset")
    }

    /// `d = 50`, `m = 5`, `delta = 2`.
    pub fn mw52() -> Self {
        Self::new(50, 5, 2.0).expect("valid preset")
    }

    pub fn wells(&self) -> usize {
        self.wells
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Inverse-CDF draw of one double-well coordinate.
    fn sample_well(&self, u: f64) -> f64 {
        let k = self
            .cdf
            .partition_point(|&c| c < u)
            .clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let h = 2.0 * self.half_width / (self.cdf.len() - 1) as f64;
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        -self.half_width + ((k - 1) as f64 + frac) * h
    }
}

impl TargetDensity for ManyWellTarget {
    fn name(&self) -> String {
        alloc::format!("manywell-d{}-m{}", self.dim, self.wells)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn log_rho(&self, x: &Tensor) -> Result<Vec<f64>> {
        check_dim(x, self.dim)?;
        Ok((0..x.rows())
            .map(|i| {
                let r = x.row(i);
                let wells: f64 = r[..self.wells]
                    .iter()
                    .map(|&s| (s * s - self.delta).powi(2))
                    .sum();
                let gauss: f64 = r[self.wells..].iter().map(|&s| s * s).sum();
                -wells - 0.5 * gauss
            })
            .collect())
    }

    fn grad_log_rho(&self, x: &Tensor) -> Result<Tensor> {
        check_dim(x, self.dim)?;
        let mut out = x.clone();
        for i in 0..x.rows() {
            let row = out.row_mut(i);
            for (j, s) in row.iter_mut().enumerate() {
                *s = if j < self.wells {
                    -4.0 * *s * (*s * *s - self.delta)
                } else {
                    -*s
                };
            }
        }
        Ok(out)
    }

    fn exact_log_z(&self) -> Option<f64> {
        Some(self.wells as f64 * self.log_z_1d + (self.dim - self.wells) as f64 * 0.5 * LN_2PI)
    }

    fn gt_sample(&self, n: usize, rng: &mut dyn RngCore) -> Result<Tensor> {
        let mut data = Vec::with_capacity(n * self.dim);
        for _ in 0..n {
            for j in 0..self.dim {
                if j < self.wells {
                    let u: f64 = rng.random();
                    data.push(self.sample_well(u));
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    data.push(z);
                }
            }
        }
        Tensor::matrix(n, self.dim, data)
    }

    fn modes(&self) -> Option<Vec<Vec<f64>>> {
        let r = sqrt(self.delta);
        Some(
            (0..1usize << self.wells)
                .map(|mask| {
                    (0..self.dim)
                        .map(|j| {
                            if j < self.wells {
                                if mask >> j & 1 == 1 {
                                    r
                                } else {
                                    -r
                                }
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect(),
        )
    }
}
