use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::{check_dim, TargetDensity};
use crate::diffcore::Tensor;
use crate::error::{contract_err, Error, Result};
use crate::math::{exp, ln, sqrt, LN_2PI};

/// RNG stream reserved for dataset generation.
const LGCP_STREAM: u64 = 0x1C6C;

/// Log-Gaussian Cox process on an `M x M` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LgcpConfig {
    pub grid: usize,
    /// Marginal prior variance.
    pub sigma2: f64,
    /// Kernel length scale (in units of the grid side).
    pub beta: f64,
    /// Constant prior mean.
    pub mean: f64,
}

impl LgcpConfig {
    /// Standard benchmark constants: `sigma^2 = 1.91`, `beta = 1/33`,
    /// `mean = log 126 - sigma^2 / 2`.
    pub fn new(grid: usize) -> Self {
        let sigma2 = 1.91;
        Self {
            grid,
            sigma2,
            beta: 1.0 / 33.0,
            mean: ln(126.0) - 0.5 * sigma2,
        }
    }

    pub fn dim(&self) -> usize {
        self.grid * self.grid
    }

    /// `sigma^2 exp(-|p_i - p_j| / (M beta))` with `p` the integer cell coordinates.
    pub fn covariance(&self) -> Vec<f64> {
        let (m, n) = (self.grid, self.dim());
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (ri, ci) = ((i / m) as f64, (i % m) as f64);
                let (rj, cj) = ((j / m) as f64, (j % m) as f64);
                let dist = sqrt((ri - rj).powi(2) + (ci - cj).powi(2));
                cov[i * n + j] = self.sigma2 * exp(-dist / (m as f64 * self.beta));
            }
        }
        cov
    }
}

/// Lower Cholesky factor of a symmetric matrix, retrying once with `1e-9` jitter.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    fn attempt(a: &[f64], n: usize, jitter: f64) -> Option<Vec<f64>> {
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j * n + j] + jitter;
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) {
                return None;
            }
            let djj = sqrt(d);
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(l)
    }
    attempt(a, n, 0.0)
        .or_else(|| attempt(a, n, 1e-9))
        .ok_or(Error::Cholesky)
}

/// Posterior over the latent log-intensity given Poisson counts:
/// `log rho(x) = log N(x; mean, Sigma) + sum_i (x_i y_i - exp(x_i) / M^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LgcpTarget {
    config: LgcpConfig,
    counts: Vec<u64>,
    seed: u64,
    chol: Vec<f64>,
    log_det: f64,
}

impl LgcpTarget {
    pub fn new(config: LgcpConfig, counts: Vec<u64>, seed: u64) -> Result<Self> {
        if config.grid < 2 {
            return Err(contract_err!("LGCP grid must be at least 2x2"));
        }
        if counts.len() != config.dim() {
            return Err(contract_err!(
                "{} counts for a {}-cell grid",
                counts.len(),
                config.dim()
            ));
        }
        let n = config.dim();
        let chol = cholesky(&config.covariance(), n)?;
        let log_det = 2.0 * (0..n).map(|i| ln(chol[i * n + i])).sum::<f64>();
        Ok(Self {
            config,
            counts,
            seed,
            chol,
            log_det,
        })
    }

    pub fn config(&self) -> &LgcpConfig {
        &self.config
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Solves `L z = r` in place.
    fn forward_solve(&self, r: &mut [f64]) {
        let n = r.len();
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i];
            let s: f64 = row.iter().zip(&r[..i]).map(|(a, b)| a * b).sum();
            r[i] = (r[i] - s) / self.chol[i * n + i];
        }
    }

    /// Solves `L^T w = z` in place.
    fn backward_solve(&self, z: &mut [f64]) {
        let n = z.len();
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.chol[k * n + i] * z[k];
            }
            z[i] = s / self.chol[i * n + i];
        }
    }

    fn area(&self) -> f64 {
        self.config.dim() as f64
    }
}

/// Draws a latent field from the prior and Poisson counts from it.
pub fn lgcp_generate(config: &LgcpConfig, seed: u64) -> Result<LgcpTarget> {
    if config.grid < 2 {
        return Err(contract_err!("LGCP grid must be at least 2x2"));
    }
    let n = config.dim();
    let chol = cholesky(&config.covariance(), n)?;
    let mut rng = crate::seeded_rng(seed, LGCP_STREAM);
    let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let area = n as f64;
    let mut counts = Vec::with_capacity(n);
    for i in 0..n {
        let z = config.mean + (0..=i).map(|k| chol[i * n + k] * eps[k]).sum::<f64>();
        let rate = exp(z) / area;
        let y = Poisson::new(rate)
            .map_err(|_| Error::Numeric(String::from("Poisson rate")))?
            .sample(&mut rng);
        counts.push(y as u64);
    }
    LgcpTarget::new(config.clone(), counts, seed)
}

impl TargetDensity for LgcpTarget {
    fn name(&self) -> String {
        alloc::format!("lgcp-{}x{}", self.config.grid, self.config.grid)
    }

    fn dim(&self) -> usize {
        self.config.dim()
    }

    fn log_rho(&self, x: &Tensor) -> Result<Vec<f64>> {
        let n = self.dim();
        check_dim(x, n)?;
        let norm = -0.5 * self.log_det - 0.5 * n as f64 * LN_2PI;
        let mut r = vec![0.0; n];
        Ok((0..x.rows())
            .map(|i| {
                let xi = x.row(i);
                r.iter_mut()
                    .zip(xi)
                    .for_each(|(ri, &v)| *ri = v - self.config.mean);
                self.forward_solve(&mut r);
                let quad: f64 = r.iter().map(|v| v * v).sum();
                let lik: f64 = xi
                    .iter()
                    .zip(&self.counts)
                    .map(|(&v, &y)| v * y as f64 - exp(v) / self.area())
                    .sum();
                norm - 0.5 * quad + lik
            })
            .collect())
    }

    fn grad_log_rho(&self, x: &Tensor) -> Result<Tensor> {
        let n = self.dim();
        check_dim(x, n)?;
        let mut out = Tensor::zeros(x.shape());
        let mut r = vec![0.0; n];
        for i in 0..x.rows() {
            let xi = x.row(i);
            r.iter_mut()
                .zip(xi)
                .for_each(|(ri, &v)| *ri = v - self.config.mean);
            self.forward_solve(&mut r);
            self.backward_solve(&mut r);
            for (((o, &w), &v), &y) in out.row_mut(i).iter_mut().zip(&r).zip(xi).zip(&self.counts) {
                *o = -w + y as f64 - exp(v) / self.area();
            }
        }
        Ok(out)
    }

    fn gt_sample(&self, _n: usize, _rng: &mut dyn RngCore) -> Result<Tensor> {
        Err(Error::Capability(String::from(
            "LGCP posterior has no exact sampler",
        )))
    }
}
