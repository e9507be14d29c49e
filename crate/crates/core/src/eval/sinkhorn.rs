use alloc::vec;
use alloc::vec::Vec;

use crate::diffcore::Tensor;
use crate::error::{contract_err, dim_err, Result};
use crate::math::{exp, ln};

/// Entropic optimal-transport settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SinkhornConfig {
    /// Fixed regularization; `None` uses `epsilon_factor * median(C)`.
    pub epsilon: Option<f64>,
    pub epsilon_factor: f64,
    pub max_iters: usize,
    /// L1 tolerance on the row marginal.
    pub tolerance: f64,
    /// Report `S(X,Y) - (S(X,X) + S(Y,Y)) / 2` instead of `S(X,Y)`.
    pub debiased: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            epsilon_factor: 1e-3,
            max_iters: 10_000,
            tolerance: 1e-8,
            debiased: false,
        }
    }
}

/// Transport cost of the (approximately) converged entropic plan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornResult {
    /// `<P, C>`, or the debiased combination.
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub epsilon: f64,
    /// Final L1 row-marginal error.
    pub marginal_error: f64,
}

/// Largest cost matrix (entries, per orientation) kept in memory.
const MAX_STORED_COST: usize = 1 << 23;

/// Squared Euclidean cost, stored in both orientations when small enough
/// and evaluated on the fly otherwise.
struct Cost<'a> {
    x: &'a Tensor,
    y: &'a Tensor,
    stored: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a> Cost<'a> {
    fn new(x: &'a Tensor, y: &'a Tensor) -> Self {
        let (n, m) = (x.rows(), y.rows());
        let mut cost = Self { x, y, stored: None };
        if n * m <= MAX_STORED_COST {
            let rows: Vec<f64> = (0..n * m).map(|p| cost.at(p / m, p % m)).collect();
            let cols: Vec<f64> = (0..n * m).map(|p| rows[(p % n) * m + p / n]).collect();
            cost.stored = Some((rows, cols));
        }
        cost
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.x
            .row(i)
            .iter()
            .zip(self.y.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Entry `(i, j)`, from memory when stored.
    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        match &self.stored {
            Some((rows, _)) => rows[i * self.y.rows() + j],
            None => self.at(i, j),
        }
    }

    /// Row `i` of the cost matrix.
    fn row<'s>(&'s self, i: usize, scratch: &'s mut Vec<f64>) -> &'s [f64] {
        let m = self.y.rows();
        match &self.stored {
            Some((rows, _)) => &rows[i * m..(i + 1) * m],
            None => {
                scratch.clear();
                scratch.extend((0..m).map(|j| self.at(i, j)));
                scratch
            }
        }
    }

    /// Column `j` of the cost matrix.
    fn col<'s>(&'s self, j: usize, scratch: &'s mut Vec<f64>) -> &'s [f64] {
        let n = self.x.rows();
        match &self.stored {
            Some((_, cols)) => &cols[j * n..(j + 1) * n],
            None => {
                scratch.clear();
                scratch.extend((0..n).map(|i| self.at(i, j)));
                scratch
            }
        }
    }
}

/// Samples up to `2^20` entries of the cost matrix on a fixed stride.
fn cost_sample(cost: &Cost<'_>, n: usize, m: usize) -> Vec<f64> {
    let total = n * m;
    let k = total.min(1 << 20);
    (0..k)
        .map(|s| {
            let p = (s as u128 * total as u128 / k as u128) as usize;
            cost.at(p / m, p % m)
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

/// Terms this far below the maximum are below `1e-26` relative and skipped.
const NEGLIGIBLE: f64 = -60.0;

/// `log sum_k exp(v_k)` for a buffer of values with a known maximum.
fn lse(buf: &[f64], max: f64) -> f64 {
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut sum = 0.0;
    for &v in buf {
        let z = v - max;
        if z > NEGLIGIBLE {
            sum += exp(z);
        }
    }
    max + ln(sum)
}

struct Solver<'a> {
    cost: Cost<'a>,
    n: usize,
    m: usize,
    f: Vec<f64>,
    g: Vec<f64>,
    buf: Vec<f64>,
    scratch: Vec<f64>,
}

impl Solver<'_> {
    /// Updates `f` and returns the L1 row-marginal error of the plan
    /// before the update.
    fn update_f(&mut self, eps: f64) -> f64 {
        let (log_a, log_b) = (-ln(self.n as f64), -ln(self.m as f64));
        let a = 1.0 / self.n as f64;
        let inv = 1.0 / eps;
        self.buf.resize(self.m, 0.0);
        let mut err = 0.0;
        for i in 0..self.n {
            let c = self.cost.row(i, &mut self.scratch);
            let mut max = f64::NEG_INFINITY;
            for ((b, &gj), &cij) in self.buf.iter_mut().zip(&self.g).zip(c) {
                let v = (gj - cij) * inv;
                *b = v;
                max = max.max(v);
            }
            let l = lse(&self.buf[..self.m], max) + log_b;
            err += (exp(log_a + self.f[i] / eps + l) - a).abs();
            self.f[i] = -eps * l;
        }
        err
    }

    fn update_g(&mut self, eps: f64) {
        let log_a = -ln(self.n as f64);
        let inv = 1.0 / eps;
        self.buf.resize(self.n, 0.0);
        for j in 0..self.m {
            let c = self.cost.col(j, &mut self.scratch);
            let mut max = f64::NEG_INFINITY;
            for ((b, &fi), &cij) in self.buf.iter_mut().zip(&self.f).zip(c) {
                let v = (fi - cij) * inv;
                *b = v;
                max = max.max(v);
            }
            self.g[j] = -eps * (lse(&self.buf[..self.n], max) + log_a);
        }
    }

    fn transport_cost(&self, eps: f64) -> f64 {
        let log_ab = -ln(self.n as f64) - ln(self.m as f64);
        let mut total = 0.0;
        let mut scratch = Vec::new();
        for i in 0..self.n {
            let row = self.cost.row(i, &mut scratch);
            for (j, &c) in row.iter().enumerate() {
                let z = (self.f[i] + self.g[j] - c) / eps + log_ab;
                if z > NEGLIGIBLE + log_ab {
                    total += exp(z) * c;
                }
            }
        }
        total
    }
}

/// Row-marginal tolerance on the annealing levels above the target `eps`.
const COARSE_TOLERANCE: f64 = 1e-4;

/// Entropic OT cost with a given `eps`, annealing from the cost scale.
fn solve(x: &Tensor, y: &Tensor, eps: f64, cfg: &SinkhornConfig) -> SinkhornResult {
    let (n, m) = (x.rows(), y.rows());
    let cost = Cost::new(x, y);
    let mut solver = Solver {
        cost,
        n,
        m,
        f: vec![0.0; n],
        g: vec![0.0; m],
        buf: Vec::new(),
        scratch: Vec::new(),
    };
    let mut level = if n == m {
        // Equal sizes: start from the exact (eps -> 0) dual potentials.
        let (_, u, v) = super::assignment::solve(n, |i, j| solver.cost.get(i, j));
        solver.f = u;
        solver.g = v;
        eps
    } else {
        cost_sample(&solver.cost, n, m)
            .into_iter()
            .fold(0.0, f64::max)
            .max(eps)
    };
    let mut iterations = 0;
    // Coarse levels warm-start the potentials for the next, halved level.
    while level > eps && iterations < cfg.max_iters {
        while iterations < cfg.max_iters {
            let e = solver.update_f(level);
            solver.update_g(level);
            iterations += 1;
            if e < COARSE_TOLERANCE {
                break;
            }
        }
        if iterations < cfg.max_iters {
            level = (level * 0.5).max(eps);
        }
    }
    let mut converged = false;
    let mut err = f64::INFINITY;
    while iterations < cfg.max_iters {
        err = solver.update_f(level);
        solver.update_g(level);
        if err < cfg.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
    }
    SinkhornResult {
        cost: solver.transport_cost(level),
        converged,
        iterations,
        epsilon: level,
        marginal_error: err,
    }
}

/// Puts the pair in a canonical order so the result is exactly symmetric.
fn canonical<'a>(x: &'a Tensor, y: &'a Tensor) -> (&'a Tensor, &'a Tensor) {
    let key = |t: &Tensor| (t.rows(), t.data().len());
    let swap = match key(x).cmp(&key(y)) {
        core::cmp::Ordering::Less => false,
        core::cmp::Ordering::Greater => true,
        core::cmp::Ordering::Equal => {
            x.data()
                .iter()
                .zip(y.data())
                .find_map(|(a, b)| match a.total_cmp(b) {
                    core::cmp::Ordering::Equal => None,
                    o => Some(o == core::cmp::Ordering::Greater),
                })
                == Some(true)
        }
    };
    if swap {
        (y, x)
    } else {
        (x, y)
    }
}

/// Log-domain Sinkhorn between the empirical measures of `x` and `y` with
/// uniform weights and squared Euclidean cost. Non-convergence within the
/// iteration budget is reported through the flag, not as an error.
pub fn sinkhorn_distance(x: &Tensor, y: &Tensor, cfg: &SinkhornConfig) -> Result<SinkhornResult> {
    if x.rows() == 0 || y.rows() == 0 {
        return Err(contract_err!("sample sets must be nonempty"));
    }
    if x.cols() != y.cols() {
        return Err(dim_err!("sample dimensions {} vs {}", x.cols(), y.cols()));
    }
    if !(cfg.tolerance > 0.0)
        || cfg.epsilon.is_some_and(|e| !(e > 0.0))
        || !(cfg.epsilon_factor > 0.0)
    {
        return Err(contract_err!("epsilon and tolerance must be positive"));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(crate::error::Error::Numeric("non-finite samples".into()));
    }
    let (x, y) = canonical(x, y);
    let cost = Cost { x, y, stored: None };
    let samples = cost_sample(&cost, x.rows(), y.rows());
    if samples.iter().all(|&c| c == 0.0) && x.rows() * y.rows() == samples.len() {
        return Ok(SinkhornResult {
            cost: 0.0,
            converged: true,
            iterations: 0,
            epsilon: 0.0,
            marginal_error: 0.0,
        });
    }
    let eps = match cfg.epsilon {
        Some(e) => e,
        None => {
            let med = median(samples.clone());
            let scale = if med > 0.0 {
                med
            } else {
                samples.iter().sum::<f64>() / samples.len() as f64
            };
            cfg.epsilon_factor * scale
        }
    };
    let xy = solve(x, y, eps, cfg);
    if !cfg.debiased {
        return Ok(xy);
    }
    let xx = solve(x, x, eps, cfg);
    let yy = solve(y, y, eps, cfg);
    Ok(SinkhornResult {
        cost: xy.cost - 0.5 * (xx.cost + yy.cost),
        converged: xy.converged && xx.converged && yy.converged,
        iterations: xy.iterations + xx.iterations + yy.iterations,
        epsilon: eps,
        marginal_error: xy
            .marginal_error
            .max(xx.marginal_error)
            .max(yy.marginal_error),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn random_set(n: usize, rng: &mut crate::Rng) -> Tensor {
        Tensor::from_fn(n, 2, |_, _| rng.random_range(-3.0..3.0))
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..n {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn exact_ot(x: &Tensor, y: &Tensor) -> f64 {
        let cost = Cost { x, y, stored: None };
        let n = x.rows();
        permutations(n)
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .map(|(i, &j)| cost.at(i, j))
                    .sum::<f64>()
                    / n as f64
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn single_pair_is_forced() {
        let x = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let y = Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let r = sinkhorn_distance(&x, &y, &SinkhornConfig::default()).unwrap();
        assert!((r.cost - 25.0).abs() < 1e-9 && r.converged, "{r:?}");
    }

    #[test]
    fn identical_separated_sets_cost_nothing() {
        let mut rng = crate::seeded_rng(0, 0);
        let x = Tensor::from_fn(20, 2, |i, j| {
            3.0 * i as f64 + j as f64 + rng.random_range(0.0..0.5)
        });
        let r = sinkhorn_distance(&x, &x, &SinkhornConfig::default()).unwrap();
        assert!(r.cost <= 1e-6, "{r:?}");
    }

    #[test]
    fn matches_permutation_enumeration() {
        for n in [3, 4] {
            for seed in 0..20 {
                let mut rng = crate::seeded_rng(seed, n as u64);
                let (x, y) = (random_set(n, &mut rng), random_set(n, &mut rng));
                let exact = exact_ot(&x, &y);
                let r = sinkhorn_distance(&x, &y, &SinkhornConfig::default()).unwrap();
                assert!(r.marginal_error < 1e-3, "n={n} seed={seed}: {r:?}");
                assert!(
                    (r.cost - exact).abs() <= 0.05 * exact,
                    "n={n} seed={seed}: {} vs {exact}",
                    r.cost
                );
            }
        }
    }

    #[test]
    fn symmetric_and_translation_invariant() {
        let mut rng = crate::seeded_rng(1, 1);
        let x = random_set(30, &mut rng);
        let y = random_set(25, &mut rng);
        let cfg = SinkhornConfig::default();
        let a = sinkhorn_distance(&x, &y, &cfg).unwrap();
        let b = sinkhorn_distance(&y, &x, &cfg).unwrap();
        assert!((a.cost - b.cost).abs() <= 1e-10);
        let y2 = random_set(30, &mut rng);
        let (a, b) = (
            sinkhorn_distance(&x, &y2, &cfg).unwrap(),
            sinkhorn_distance(&y2, &x, &cfg).unwrap(),
        );
        assert!((a.cost - b.cost).abs() <= 1e-10);
        let shift = |t: &Tensor| t.map(|v| v + 7.5);
        let c = sinkhorn_distance(&shift(&x), &shift(&y2), &cfg).unwrap();
        assert!(
            (a.cost - c.cost).abs() <= 1e-6 * a.cost,
            "{} vs {}",
            a.cost,
            c.cost
        );
    }

    #[test]
    fn debiased_variant_vanishes_on_identical_sets() {
        let mut rng = crate::seeded_rng(2, 2);
        let x = random_set(15, &mut rng);
        let cfg = SinkhornConfig {
            debiased: true,
            ..SinkhornConfig::default()
        };
        let r = sinkhorn_distance(&x, &x, &cfg).unwrap();
        assert!(r.cost.abs() < 1e-9);
        let y = random_set(15, &mut rng);
        assert!(sinkhorn_distance(&x, &y, &cfg).unwrap().cost > 0.0);
    }

    #[test]
    fn iteration_budget_is_reported() {
        let mut rng = crate::seeded_rng(3, 3);
        let (x, y) = (random_set(40, &mut rng), random_set(40, &mut rng));
        let cfg = SinkhornConfig {
            max_iters: 2,
            ..SinkhornConfig::default()
        };
        let r = sinkhorn_distance(&x, &y, &cfg).unwrap();
        assert!(!r.converged && r.cost.is_finite(), "{r:?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Tensor::zeros(&[2, 2]);
        assert!(
            sinkhorn_distance(&x, &Tensor::zeros(&[2, 3]), &SinkhornConfig::default()).is_err()
        );
        assert!(
            sinkhorn_distance(&x, &Tensor::zeros(&[0, 2]), &SinkhornConfig::default()).is_err()
        );
        let bad = SinkhornConfig {
            tolerance: 0.0,
            ..SinkhornConfig::default()
        };
        assert!(sinkhorn_distance(&x, &x, &bad).is_err());
    }
}
