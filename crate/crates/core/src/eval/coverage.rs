use alloc::vec;
use alloc::vec::Vec;

use crate::diffcore::Tensor;
use crate::error::{contract_err, dim_err, Result};

fn nearest(x: &[f64], modes: &[Vec<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, m) in modes.iter().enumerate() {
        let d: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

/// Fraction of samples assigned to each mode by nearest-mode assignment.
pub fn mode_shares(samples: &Tensor, modes: &[Vec<f64>]) -> Result<Vec<f64>> {
    if modes.is_empty() {
        return Err(contract_err!("mode list is empty"));
    }
    if let Some(m) = modes.iter().find(|m| m.len() != samples.cols()) {
        return Err(dim_err!(
            "mode of dimension {} for samples of dimension {}",
            m.len(),
            samples.cols()
        ));
    }
    if samples.rows() == 0 {
        return Err(contract_err!("no samples"));
    }
    let mut counts = vec![0usize; modes.len()];
    for i in 0..samples.rows() {
        counts[nearest(samples.row(i), modes)] += 1;
    }
    let n = samples.rows() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Fraction of modes receiving at least a `threshold` share of the samples.
pub fn mode_coverage(samples: &Tensor, modes: &[Vec<f64>], threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(contract_err!(
            "coverage threshold {} outside (0, 1)",
            threshold
        ));
    }
    let shares = mode_shares(samples, modes)?;
    Ok(shares.iter().filter(|&&s| s >= threshold).count() as f64 / modes.len() as f64)
}
