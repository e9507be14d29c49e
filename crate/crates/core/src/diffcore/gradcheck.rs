use super::{Real, Tensor};

/// Central-difference check of an analytic gradient.
///
/// Returns the largest relative error `|fd - g| / (|g| + 1e-12)` over all
/// coordinates, skipping coordinates where both derivatives are below `1e-9`
/// in magnitude (those are compared absolutely instead).
pub fn finite_difference_check<T: Real>(
    mut f: impl FnMut(&Tensor<T>) -> f64,
    at: &Tensor<T>,
    grad: &Tensor<T>,
    h: f64,
) -> f64 {
    let mut worst = 0.0f64;
    let mut probe = at.clone();
    for i in 0..at.len() {
        let orig = at.data()[i];
        probe.data_mut()[i] = T::from_f64(orig.to_f64() + h);
        let up = f(&probe);
        probe.data_mut()[i] = T::from_f64(orig.to_f64() - h);
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let g = grad.data()[i].to_f64();
        let err = if fd.abs() < 1e-9 && g.abs() < 1e-9 {
            (fd - g).abs()
        } else {
            (fd - g).abs() / (g.abs() + 1e-12)
        };
        worst = worst.max(err);
    }
    worst
}
