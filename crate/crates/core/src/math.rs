//! Scalar math that works with and without `std`.
//!
//! With `std` the platform intrinsics are used; otherwise `libm`.

pub const TAU: f64 = core::f64::consts::TAU;
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard normal quantile at 1 - 1e-4: the prior truncation bound.
pub const PRIOR_TRUNCATION: f64 = 3.719_016_485_455_709;

macro_rules! unary {
    ($name:ident, $libm:ident) => {
        #[inline(always)]
        pub fn $name(x: f64) -> f64 {
            #[cfg(feature = "std")]
            {
                x.$name()
            }
            #[cfg(not(feature = "std"))]
            {
                libm::$libm(x)
            }
        }
    };
}

unary!(exp, exp);
unary!(ln, log);
unary!(sqrt, sqrt);
unary!(sin, sin);
unary!(cos, cos);
unary!(ln_1p, log1p);

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    #[cfg(feature = "std")]
    {
        x.powi(n)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::pow(x, n as f64)
    }
}

#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Numerically stable `log(sum(exp(v)))`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|&v| exp(v - max)).sum();
    max + ln(sum)
}

/// Log density of an isotropic normal `N(mean, var I)` at `x`.
pub fn log_normal_isotropic(x: &[f64], mean: &[f64], var: f64) -> f64 {
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * sq / var - 0.5 * x.len() as f64 * (LN_2PI + ln(var))
}

/// Log density of the untruncated standard normal prior.
pub fn log_std_normal(x: &[f64]) -> f64 {
    let sq: f64 = x.iter().map(|a| a * a).sum();
    -0.5 * sq - 0.5 * x.len() as f64 * LN_2PI
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_is_stable() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + core::f64::consts::LN_2)).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn truncation_bound_is_upper_quantile() {
        // 1 - Phi(b) = 1e-4
        let tail = 0.5 * (1.0 - erf(PRIOR_TRUNCATION / core::f64::consts::SQRT_2));
        assert!((tail - 1e-4).abs() < 1e-15);
    }
}
