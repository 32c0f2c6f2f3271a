//! Transcendental functions routed through `libm`.
//!
//! `f64::exp` and friends live in `std`, not `core`. Going through `libm`
//! keeps the crate `no_std` and makes every result bit-identical across
//! platforms, which the determinism guarantees elsewhere rely on.

#[inline(always)]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline(always)]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline(always)]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline(always)]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline(always)]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Numerically stable `ln(1 + e^x)`; non-negative for all finite x.
#[inline(always)]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + ln_1p(exp(-abs(x)))
}

/// Stable logistic function; stays in (0, 1) and never produces NaN for
/// finite input.
#[inline(always)]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}
