//! Float math routed through `std` when available, `libm` otherwise.

#[cfg(feature = "std")]
mod imp {
    #[inline]
    pub fn ln(x: f64) -> f64 {
        x.ln()
    }
    #[inline]
    pub fn exp(x: f64) -> f64 {
        x.exp()
    }
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        x.sqrt()
    }
    #[inline]
    pub fn abs(x: f64) -> f64 {
        x.abs()
    }
}

#[cfg(not(feature = "std"))]
mod imp {
    #[inline]
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }
    #[inline]
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }
    #[inline]
    pub fn abs(x: f64) -> f64 {
        libm::fabs(x)
    }
}

pub(crate) use imp::{abs, exp, ln, sqrt};

/// Smallest probability admitted inside a logarithm. Stored parameters may be
/// exactly zero; likelihood code clamps them to `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub(crate) const PROB_FLOOR: f64 = 1e-12;

/// `ln` of a probability clamped away from 0 and 1.
#[inline]
pub(crate) fn ln_prob(p: f64) -> f64 {
    ln(p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
}

/// `x * ln(x)` with the convention `0 * ln 0 = 0`.
#[inline]
pub(crate) fn x_ln_x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * ln(x)
    }
}
