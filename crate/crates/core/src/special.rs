//! Log-gamma and digamma for positive real arguments.
//!
//! Both functions shift the argument upward with the recurrences
//! `Γ(x+1) = xΓ(x)` and `ψ(x+1) = ψ(x) + 1/x` until it reaches
//! [`ASYMPTOTIC_THRESHOLD`], then evaluate the Stirling / Bernoulli
//! asymptotic series. At the threshold the first omitted term of either
//! series is below `3e-14`.

#[allow(unused_imports)] // inherent float methods shadow it whenever std is linked
use num_traits::Float;

use crate::{Error, Result};

/// Arguments at or above this value go straight to the asymptotic series.
const ASYMPTOTIC_THRESHOLD: f64 = 10.0;

/// `0.5 · ln(2π)`
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// ln Γ(x) for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    check_domain("ln_gamma", x)?;
    Ok(ln_gamma_unchecked(x))
}

/// ψ(x) = d/dx ln Γ(x) for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_domain("digamma", x)?;
    Ok(digamma_unchecked(x))
}

fn check_domain(function: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            function,
            value: x,
            requirement: "finite and > 0",
        })
    }
}

/// ln Γ(x) without the domain check. Callers guarantee `x > 0` and finite.
pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    debug_assert!(x > 0.0 && x.is_finite());
    let mut x = x;
    // Product of the shifted-away factors; at most 10 terms each below 10,
    // so it neither overflows nor underflows for x >= f64::MIN_POSITIVE.
    let mut shift = 1.0;
    while x < ASYMPTOTIC_THRESHOLD {
        shift *= x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Σ B_2k / (2k(2k-1) x^(2k-1)), Horner form in 1/x².
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2 * (1.0 / 1188.0 + inv2 * (-691.0 / 360_360.0))))));
    let stirling = (x - 0.5) * x.ln() - x + HALF_LN_2PI + series;
    if shift == 1.0 {
        stirling
    } else {
        stirling - shift.ln()
    }
}

/// ψ(x) without the domain check. Callers guarantee `x > 0` and finite.
pub(crate) fn digamma_unchecked(x: f64) -> f64 {
    debug_assert!(x > 0.0 && x.is_finite());
    let mut x = x;
    let mut shift = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        shift += 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Σ B_2k / (2k x^(2k))
    let series = inv2
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 120.0
                    + inv2
                        * (1.0 / 252.0
                            + inv2
                                * (-1.0 / 240.0
                                    + inv2 * (1.0 / 132.0 + inv2 * (-691.0 / 32_760.0))))));
    x.ln() - 0.5 * inv - series - shift
}
