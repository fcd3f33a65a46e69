//! Standard Gaussian upper tail `Q(x)` and its inverse on `(0, 1/2)`.

use std::f64::consts::{PI, SQRT_2};

use super::PrivacyError;

/// Upper bracket of the inverse search for probabilities representable as `f64`.
pub const INVERSE_BRACKET: f64 = 40.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `Q(x) = ½ erfc(x/√2)`.
pub fn q_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// `ln Q(x)`, finite for every finite `x` (no underflow in the far tail).
pub fn ln_q_tail(x: f64) -> f64 {
    if x < 30.0 {
        q_tail(x).ln()
    } else {
        -0.5 * x * x - LN_SQRT_2PI - mills_denominator(x).ln()
    }
}

/// `1 / R(x)` where `R(x) = Q(x)/φ(x)` is the Mills ratio, from its
/// continued fraction `x + 1/(x + 2/(x + 3/(x + …)))`. Used for `x >= 30`.
fn mills_denominator(x: f64) -> f64 {
    let mut f = x;
    for k in (1..=60).rev() {
        f = x + k as f64 / f;
    }
    f
}

/// `φ(x) / Q(x)`, the magnitude of `d ln Q / dx`.
fn hazard(x: f64) -> f64 {
    if x < 30.0 {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt() / q_tail(x)
    } else {
        mills_denominator(x)
    }
}

/// `Q⁻¹(p)` for `p ∈ (0, 1/2)`.
pub fn q_tail_inv(p: f64) -> Result<f64, PrivacyError> {
    if !(p > 0.0 && p < 0.5) {
        return Err(PrivacyError::OutOfDomain { name: "probability", value: p });
    }
    Ok(solve_ln(p.ln(), INVERSE_BRACKET))
}

/// `Q⁻¹(e^{ln_p})`; accepts probabilities far below the `f64` range.
pub fn q_tail_inv_ln(ln_p: f64) -> Result<f64, PrivacyError> {
    if ln_p.is_nan() || ln_p >= -std::f64::consts::LN_2 || ln_p == f64::NEG_INFINITY {
        return Err(PrivacyError::OutOfDomain { name: "log-probability", value: ln_p });
    }
    // Q(x) < e^{-x²/2} / 2 for x >= 0, so the root lies below √(-2 ln p).
    let hi = INVERSE_BRACKET.max((-2.0 * ln_p).sqrt() + 1.0);
    Ok(solve_ln(ln_p, hi))
}

/// Newton iteration on the concave, decreasing `ln Q`, safeguarded by a
/// bisection bracket `[0, hi]`.
fn solve_ln(ln_p: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, hi);
    // leading-order asymptotic start, clamped into the bracket
    let mut x = (-2.0 * ln_p - (-2.0 * ln_p).max(1.0).ln() - 2.0 * LN_SQRT_2PI)
        .max(0.0)
        .sqrt()
        .clamp(lo, hi);
    for _ in 0..200 {
        let f = ln_q_tail(x) - ln_p;
        if f == 0.0 {
            return x;
        }
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x + f / hazard(x);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.max(1e-300) || hi - lo <= f64::EPSILON * hi {
            return next;
        }
        x = next;
    }
    x
}
