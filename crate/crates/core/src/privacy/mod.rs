//! Gaussian-mechanism accounting for the noise the channel already injects.
//!
//! Changing one formation offset `d_ij` by at most `θ` (ℓ1) moves the next
//! states of the two endpoint agents by at most `Δ_t = 2 c(t) ρ_{K,t} θ`.
//! Every reception carries Gaussian noise with variance at least the smallest
//! receiver floor `r̲`, so step `t` is `(ε_t, δ_t)`-private with
//!
//! ```text
//! ε_t = Δ_t² / (2 r̲) + (Δ_t / √r̲) Q⁻¹(δ_t)
//! ```
//!
//! and the whole run composes additively.

mod ledger;
mod schedule;
mod tail;

use thiserror::Error;

pub use ledger::{compose, LedgerOptions, PrivacyLedger, StepRecord, VarianceFloor};
pub use schedule::{
    validate_schedules, AdmissibilityReport, CheckMode, PartialSums, Schedule, Verdict, PARTIAL_SUM_HORIZONS,
    TAIL_RATIO_THRESHOLD,
};
pub use tail::{ln_q_tail, q_tail, q_tail_inv, q_tail_inv_ln, INVERSE_BRACKET};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrivacyError {
    #[error("{name} = {value} is outside its domain")]
    OutOfDomain { name: &'static str, value: f64 },
    #[error("{0} must be positive and finite, got {1}")]
    NonPositiveParameter(&'static str, f64),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("schedule table has {len} entries, value at t = {t} requested")]
    TableExhausted { t: u64, len: usize },
    #[error("no closed-form admissibility rule for schedule `{0}`")]
    UnknownFamily(String),
    #[error("ledger has no record for t = {0}")]
    MissingRecords(u64),
    #[error("empty window [{0}, {1}]")]
    EmptyWindow(u64, u64),
}

/// Smallest Gaussian scale making a mechanism of ℓ2-sensitivity `delta2`
/// `(eps, delta)`-private: `σ = Δ₂ / (√(Q⁻¹(δ)² + 2ε) − Q⁻¹(δ))`.
pub fn gaussian_sigma_for(delta2: f64, eps: f64, delta: f64) -> Result<f64, PrivacyError> {
    if !(delta2 >= 0.0 && delta2.is_finite()) {
        return Err(PrivacyError::OutOfDomain { name: "sensitivity", value: delta2 });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(PrivacyError::OutOfDomain { name: "epsilon", value: eps });
    }
    let q = q_tail_inv(delta)?;
    // √(q² + 2ε) − q rewritten without cancellation
    Ok(delta2 * ((q * q + 2.0 * eps).sqrt() + q) / (2.0 * eps))
}

/// `ε` certified by Gaussian noise of scale `sigma` for sensitivity `delta2`.
pub fn epsilon_for_sigma(delta2: f64, sigma: f64, delta: f64) -> Result<f64, PrivacyError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(PrivacyError::OutOfDomain { name: "sigma", value: sigma });
    }
    if !(delta2 >= 0.0 && delta2.is_finite()) {
        return Err(PrivacyError::OutOfDomain { name: "sensitivity", value: delta2 });
    }
    let q = q_tail_inv(delta)?;
    Ok(epsilon_bound(delta2, sigma, q))
}

fn epsilon_bound(delta2: f64, sigma: f64, q_inv: f64) -> f64 {
    let s = delta2 / sigma;
    0.5 * s * s + s * q_inv
}

/// `Δ_t = 2 c_t ρ_{K,t} θ`.
pub fn step_sensitivity(c_t: f64, rho_k_t: f64, theta: f64) -> Result<f64, PrivacyError> {
    if !(c_t > 0.0 && c_t.is_finite()) {
        return Err(PrivacyError::NonPositiveParameter("c_t", c_t));
    }
    if !(rho_k_t >= 0.0 && rho_k_t.is_finite()) {
        return Err(PrivacyError::NonPositiveParameter("rho_K", rho_k_t));
    }
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(PrivacyError::NonPositiveParameter("theta", theta));
    }
    Ok(2.0 * c_t * rho_k_t * theta)
}

/// Per-step budget against the worst-case noise floor `r̲`.
pub fn step_epsilon(delta_sens: f64, r_floor: f64, delta_t: f64) -> Result<f64, PrivacyError> {
    if !(r_floor > 0.0 && r_floor.is_finite()) {
        return Err(PrivacyError::OutOfDomain { name: "r_floor", value: r_floor });
    }
    epsilon_for_sigma(delta_sens, r_floor.sqrt(), delta_t)
}

/// [`step_epsilon`] with `δ_t` given by its logarithm, for failure
/// probabilities below the `f64` range.
pub fn step_epsilon_ln_delta(delta_sens: f64, r_floor: f64, ln_delta_t: f64) -> Result<f64, PrivacyError> {
    if !(r_floor > 0.0 && r_floor.is_finite()) {
        return Err(PrivacyError::OutOfDomain { name: "r_floor", value: r_floor });
    }
    if !(delta_sens >= 0.0 && delta_sens.is_finite()) {
        return Err(PrivacyError::OutOfDomain { name: "sensitivity", value: delta_sens });
    }
    Ok(epsilon_bound(delta_sens, r_floor.sqrt(), q_tail_inv_ln(ln_delta_t)?))
}
