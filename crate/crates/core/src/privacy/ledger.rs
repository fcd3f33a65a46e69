use serde::Serialize;

use super::schedule::Schedule;
use super::{step_epsilon_ln_delta, step_sensitivity, PrivacyError};

/// Variance the per-step budget is certified against.
#[derive(Debug, Clone, PartialEq)]
pub enum VarianceFloor {
    /// `r̲ = min_i r_i` at every step (trajectory independent).
    Worst(f64),
    /// Smallest realised reception variance at each time, indexed by `t`.
    Realized(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerOptions {
    pub theta: f64,
    /// Use `ρ_K = max_t ρ_{K,t}` over the window instead of `ρ_{K,t}`.
    pub global_rho: bool,
    pub floor: VarianceFloor,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: u64,
    pub c: f64,
    pub rho_k: f64,
    #[serde(rename = "delta_sens")]
    pub sensitivity: f64,
    pub variance_floor: f64,
    pub eps: f64,
    pub delta: f64,
}

/// Per-step `(Δ_t, ε_t, δ_t)` over a contiguous window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyLedger {
    pub window: (u64, u64),
    pub theta: f64,
    pub global_rho: bool,
    pub records: Vec<StepRecord>,
}

impl PrivacyLedger {
    /// `rho_series[t]` must hold `ρ_{K,t}` for every `t` in `t1..=t2`.
    pub fn build(
        c: &Schedule,
        delta: &Schedule,
        rho_series: &[f64],
        t1: u64,
        t2: u64,
        options: &LedgerOptions,
    ) -> Result<Self, PrivacyError> {
        if t1 > t2 {
            return Err(PrivacyError::EmptyWindow(t1, t2));
        }
        c.validate()?;
        delta.check_failure_probability()?;
        let rho_at = |t: u64| rho_series.get(t as usize).copied().ok_or(PrivacyError::MissingRecords(t));
        let global = if options.global_rho {
            Some((t1..=t2).map(rho_at).try_fold(0.0_f64, |m, r| r.map(|r| m.max(r)))?)
        } else {
            None
        };
        let records = (t1..=t2)
            .map(|t| {
                let c_t = c.value(t)?;
                let rho_k = match global {
                    Some(g) => g,
                    None => rho_at(t)?,
                };
                let sensitivity = step_sensitivity(c_t, rho_k, options.theta)?;
                let variance_floor = match &options.floor {
                    VarianceFloor::Worst(r) => *r,
                    VarianceFloor::Realized(v) => *v.get(t as usize).ok_or(PrivacyError::MissingRecords(t))?,
                };
                Ok(StepRecord {
                    t,
                    c: c_t,
                    rho_k,
                    sensitivity,
                    variance_floor,
                    eps: step_epsilon_ln_delta(sensitivity, variance_floor, delta.ln_value(t)?)?,
                    delta: delta.value(t)?,
                })
            })
            .collect::<Result<Vec<_>, PrivacyError>>()?;
        Ok(Self {
            window: (t1, t2),
            theta: options.theta,
            global_rho: options.global_rho,
            records,
        })
    }

    /// Running `Σ_{s <= t} ε_s` from the start of the window.
    pub fn cumulative_eps(&self) -> Vec<(u64, f64)> {
        let mut acc = Kahan::default();
        self.records
            .iter()
            .map(|r| {
                acc.add(r.eps);
                (r.t, acc.total())
            })
            .collect()
    }
}

/// `(Σ ε_t, Σ δ_t)` over `t1..=t2` by basic sequential composition.
pub fn compose(ledger: &PrivacyLedger, t1: u64, t2: u64) -> Result<(f64, f64), PrivacyError> {
    if t1 > t2 {
        return Err(PrivacyError::EmptyWindow(t1, t2));
    }
    let (start, end) = ledger.window;
    if t1 < start {
        return Err(PrivacyError::MissingRecords(t1));
    }
    if t2 > end {
        return Err(PrivacyError::MissingRecords(end + 1));
    }
    let slice = &ledger.records[(t1 - start) as usize..=(t2 - start) as usize];
    let (mut eps, mut delta) = (Kahan::default(), Kahan::default());
    for r in slice {
        eps.add(r.eps);
        delta.add(r.delta);
    }
    Ok((eps.total(), delta.total()))
}

/// Neumaier compensated sum.
#[derive(Debug, Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(self) -> f64 {
        self.sum + self.comp
    }
}
