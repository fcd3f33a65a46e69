//! Gain and failure-probability sequences, and their admissibility.

use serde::{Deserialize, Serialize};

use super::tail::q_tail_inv_ln;
use super::PrivacyError;

/// A positive sequence indexed by `t = 0, 1, 2, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// `a / (t + 1)^p`
    Power { a: f64, p: f64 },
    /// `b · e^{-√t}`
    ExpSqrt { b: f64 },
    Constant { value: f64 },
    /// Explicit values; undefined past the end.
    Table { values: Vec<f64> },
}

impl Schedule {
    pub fn validate(&self) -> Result<(), PrivacyError> {
        let bad = |value: f64| !(value > 0.0 && value.is_finite());
        match self {
            Schedule::Power { a, p } if bad(*a) || bad(*p) => Err(PrivacyError::InvalidSchedule(format!(
                "power family needs a > 0 and p > 0 (a = {a}, p = {p})"
            ))),
            Schedule::ExpSqrt { b } if bad(*b) => Err(PrivacyError::InvalidSchedule(format!("exp_sqrt family needs b > 0 (b = {b})"))),
            Schedule::Constant { value } if bad(*value) => Err(PrivacyError::InvalidSchedule(format!("constant must be > 0 (got {value})"))),
            Schedule::Table { values } if values.is_empty() || values.iter().any(|&v| bad(v)) => Err(
                PrivacyError::InvalidSchedule("table must be non-empty with positive entries".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn value(&self, t: u64) -> Result<f64, PrivacyError> {
        Ok(match self {
            Schedule::Power { a, p } => a / ((t + 1) as f64).powf(*p),
            Schedule::ExpSqrt { b } => b * (-(t as f64).sqrt()).exp(),
            Schedule::Constant { value } => *value,
            Schedule::Table { values } => *values
                .get(t as usize)
                .ok_or(PrivacyError::TableExhausted { t, len: values.len() })?,
        })
    }

    /// `ln` of the value at `t`, exact even where the value underflows.
    pub fn ln_value(&self, t: u64) -> Result<f64, PrivacyError> {
        Ok(match self {
            Schedule::Power { a, p } => a.ln() - p * ((t + 1) as f64).ln(),
            Schedule::ExpSqrt { b } => b.ln() - (t as f64).sqrt(),
            _ => self.value(t)?.ln(),
        })
    }

    pub fn values(&self, t1: u64, t2: u64) -> Result<Vec<f64>, PrivacyError> {
        (t1..=t2).map(|t| self.value(t)).collect()
    }

    /// Largest value the sequence ever takes (all families are non-increasing
    /// except tables, which are scanned).
    pub fn supremum(&self) -> f64 {
        match self {
            Schedule::Power { a, .. } => *a,
            Schedule::ExpSqrt { b } => *b,
            Schedule::Constant { value } => *value,
            Schedule::Table { values } => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Schedule::Power { a, p } => format!("{a}/(t+1)^{p}"),
            Schedule::ExpSqrt { b } => format!("{b}*exp(-sqrt(t))"),
            Schedule::Constant { value } => format!("{value}"),
            Schedule::Table { values } => format!("table of {} values", values.len()),
        }
    }

    /// Checks `δ_t ∈ (0, 1/2)` for every `t`.
    pub fn check_failure_probability(&self) -> Result<(), PrivacyError> {
        self.validate()?;
        let sup = self.supremum();
        if sup < 0.5 {
            Ok(())
        } else {
            Err(PrivacyError::OutOfDomain { name: "delta_t", value: sup })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckMode {
    Analytic,
    PartialSum,
}

/// Membership verdict of one series together with why it was reached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub member: bool,
    pub reason: String,
}

impl Verdict {
    fn new(member: bool, reason: impl Into<String>) -> Self {
        Self { member, reason: reason.into() }
    }
}

/// Partial sums of one series at increasing horizons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialSums {
    pub series: String,
    pub horizons: Vec<u64>,
    pub sums: Vec<f64>,
    /// `(S(h_last) − S(h_prev)) / (S(h_prev) − S(h_prev2))`; below
    /// [`TAIL_RATIO_THRESHOLD`] reads as a shrinking tail.
    pub tail_ratio: f64,
    pub likely_convergent: bool,
}

pub const PARTIAL_SUM_HORIZONS: [u64; 4] = [1_000, 10_000, 100_000, 1_000_000];

/// Heuristic cutoff on the ratio of consecutive decade increments.
pub const TAIL_RATIO_THRESHOLD: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub mode: CheckMode,
    pub c: String,
    pub delta: String,
    pub c_positive: bool,
    pub delta_in_domain: bool,
    pub c_in_l2: Verdict,
    pub c_in_l1: Verdict,
    pub delta_in_l1: Verdict,
    pub cross_term_in_l1: Verdict,
    /// All of: `c > 0`, `c ∈ ℓ2`, `δ ∈ ℓ1`, `c·Q⁻¹(δ) ∈ ℓ1`, `δ_t < 1/2`.
    pub admissible: bool,
    /// `c ∈ ℓ2 \ ℓ1`, under which the limiting edge error has zero mean.
    pub zero_mean_limit: bool,
    pub partial_sums: Vec<PartialSums>,
    /// Set in partial-sum mode: the verdicts are numerical evidence only.
    pub diagnostic_only: bool,
}

/// Decides condition `c > 0, c ∈ ℓ2, δ ∈ ℓ1, c·Q⁻¹(δ) ∈ ℓ1` for a pair of
/// schedules.
pub fn validate_schedules(c: &Schedule, delta: &Schedule, mode: CheckMode) -> Result<AdmissibilityReport, PrivacyError> {
    let c_positive = c.validate().is_ok();
    let delta_in_domain = delta.check_failure_probability().is_ok();
    let (c_in_l2, c_in_l1, delta_in_l1, cross_term_in_l1, partial_sums) = match mode {
        CheckMode::Analytic => {
            let (l2, l1) = analytic_c(c)?;
            let d = analytic_delta(delta)?;
            let cross = analytic_cross(c, delta)?;
            (l2, l1, d, cross, Vec::new())
        }
        CheckMode::PartialSum => {
            c.validate()?;
            delta.check_failure_probability()?;
            let sums = partial_sums(c, delta)?;
            let verdict = |s: &PartialSums| {
                Verdict::new(
                    s.likely_convergent,
                    format!("partial sums {:?} at {:?}, tail ratio {:.4}", s.sums, s.horizons, s.tail_ratio),
                )
            };
            (verdict(&sums[0]), verdict(&sums[1]), verdict(&sums[2]), verdict(&sums[3]), sums)
        }
    };
    let admissible = c_positive && delta_in_domain && c_in_l2.member && delta_in_l1.member && cross_term_in_l1.member;
    Ok(AdmissibilityReport {
        mode,
        c: c.describe(),
        delta: delta.describe(),
        c_positive,
        delta_in_domain,
        zero_mean_limit: c_in_l2.member && !c_in_l1.member,
        c_in_l2,
        c_in_l1,
        delta_in_l1,
        cross_term_in_l1,
        admissible,
        partial_sums,
        diagnostic_only: mode == CheckMode::PartialSum,
    })
}

fn unknown(s: &Schedule) -> PrivacyError {
    PrivacyError::UnknownFamily(s.describe())
}

fn analytic_c(c: &Schedule) -> Result<(Verdict, Verdict), PrivacyError> {
    Ok(match c {
        Schedule::Power { p, .. } => (
            Verdict::new(*p > 0.5, format!("power decay t^-{p}: l2 iff p > 1/2")),
            Verdict::new(*p > 1.0, format!("power decay t^-{p}: l1 iff p > 1")),
        ),
        Schedule::ExpSqrt { .. } => (
            Verdict::new(true, "exp(-sqrt t) decays faster than any power"),
            Verdict::new(true, "exp(-sqrt t) decays faster than any power"),
        ),
        Schedule::Constant { .. } => (
            Verdict::new(false, "positive constant is not square-summable"),
            Verdict::new(false, "positive constant is not summable"),
        ),
        Schedule::Table { .. } => return Err(unknown(c)),
    })
}

fn analytic_delta(delta: &Schedule) -> Result<Verdict, PrivacyError> {
    Ok(match delta {
        Schedule::Power { p, .. } => Verdict::new(*p > 1.0, format!("power decay t^-{p}: l1 iff p > 1")),
        Schedule::ExpSqrt { .. } => Verdict::new(true, "exp(-sqrt t) is summable"),
        Schedule::Constant { .. } => Verdict::new(false, "positive constant is not summable"),
        Schedule::Table { .. } => return Err(unknown(delta)),
    })
}

/// `Q⁻¹(δ_t) ~ √(2 ln(1/δ_t))`: `t^{1/4}` growth for `exp_sqrt`, `√(ln t)` for
/// power laws, bounded for constants.
fn analytic_cross(c: &Schedule, delta: &Schedule) -> Result<Verdict, PrivacyError> {
    if matches!(delta, Schedule::Table { .. }) {
        return Err(unknown(delta));
    }
    Ok(match c {
        Schedule::Table { .. } => return Err(unknown(c)),
        Schedule::Constant { .. } => Verdict::new(false, "constant gain times Q^-1(delta_t) >= const is not summable"),
        Schedule::ExpSqrt { .. } => Verdict::new(true, "exp(-sqrt t) dominates any polylogarithmic or power growth"),
        Schedule::Power { p, .. } => match delta {
            Schedule::ExpSqrt { .. } => Verdict::new(
                *p > 1.25,
                format!("Q^-1(delta_t) grows like t^(1/4), so c(t)Q^-1(delta_t) ~ t^-({p} - 1/4): l1 iff p > 5/4"),
            ),
            Schedule::Power { .. } => Verdict::new(
                *p > 1.0,
                format!("Q^-1(delta_t) grows like sqrt(ln t), so l1 iff p > 1 (p = {p})"),
            ),
            Schedule::Constant { .. } => Verdict::new(*p > 1.0, format!("bounded Q^-1(delta_t): l1 iff p > 1 (p = {p})")),
            Schedule::Table { .. } => unreachable!(),
        },
    })
}

fn partial_sums(c: &Schedule, delta: &Schedule) -> Result<Vec<PartialSums>, PrivacyError> {
    let table_len = |s: &Schedule| match s {
        Schedule::Table { values } => Some(values.len() as u64),
        _ => None,
    };
    let last = PARTIAL_SUM_HORIZONS[PARTIAL_SUM_HORIZONS.len() - 1];
    let end = [table_len(c), table_len(delta)].into_iter().flatten().fold(last, u64::min);
    let horizons: Vec<u64> = PARTIAL_SUM_HORIZONS.iter().map(|&h| h.min(end)).collect();

    let names = ["c^2", "c", "delta", "c*Qinv(delta)"];
    let mut acc = [0.0_f64; 4];
    let mut sums = vec![Vec::new(); 4];
    let mut next = 0;
    for t in 0..end {
        let cv = c.value(t)?;
        let ln_d = delta.ln_value(t)?;
        let terms = [cv * cv, cv, ln_d.exp(), cv * q_tail_inv_ln(ln_d)?];
        for (a, term) in acc.iter_mut().zip(terms) {
            *a += term;
        }
        while next < horizons.len() && horizons[next] == t + 1 {
            for (s, a) in sums.iter_mut().zip(acc) {
                s.push(a);
            }
            next += 1;
        }
    }
    while sums[0].len() < horizons.len() {
        for (s, a) in sums.iter_mut().zip(acc) {
            s.push(a);
        }
    }
    Ok(names
        .iter()
        .zip(sums)
        .map(|(name, s)| {
            let k = s.len();
            let newer = s[k - 1] - s[k - 2];
            let older = s[k - 2] - s[k - 3];
            let tail_ratio = if newer == 0.0 { 0.0 } else { newer / older };
            PartialSums {
                series: name.to_string(),
                horizons: horizons.clone(),
                sums: s,
                tail_ratio,
                likely_convergent: end < last || tail_ratio < TAIL_RATIO_THRESHOLD,
            }
        })
        .collect())
}
