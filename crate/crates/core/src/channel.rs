//! Relative-state-dependent AWGN reception.
//!
//! Agent `i` receives `x̂_ij = x_j + η_ij` with
//! `η_ij ~ N(0, (σ_ij ‖x_i − x_j‖^(2α) + r_i) I)` and `σ_ij = k_ij,1 / k_ij,2²`.
//! Channel and receiver noise are folded into a single Gaussian per directed
//! reception.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("path-loss exponent must be >= 1, got {0}")]
    InvalidAlpha(f64),
    #[error("expected {expected} entries for {name}, got {got}")]
    DimensionMismatch {
        name: &'static str,
        expected: usize,
        got: usize,
    },
}

fn positive(name: &'static str, value: f64) -> Result<f64, ChannelError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ChannelError::NonPositiveParameter { name, value })
    }
}

/// `σ = k1 / k2²`.
pub fn derive_sigma(k1: f64, k2: f64) -> Result<f64, ChannelError> {
    Ok(positive("k1", k1)? / positive("k2", k2)?.powi(2))
}

/// Scalar variance `σ ‖x_i − x_j‖^(2α) + r` of one reception.
pub fn link_variance(sigma: f64, r: f64, alpha: f64, x_i: &DVector<f64>, x_j: &DVector<f64>) -> f64 {
    let dist_sq = (x_i - x_j).norm_squared();
    let path = if alpha == 1.0 { dist_sq } else { dist_sq.powf(alpha) };
    sigma * path + r
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    sigma: Vec<f64>,
    r: Vec<f64>,
    alpha: f64,
}

impl ChannelParams {
    /// Same `σ` on every edge; one receiver floor per agent.
    pub fn uniform(n_edges: usize, sigma: f64, r: Vec<f64>, alpha: f64) -> Result<Self, ChannelError> {
        Self::new(vec![sigma; n_edges], r, alpha)
    }

    pub fn new(sigma: Vec<f64>, r: Vec<f64>, alpha: f64) -> Result<Self, ChannelError> {
        for &s in &sigma {
            positive("sigma", s)?;
        }
        for &ri in &r {
            positive("r", ri)?;
        }
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(ChannelError::InvalidAlpha(alpha));
        }
        Ok(Self { sigma, r, alpha })
    }

    /// Overrides `σ` on one edge from the physical constants `k1`, `k2`.
    pub fn set_link_constants(&mut self, edge: usize, k1: f64, k2: f64) -> Result<(), ChannelError> {
        let n = self.sigma.len();
        let slot = self.sigma.get_mut(edge).ok_or(ChannelError::DimensionMismatch {
            name: "edge",
            expected: n,
            got: edge + 1,
        })?;
        *slot = derive_sigma(k1, k2)?;
        Ok(())
    }

    pub fn sigma(&self, edge: usize) -> f64 {
        self.sigma[edge]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    pub fn receiver_floor(&self, agent: usize) -> f64 {
        self.r[agent]
    }

    pub fn receiver_floors(&self) -> &[f64] {
        &self.r
    }

    /// `r̲ = min_i r_i`.
    pub fn min_receiver_floor(&self) -> f64 {
        self.r.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_edges(&self) -> usize {
        self.sigma.len()
    }

    pub fn n_agents(&self) -> usize {
        self.r.len()
    }

    /// Variance of the reception at `receiver` over `edge`.
    pub fn variance(&self, edge: usize, receiver: usize, x_receiver: &DVector<f64>, x_sender: &DVector<f64>) -> f64 {
        link_variance(self.sigma[edge], self.r[receiver], self.alpha, x_receiver, x_sender)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reception {
    pub value: DVector<f64>,
    pub noise: DVector<f64>,
    pub variance: f64,
}

/// Draws one reception at `receiver` of the sender's state over `edge`.
///
/// `rng` should be the substream dedicated to this directed link and time.
pub fn sample_reception<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ChannelParams,
    edge: usize,
    receiver: usize,
    x_sender: &DVector<f64>,
    x_receiver: &DVector<f64>,
) -> Reception {
    let variance = params.variance(edge, receiver, x_receiver, x_sender);
    let sd = variance.sqrt();
    let noise = DVector::from_fn(x_sender.len(), |_, _| sd * rng.sample::<f64, _>(StandardNormal));
    Reception {
        value: x_sender + &noise,
        noise,
        variance,
    }
}
