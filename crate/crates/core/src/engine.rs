//! Closed-loop simulation of the noisy formation law and its statistics.
//!
//! Each step every agent receives every neighbour's state through its own
//! noisy link, all receptions using the time-`t` states, then all agents move
//! together: `x_i(t+1) = x_i(t) + c(t) K_{i,t} Σ_j (x̂_ij(t) + d_ij − x_i(t))`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{sample_reception, ChannelParams};
use crate::control::{control_input, ControlError, GainSchedule};
use crate::graph::Graph;
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("no gains for time {0}")]
    GainMissing(u64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("formation offset missing for edge ({0}, {1})")]
    MissingOffset(usize, usize),
    #[error("monte-carlo needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Desired relative states `d_ij` (target of `x_i − x_j`), one per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    offsets: Vec<DVector<f64>>,
}

impl FormationSpec {
    /// `entries` holds `(i, j, d_ij)` in either orientation; `(j, i, d_ji)`
    /// is stored as `d_ij = −d_ji`. Every edge must appear exactly once.
    pub fn new(graph: &Graph, entries: &[(usize, usize, DVector<f64>)]) -> Result<Self, EngineError> {
        let mut offsets: Vec<Option<DVector<f64>>> = vec![None; graph.n_edges()];
        let dim = entries.first().map(|e| e.2.len());
        for (a, b, d) in entries {
            if Some(d.len()) != dim {
                return Err(EngineError::DimensionMismatch("formation offsets differ in length".into()));
            }
            let k = graph
                .edge_index(*a, *b)
                .ok_or_else(|| EngineError::DimensionMismatch(format!("({a}, {b}) is not an edge")))?;
            if offsets[k].is_some() {
                return Err(EngineError::DimensionMismatch(format!("edge ({a}, {b}) given twice")));
            }
            offsets[k] = Some(if a < b { d.clone() } else { -d });
        }
        let offsets = offsets
            .into_iter()
            .enumerate()
            .map(|(k, d)| {
                let (i, j) = graph.edges()[k];
                d.ok_or(EngineError::MissingOffset(i, j))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { offsets })
    }

    /// Offset of canonical edge `l_k`.
    pub fn edge_offset(&self, edge: usize) -> &DVector<f64> {
        &self.offsets[edge]
    }

    /// `d_ij` for any ordered pair of adjacent agents.
    pub fn offset(&self, graph: &Graph, i: usize, j: usize) -> Option<DVector<f64>> {
        let k = graph.edge_index(i, j)?;
        Some(if i < j { self.offsets[k].clone() } else { -&self.offsets[k] })
    }

    pub fn stacked(&self) -> DVector<f64> {
        let dim = self.offsets.first().map_or(0, DVector::len);
        DVector::from_iterator(self.offsets.len() * dim, self.offsets.iter().flat_map(|d| d.iter().copied()))
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: u64,
    pub x: Vec<DVector<f64>>,
}

/// Where reception noise comes from.
#[derive(Debug, Clone, Copy)]
pub enum NoiseMode<'a> {
    /// The state-dependent channel, substreams keyed by `(run_seed, t, link)`.
    Channel { run_seed: u64 },
    /// Noise-free receptions.
    Zero,
    /// One shared vector `η_{l_k}` per edge: the lower endpoint receives
    /// `x_j + η`, the higher endpoint `x_i − η`. Reproduces the stacked edge
    /// recursion `ξ(t+1) = ξ(t) − c Ψ_t (ξ(t) − η)`.
    EdgeShared(&'a [DVector<f64>]),
}

/// Result of one synchronous update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: SimState,
    /// Smallest reception variance across all directed links at this step.
    pub min_variance: f64,
}

/// One synchronous step of every agent.
pub fn step(
    state: &SimState,
    gains: &GainSchedule,
    c_t: f64,
    graph: &Graph,
    formation: &FormationSpec,
    channel: &ChannelParams,
    noise: NoiseMode<'_>,
) -> Result<StepOutcome, EngineError> {
    let t = state.t;
    let at_t = gains.gains_at(t as usize).map_err(|_| EngineError::GainMissing(t))?;
    if state.x.len() != graph.n_agents() || at_t.len() != graph.n_agents() {
        return Err(EngineError::DimensionMismatch("agent count".into()));
    }
    let mut min_variance = f64::INFINITY;
    let mut next = Vec::with_capacity(state.x.len());
    for (i, x_i) in state.x.iter().enumerate() {
        let mut receptions = BTreeMap::new();
        let mut offsets = BTreeMap::new();
        for &j in graph.neighbors(i) {
            let edge = graph.edge_index(i, j).expect("neighbour shares an edge");
            let x_j = &state.x[j];
            let received = match noise {
                NoiseMode::Channel { run_seed } => {
                    let link = 2 * edge as u64 + u64::from(i > j);
                    let mut stream = rng::link_rng(run_seed, t, link);
                    let rec = sample_reception(&mut stream, channel, edge, i, x_j, x_i);
                    min_variance = min_variance.min(rec.variance);
                    rec.value
                }
                NoiseMode::Zero => {
                    min_variance = min_variance.min(channel.variance(edge, i, x_i, x_j));
                    x_j.clone()
                }
                NoiseMode::EdgeShared(eta) => {
                    min_variance = min_variance.min(channel.variance(edge, i, x_i, x_j));
                    if i < j {
                        x_j + &eta[edge]
                    } else {
                        x_j - &eta[edge]
                    }
                }
            };
            receptions.insert(j, received);
            offsets.insert(j, formation.offset(graph, i, j).expect("edge has an offset"));
        }
        let u = if receptions.is_empty() {
            DVector::zeros(x_i.len())
        } else {
            control_input(&at_t[i], c_t, &receptions, &offsets, x_i)?
        };
        next.push(x_i + u);
    }
    Ok(StepOutcome {
        state: SimState { t: t + 1, x: next },
        min_variance,
    })
}

/// Stacked `ξ = (B ⊗ I_n) x − d` in edge order.
pub fn edge_errors(x: &[DVector<f64>], graph: &Graph, formation: &FormationSpec) -> Result<DVector<f64>, EngineError> {
    if x.len() != graph.n_agents() {
        return Err(EngineError::DimensionMismatch(format!(
            "{} states for {} agents",
            x.len(),
            graph.n_agents()
        )));
    }
    let n = x.first().map_or(0, DVector::len);
    let mut xi = DVector::zeros(n * graph.n_edges());
    for (k, &(i, j)) in graph.edges().iter().enumerate() {
        let d = formation.edge_offset(k);
        if d.len() != n || x[i].len() != n || x[j].len() != n {
            return Err(EngineError::DimensionMismatch("state and offset dimensions differ".into()));
        }
        xi.rows_mut(k * n, n).copy_from(&(&x[i] - &x[j] - d));
    }
    Ok(xi)
}

/// `Ψ = (B ⊗ I_n) diag(K_1, …, K_N) (Bᵀ ⊗ I_n)`.
pub fn psi_matrix(graph: &Graph, gains: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = gains.first().map_or(0, DMatrix::nrows);
    let b = graph.incidence();
    let ne = graph.n_edges();
    let mut psi = DMatrix::zeros(ne * n, ne * n);
    for e in 0..ne {
        for f in 0..ne {
            let mut block = DMatrix::zeros(n, n);
            for (i, k) in gains.iter().enumerate() {
                let w = f64::from(b[(e, i)]) * f64::from(b[(f, i)]);
                if w != 0.0 {
                    block += k * w;
                }
            }
            psi.view_mut((e * n, f * n), (n, n)).copy_from(&block);
        }
    }
    psi
}

/// Largest `‖ξ(t+1) − ξ(t)‖` for `t` in `t1..=t2`.
pub fn max_increment(xi: &[DVector<f64>], t1: usize, t2: usize) -> f64 {
    (t1..=t2)
        .filter(|&t| t + 1 < xi.len())
        .map(|t| (&xi[t + 1] - &xi[t]).norm())
        .fold(0.0, f64::max)
}

/// The static pieces of one experiment.
#[derive(Debug, Clone)]
pub struct Network {
    pub graph: Graph,
    pub formation: FormationSpec,
    pub channel: ChannelParams,
    pub gains: GainSchedule,
    /// `c(t)` for `t` in `0..gains.len()`.
    pub c_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub states: Vec<Vec<DVector<f64>>>,
    pub xi: Vec<DVector<f64>>,
    pub xi_sq: Vec<f64>,
    /// Smallest reception variance at each step `0..horizon`.
    pub min_variance: Vec<f64>,
}

impl TrajectoryLog {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }
}

impl Network {
    fn check_horizon(&self, horizon: usize) -> Result<(), EngineError> {
        if horizon > self.gains.len() || horizon > self.c_values.len() {
            return Err(EngineError::GainMissing(self.gains.len().min(self.c_values.len()) as u64));
        }
        Ok(())
    }

    /// `horizon` steps from `x0`; deterministic in `(x0, noise)`.
    pub fn run(&self, x0: &[DVector<f64>], horizon: usize, noise: NoiseMode<'_>) -> Result<TrajectoryLog, EngineError> {
        self.check_horizon(horizon)?;
        let mut state = SimState { t: 0, x: x0.to_vec() };
        let first = edge_errors(&state.x, &self.graph, &self.formation)?;
        let mut log = TrajectoryLog {
            states: Vec::with_capacity(horizon + 1),
            xi_sq: vec![first.norm_squared()],
            xi: vec![first],
            min_variance: Vec::with_capacity(horizon),
        };
        log.states.push(state.x.clone());
        for t in 0..horizon {
            let out = step(
                &state,
                &self.gains,
                self.c_values[t],
                &self.graph,
                &self.formation,
                &self.channel,
                noise,
            )?;
            state = out.state;
            let xi = edge_errors(&state.x, &self.graph, &self.formation)?;
            log.xi_sq.push(xi.norm_squared());
            log.xi.push(xi);
            log.min_variance.push(out.min_variance);
            log.states.push(state.x.clone());
        }
        Ok(log)
    }

    /// Independent runs with seeds derived from `base_seed`, aggregated in
    /// run order so the result does not depend on `threads`.
    pub fn monte_carlo(&self, x0: &[DVector<f64>], options: &MonteCarloOptions) -> Result<MCStats, EngineError> {
        if options.runs < 2 {
            return Err(EngineError::TooFewRuns(options.runs));
        }
        self.check_horizon(options.horizon)?;
        let horizon = options.horizon;
        let tail = options.tail_window.unwrap_or((horizon.saturating_sub(10), horizon.saturating_sub(1)));
        let one = |r: usize| -> Result<RunSummary, EngineError> {
            let noise = if options.zero_noise {
                NoiseMode::Zero
            } else {
                NoiseMode::Channel {
                    run_seed: rng::run_seed(options.base_seed, r as u64),
                }
            };
            let log = self.run(x0, horizon, noise)?;
            Ok(RunSummary {
                tail_increment: max_increment(&log.xi, tail.0, tail.1),
                xi0_norm: log.xi[0].norm(),
                final_xi: log.xi[horizon].clone(),
                xi_sq: log.xi_sq,
            })
        };
        let summaries: Vec<RunSummary> = match options.threads {
            Some(1) => (0..options.runs).map(one).collect::<Result<_, _>>()?,
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("thread pool")
                .install(|| (0..options.runs).into_par_iter().map(one).collect::<Result<_, _>>())?,
            None => (0..options.runs).into_par_iter().map(one).collect::<Result<_, _>>()?,
        };
        Ok(MCStats::aggregate(summaries, tail))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloOptions {
    pub runs: usize,
    pub horizon: usize,
    pub base_seed: u64,
    pub zero_noise: bool,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Steps `t1..=t2` whose increments feed the path-wise Cauchy diagnostic;
    /// defaults to the last ten steps.
    pub tail_window: Option<(usize, usize)>,
}

struct RunSummary {
    xi_sq: Vec<f64>,
    final_xi: DVector<f64>,
    tail_increment: f64,
    xi0_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCStats {
    pub runs: usize,
    pub horizon: usize,
    /// `(1/runs) Σ ‖ξ(t)‖²` for `t = 0..=horizon`.
    pub mean_sq: Vec<f64>,
    pub mean_xi_final: Vec<f64>,
    /// Unbiased componentwise sample variance of `ξ(horizon)`.
    pub var_xi_final: Vec<f64>,
    /// Standard error of `mean_xi_final`.
    pub stderr_xi_final: Vec<f64>,
    pub final_xi: Vec<Vec<f64>>,
    pub tail_window: (usize, usize),
    /// Per run, `max_{t in window} ‖ξ(t+1) − ξ(t)‖`.
    pub tail_increment: Vec<f64>,
    /// Per run `‖ξ(0)‖`.
    pub xi0_norm: Vec<f64>,
}

impl MCStats {
    fn aggregate(summaries: Vec<RunSummary>, tail_window: (usize, usize)) -> Self {
        let runs = summaries.len();
        let rf = runs as f64;
        let len = summaries[0].xi_sq.len();
        let dim = summaries[0].final_xi.len();
        let mut mean_sq = vec![0.0; len];
        let mut mean = vec![0.0; dim];
        for s in &summaries {
            for (m, v) in mean_sq.iter_mut().zip(&s.xi_sq) {
                *m += v;
            }
            for (m, v) in mean.iter_mut().zip(s.final_xi.iter()) {
                *m += v;
            }
        }
        mean_sq.iter_mut().for_each(|m| *m /= rf);
        mean.iter_mut().for_each(|m| *m /= rf);
        let mut var = vec![0.0; dim];
        for s in &summaries {
            for ((v, x), m) in var.iter_mut().zip(s.final_xi.iter()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        var.iter_mut().for_each(|v| *v /= rf - 1.0);
        Self {
            runs,
            horizon: len - 1,
            mean_sq,
            stderr_xi_final: var.iter().map(|v| (v / rf).sqrt()).collect(),
            mean_xi_final: mean,
            var_xi_final: var,
            tail_window,
            tail_increment: summaries.iter().map(|s| s.tail_increment).collect(),
            xi0_norm: summaries.iter().map(|s| s.xi0_norm).collect(),
            final_xi: summaries.into_iter().map(|s| s.final_xi.iter().copied().collect()).collect(),
        }
    }
}
