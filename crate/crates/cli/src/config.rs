//! JSON experiment configuration.
//!
//! Agents are numbered from 1 in the file and from 0 in memory. Defaults:
//! `alpha = 1`, `runs = 1`, `seed = 0`, `horizon = 100`, `output_dir = "out"`,
//! every flag off.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use noisy_formation::channel::ChannelParams;
use noisy_formation::control::{is_spd, ControlConfig};
use noisy_formation::engine::FormationSpec;
use noisy_formation::graph::{Graph, GraphError};
use noisy_formation::privacy::Schedule;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {reason}")]
    Validation { path: String, reason: String },
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        path: path.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub graph: RawGraph,
    pub initial_states: Vec<Vec<f64>>,
    pub formation: RawFormation,
    pub channel: RawChannel,
    pub control: RawControl,
    pub schedules: RawSchedules,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub flags: Flags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGraph {
    pub n_agents: usize,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFormation {
    pub theta: f64,
    pub d: Vec<RawOffset>,
}

/// Desired `x_i − x_j` for `edge = [i, j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOffset {
    pub edge: [usize; 2],
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChannel {
    pub sigma: f64,
    pub r: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<RawLink>,
}

/// Overrides `sigma` on one edge with `k1 / k2²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLink {
    pub edge: [usize; 2],
    pub k1: f64,
    pub k2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawControl {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<RawAgentWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAgentWeights {
    pub agent: usize,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSchedules {
    pub c: Schedule,
    pub delta: Schedule,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Flags {
    pub zero_noise: bool,
    pub realized_audit: bool,
    pub global_rho: bool,
}

fn default_horizon() -> usize {
    100
}

fn default_runs() -> usize {
    1
}

fn default_output_dir() -> String {
    "out".into()
}

fn default_alpha() -> f64 {
    1.0
}

/// A cross-validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    raw: RawConfig,
    pub graph: Graph,
    pub x0: Vec<DVector<f64>>,
    pub formation: FormationSpec,
    pub channel: ChannelParams,
    pub control: ControlConfig,
    pub c: Schedule,
    pub delta: Schedule,
    pub horizon: usize,
    pub seed: u64,
    pub runs: usize,
    pub output_dir: String,
    pub flags: Flags,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    SimConfig::from_raw(raw)
}

fn matrix(path: &str, rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>, ConfigError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(invalid(path, format!("expected a {n}x{n} matrix")));
    }
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    if !is_spd(&m) {
        return Err(invalid(path, "not symmetric positive definite"));
    }
    Ok(m)
}

fn positive(path: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(path, format!("must be positive and finite, got {v}")))
    }
}

impl SimConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let n_agents = raw.graph.n_agents;
        let to_zero = |path: String, e: [usize; 2]| -> Result<(usize, usize), ConfigError> {
            if e.iter().any(|&v| v == 0 || v > n_agents) {
                return Err(invalid(path, format!("agent index outside 1..={n_agents}")));
            }
            Ok((e[0] - 1, e[1] - 1))
        };

        let edges = raw
            .graph
            .edges
            .iter()
            .enumerate()
            .map(|(k, e)| to_zero(format!("graph.edges[{k}]"), *e))
            .collect::<Result<Vec<_>, _>>()?;
        let graph = Graph::new(n_agents, &edges).map_err(|e| {
            let reason = match &e {
                GraphError::NotATree(_) => format!("NotATree: {e}"),
                _ => e.to_string(),
            };
            invalid("graph", reason)
        })?;

        if raw.initial_states.len() != n_agents {
            return Err(invalid("initial_states", format!("expected {n_agents} states")));
        }
        let dim = raw.initial_states[0].len();
        if dim == 0 {
            return Err(invalid("initial_states[0]", "empty state"));
        }
        let mut x0 = Vec::with_capacity(n_agents);
        for (i, s) in raw.initial_states.iter().enumerate() {
            if s.len() != dim || s.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("initial_states[{i}]"), format!("expected {dim} finite numbers")));
            }
            x0.push(DVector::from_column_slice(s));
        }

        let theta = raw.formation.theta;
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(invalid("formation.theta", "must be non-negative"));
        }
        let mut offsets = Vec::with_capacity(raw.formation.d.len());
        for (k, d) in raw.formation.d.iter().enumerate() {
            let path = format!("formation.d[{k}]");
            let (a, b) = to_zero(format!("{path}.edge"), d.edge)?;
            if graph.edge_index(a, b).is_none() {
                return Err(invalid(format!("{path}.edge"), "not an edge of the graph"));
            }
            if d.value.len() != dim || d.value.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("{path}.value"), format!("expected {dim} finite numbers")));
            }
            offsets.push((a, b, DVector::from_column_slice(&d.value)));
        }
        let formation = FormationSpec::new(&graph, &offsets).map_err(|e| invalid("formation.d", e.to_string()))?;

        let ch = &raw.channel;
        positive("channel.sigma", ch.sigma)?;
        if ch.r.len() != n_agents {
            return Err(invalid("channel.r", format!("expected {n_agents} receiver floors")));
        }
        for (i, &r) in ch.r.iter().enumerate() {
            positive(&format!("channel.r[{i}]"), r)?;
        }
        positive("channel.alpha", ch.alpha)?;
        let mut channel = ChannelParams::uniform(graph.n_edges(), ch.sigma, ch.r.clone(), ch.alpha)
            .map_err(|e| invalid("channel", e.to_string()))?;
        for (k, link) in ch.links.iter().enumerate() {
            let path = format!("channel.links[{k}]");
            let (a, b) = to_zero(format!("{path}.edge"), link.edge)?;
            let edge = graph
                .edge_index(a, b)
                .ok_or_else(|| invalid(format!("{path}.edge"), "not an edge of the graph"))?;
            channel
                .set_link_constants(edge, link.k1, link.k2)
                .map_err(|e| invalid(&path, e.to_string()))?;
        }

        let ctl = &raw.control;
        let q = matrix("control.Q", &ctl.q, dim)?;
        let r = matrix("control.R", &ctl.r, dim)?;
        let mut qs = vec![q; n_agents];
        let mut rs = vec![r; n_agents];
        for (k, w) in ctl.agents.iter().enumerate() {
            let path = format!("control.agents[{k}]");
            if w.agent == 0 || w.agent > n_agents {
                return Err(invalid(format!("{path}.agent"), format!("agent index outside 1..={n_agents}")));
            }
            if let Some(m) = &w.q {
                qs[w.agent - 1] = matrix(&format!("{path}.Q"), m, dim)?;
            }
            if let Some(m) = &w.r {
                rs[w.agent - 1] = matrix(&format!("{path}.R"), m, dim)?;
            }
        }
        let control = ControlConfig::new(qs, rs, ctl.horizon, theta).map_err(|e| invalid("control", e.to_string()))?;

        let s = &raw.schedules;
        s.c.validate().map_err(|e| invalid("schedules.c", e.to_string()))?;
        s.delta
            .check_failure_probability()
            .map_err(|e| invalid("schedules.delta", format!("{e}; failure probabilities must lie in (0, 1/2)")))?;

        if raw.runs == 0 {
            return Err(invalid("runs", "must be at least 1"));
        }

        Ok(Self {
            graph,
            x0,
            formation,
            channel,
            control,
            c: s.c.clone(),
            delta: s.delta.clone(),
            horizon: raw.horizon,
            seed: raw.seed,
            runs: raw.runs,
            output_dir: raw.output_dir.clone(),
            flags: raw.flags,
            raw,
        })
    }

    /// The file form, with defaults filled in.
    pub fn raw(&self) -> &RawConfig {
        &self.raw
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.raw).expect("config serializes")
    }

    pub fn theta(&self) -> f64 {
        self.control.theta()
    }
}
