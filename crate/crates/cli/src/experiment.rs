//! The five subcommands as library functions writing their artifacts.

use std::path::{Path, PathBuf};

use noisy_formation::control::GainSchedule;
use noisy_formation::engine::{MCStats, MonteCarloOptions, Network, NoiseMode, TrajectoryLog};
use noisy_formation::privacy::{
    compose, validate_schedules, AdmissibilityReport, CheckMode, LedgerOptions, PrivacyLedger, StepRecord, VarianceFloor,
};
use noisy_formation::Error as CoreError;
use serde::Serialize;
use thiserror::Error;

use crate::config::SimConfig;
use crate::export::{self, export_plot_data, ExportError, PlotSource};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("{0}")]
    InvalidRequest(String),
}

fn core<T, E: Into<CoreError>>(r: Result<T, E>) -> Result<T, RunError> {
    r.map_err(|e| RunError::Core(e.into()))
}

/// Gains and step sizes for `t` in `0..len`.
pub fn build_network(cfg: &SimConfig, len: usize) -> Result<Network, RunError> {
    let c_values = core((0..len as u64).map(|t| cfg.c.value(t)).collect::<Result<Vec<_>, _>>())?;
    let gains = core(GainSchedule::compute(&cfg.control, &cfg.graph, &c_values))?;
    Ok(Network {
        graph: cfg.graph.clone(),
        formation: cfg.formation.clone(),
        channel: cfg.channel.clone(),
        gains,
        c_values,
    })
}

fn noise(cfg: &SimConfig, seed: u64) -> NoiseMode<'static> {
    if cfg.flags.zero_noise {
        NoiseMode::Zero
    } else {
        NoiseMode::Channel { run_seed: seed }
    }
}

/// One trajectory from `cfg.seed` over `cfg.horizon` steps.
pub fn run_trajectory(cfg: &SimConfig) -> Result<(Network, TrajectoryLog), RunError> {
    let net = build_network(cfg, cfg.horizon)?;
    let log = core(net.run(&cfg.x0, cfg.horizon, noise(cfg, cfg.seed)))?;
    Ok((net, log))
}

/// Writes `trajectory.csv`, `edge_errors.csv`, `fig1a.csv` and `fig2.csv`.
pub fn simulate(cfg: &SimConfig, out: &Path) -> Result<(TrajectoryLog, Vec<PathBuf>), RunError> {
    let (net, log) = run_trajectory(cfg)?;
    export::ensure_dir(out)?;
    let trajectory = out.join("trajectory.csv");
    let errors = out.join("edge_errors.csv");
    export::write_trajectory(&trajectory, &log)?;
    export::write_edge_errors(&errors, &log, &net.graph)?;
    let source = || PlotSource::Trajectory { log: &log, graph: &net.graph };
    let fig1a = export_plot_data(source(), "fig1a", out)?;
    let fig2 = export_plot_data(source(), "fig2", out)?;
    Ok((log, vec![trajectory, errors, fig1a, fig2]))
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloReport {
    pub base_seed: u64,
    pub zero_noise: bool,
    #[serde(flatten)]
    pub stats: MCStats,
}

pub fn monte_carlo_stats(cfg: &SimConfig, threads: Option<usize>) -> Result<MonteCarloReport, RunError> {
    let net = build_network(cfg, cfg.horizon)?;
    let options = MonteCarloOptions {
        runs: cfg.runs,
        horizon: cfg.horizon,
        base_seed: cfg.seed,
        zero_noise: cfg.flags.zero_noise,
        threads,
        tail_window: None,
    };
    let stats = core(net.monte_carlo(&cfg.x0, &options))?;
    Ok(MonteCarloReport {
        base_seed: cfg.seed,
        zero_noise: cfg.flags.zero_noise,
        stats,
    })
}

/// Writes `stats.json`.
pub fn monte_carlo(cfg: &SimConfig, threads: Option<usize>, out: &Path) -> Result<(MonteCarloReport, PathBuf), RunError> {
    let report = monte_carlo_stats(cfg, threads)?;
    export::ensure_dir(out)?;
    let path = out.join("stats.json");
    export::write_text(&path, &to_json(&report))?;
    Ok((report, path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Totals {
    pub eps: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub window: (u64, u64),
    /// `"per-time"` or `"global"`: which `ρ` the headline totals use.
    pub rho_mode: &'static str,
    /// `"worst-case"` (receiver floor) or `"realized"` (trajectory dependent).
    pub variance_floor: &'static str,
    pub r_floor: f64,
    pub eps_total: f64,
    pub delta_total: f64,
    /// Sums over `[0, to]` and `[1, to]`, whatever the requested window.
    pub from_0: Totals,
    pub from_1: Option<Totals>,
    pub eps_total_per_time_rho: f64,
    pub eps_total_global_rho: f64,
    pub per_step: Vec<StepRecord>,
}

/// Per-step ledger over `[0, to]`; totals over `[from, to]`.
pub fn privacy_audit(cfg: &SimConfig, from: u64, to: u64) -> Result<(AuditReport, PrivacyLedger), RunError> {
    if from > to {
        return Err(RunError::InvalidRequest(format!("empty audit window [{from}, {to}]")));
    }
    let len = to as usize + 1;
    let net = build_network(cfg, len)?;
    let r_floor = cfg.channel.min_receiver_floor();
    let floor = if cfg.flags.realized_audit {
        let log = core(net.run(&cfg.x0, len, noise(cfg, cfg.seed)))?;
        VarianceFloor::Realized(log.min_variance)
    } else {
        VarianceFloor::Worst(r_floor)
    };
    let ledger_with = |global_rho| {
        core(PrivacyLedger::build(
            &cfg.c,
            &cfg.delta,
            net.gains.rho_series(),
            0,
            to,
            &LedgerOptions {
                theta: cfg.theta(),
                global_rho,
                floor: floor.clone(),
            },
        ))
    };
    let per_time = ledger_with(false)?;
    let global = ledger_with(true)?;
    let totals = |l: &PrivacyLedger, a: u64| -> Result<Totals, RunError> {
        let (eps, delta) = core(compose(l, a, to))?;
        Ok(Totals { eps, delta })
    };
    let chosen = if cfg.flags.global_rho { global.clone() } else { per_time.clone() };
    let window = totals(&chosen, from)?;
    let report = AuditReport {
        window: (from, to),
        rho_mode: if cfg.flags.global_rho { "global" } else { "per-time" },
        variance_floor: if cfg.flags.realized_audit { "realized" } else { "worst-case" },
        r_floor,
        eps_total: window.eps,
        delta_total: window.delta,
        from_0: totals(&chosen, 0)?,
        from_1: if to >= 1 { Some(totals(&chosen, 1)?) } else { None },
        eps_total_per_time_rho: totals(&per_time, from)?.eps,
        eps_total_global_rho: totals(&global, from)?.eps,
        per_step: chosen.records[from as usize..].to_vec(),
    };
    let window_ledger = PrivacyLedger {
        window: (from, to),
        records: report.per_step.clone(),
        ..chosen
    };
    Ok((report, window_ledger))
}

/// Writes `ledger.json`, `ledger.csv` and `fig1b.csv`.
pub fn privacy_audit_to(cfg: &SimConfig, from: u64, to: u64, out: &Path) -> Result<(AuditReport, Vec<PathBuf>), RunError> {
    let (report, ledger) = privacy_audit(cfg, from, to)?;
    export::ensure_dir(out)?;
    let json = out.join("ledger.json");
    export::write_text(&json, &to_json(&report))?;
    let csv = out.join("ledger.csv");
    let cumulative = ledger.cumulative_eps();
    let rows = report.per_step.iter().zip(&cumulative).map(|(r, (_, cum))| {
        vec![
            r.t.to_string(),
            r.c.to_string(),
            r.rho_k.to_string(),
            r.sensitivity.to_string(),
            r.variance_floor.to_string(),
            r.eps.to_string(),
            r.delta.to_string(),
            cum.to_string(),
        ]
    });
    export::write_rows(
        &csv,
        &["t", "c", "rho_k", "delta_sens", "variance_floor", "eps", "delta", "cumulative_eps"],
        rows,
    )?;
    let fig = export_plot_data(PlotSource::Ledger(&ledger), "fig1b", out)?;
    Ok((report, vec![json, csv, fig]))
}

/// Writes `admissibility.json`.
pub fn validate_schedule(cfg: &SimConfig, mode: CheckMode, out: &Path) -> Result<(AdmissibilityReport, PathBuf), RunError> {
    let report = core(validate_schedules(&cfg.c, &cfg.delta, mode))?;
    export::ensure_dir(out)?;
    let path = out.join("admissibility.json");
    export::write_text(&path, &to_json(&report))?;
    Ok((report, path))
}

/// Writes `gains.csv` (every entry of every `K_{i,t}`) and `rho.csv`.
pub fn gains(cfg: &SimConfig, out: &Path) -> Result<(GainSchedule, Vec<PathBuf>), RunError> {
    let net = build_network(cfg, cfg.horizon.max(1))?;
    export::ensure_dir(out)?;
    let gains_path = out.join("gains.csv");
    let mut rows = Vec::new();
    for t in 0..net.gains.len() {
        for (i, k) in core(net.gains.gains_at(t))?.iter().enumerate() {
            for r in 0..k.nrows() {
                for c in 0..k.ncols() {
                    rows.push(vec![
                        t.to_string(),
                        (i + 1).to_string(),
                        (r + 1).to_string(),
                        (c + 1).to_string(),
                        k[(r, c)].to_string(),
                    ]);
                }
            }
        }
    }
    export::write_rows(&gains_path, &["t", "agent", "row", "col", "k"], rows)?;
    let rho_path = out.join("rho.csv");
    let rows = net
        .gains
        .rho_series()
        .iter()
        .zip(&net.c_values)
        .enumerate()
        .map(|(t, (rho, c))| vec![t.to_string(), c.to_string(), rho.to_string()]);
    export::write_rows(&rho_path, &["t", "c", "rho_k"], rows)?;
    Ok((net.gains, vec![gains_path, rho_path]))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}
