//! CSV writers for trajectories, ledgers and plot data.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use noisy_formation::engine::TrajectoryLog;
use noisy_formation::graph::Graph;
use noisy_formation::privacy::PrivacyLedger;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("unknown figure `{0}` (expected fig1a, fig1b or fig2)")]
    UnknownFigure(String),
    #[error("figure {0} needs {1}")]
    WrongSource(&'static str, &'static str),
    #[error("cannot write {path}: {reason}")]
    Io { path: String, reason: String },
}

fn io_err(path: &Path, e: impl ToString) -> ExportError {
    ExportError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Relative states `x_i − x_j` per edge and coordinate.
    RelativeStates,
    /// Cumulative `ε` over time.
    CumulativeEpsilon,
    /// Agent paths.
    Paths,
}

impl Figure {
    pub fn id(self) -> &'static str {
        match self {
            Figure::RelativeStates => "fig1a",
            Figure::CumulativeEpsilon => "fig1b",
            Figure::Paths => "fig2",
        }
    }
}

impl FromStr for Figure {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig1a" => Ok(Figure::RelativeStates),
            "fig1b" => Ok(Figure::CumulativeEpsilon),
            "fig2" => Ok(Figure::Paths),
            other => Err(ExportError::UnknownFigure(other.to_string())),
        }
    }
}

pub enum PlotSource<'a> {
    Trajectory { log: &'a TrajectoryLog, graph: &'a Graph },
    Ledger(&'a PrivacyLedger),
}

pub(crate) fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), ExportError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), ExportError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn edge_label(graph: &Graph, k: usize) -> String {
    let (i, j) = graph.edges()[k];
    format!("{}-{}", i + 1, j + 1)
}

fn coordinate_names(dim: usize) -> Vec<String> {
    if dim <= 3 {
        ["x", "y", "z"][..dim].iter().map(|s| s.to_string()).collect()
    } else {
        (1..=dim).map(|k| format!("s{k}")).collect()
    }
}

/// `t, agent, dim, x` with 1-based agents and coordinates.
pub fn write_trajectory(path: &Path, log: &TrajectoryLog) -> Result<(), ExportError> {
    let rows = log.states.iter().enumerate().flat_map(|(t, xs)| {
        xs.iter().enumerate().flat_map(move |(i, x)| {
            x.iter()
                .enumerate()
                .map(move |(d, v)| vec![t.to_string(), (i + 1).to_string(), (d + 1).to_string(), v.to_string()])
        })
    });
    write_rows(path, &["t", "agent", "dim", "x"], rows)
}

/// `t, edge, dim, xi` with edges labelled `i-j`.
pub fn write_edge_errors(path: &Path, log: &TrajectoryLog, graph: &Graph) -> Result<(), ExportError> {
    let n_edges = graph.n_edges();
    let mut rows = Vec::new();
    for (t, xi) in log.xi.iter().enumerate() {
        let dim = xi.len().checked_div(n_edges).unwrap_or(0);
        for k in 0..n_edges {
            for d in 0..dim {
                rows.push(vec![t.to_string(), edge_label(graph, k), (d + 1).to_string(), xi[k * dim + d].to_string()]);
            }
        }
    }
    write_rows(path, &["t", "edge", "dim", "xi"], rows)
}

/// Writes `<figure id>.csv` into `dir` and returns its path.
pub fn export_plot_data(source: PlotSource<'_>, figure: &str, dir: &Path) -> Result<PathBuf, ExportError> {
    let figure: Figure = figure.parse()?;
    let path = dir.join(format!("{}.csv", figure.id()));
    match (figure, source) {
        (Figure::RelativeStates, PlotSource::Trajectory { log, graph }) => {
            let mut rows = Vec::new();
            for (t, xs) in log.states.iter().enumerate() {
                for (k, &(i, j)) in graph.edges().iter().enumerate() {
                    for (d, v) in (&xs[i] - &xs[j]).iter().enumerate() {
                        rows.push(vec![t.to_string(), edge_label(graph, k), (d + 1).to_string(), v.to_string()]);
                    }
                }
            }
            write_rows(&path, &["t", "edge", "dim", "relative_state"], rows)?;
        }
        (Figure::Paths, PlotSource::Trajectory { log, .. }) => {
            let dim = log.states[0].first().map_or(0, |x| x.len());
            let names = coordinate_names(dim);
            let mut header = vec!["agent", "t"];
            header.extend(names.iter().map(String::as_str));
            let n_agents = log.states[0].len();
            let rows = (0..n_agents).flat_map(|i| {
                log.states.iter().enumerate().map(move |(t, xs)| {
                    let mut row = vec![(i + 1).to_string(), t.to_string()];
                    row.extend(xs[i].iter().map(|v| v.to_string()));
                    row
                })
            });
            write_rows(&path, &header, rows)?;
        }
        (Figure::CumulativeEpsilon, PlotSource::Ledger(ledger)) => {
            let rows = ledger
                .cumulative_eps()
                .into_iter()
                .map(|(t, e)| vec![t.to_string(), e.to_string()]);
            write_rows(&path, &["t", "cumulative_eps"], rows)?;
        }
        (Figure::CumulativeEpsilon, _) => return Err(ExportError::WrongSource("fig1b", "a privacy ledger")),
        (f, _) => return Err(ExportError::WrongSource(f.id(), "a trajectory")),
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use noisy_formation::privacy::{LedgerOptions, Schedule, VarianceFloor};

    #[test]
    fn figure_ids() {
        for id in ["fig1a", "fig1b", "fig2"] {
            assert_eq!(id.parse::<Figure>().unwrap().id(), id);
        }
        assert!(matches!("fig3".parse::<Figure>(), Err(ExportError::UnknownFigure(s)) if s == "fig3"));
    }

    #[test]
    fn source_must_match_figure() {
        let ledger = PrivacyLedger::build(
            &Schedule::Constant { value: 0.1 },
            &Schedule::Constant { value: 0.01 },
            &[1.0; 3],
            0,
            2,
            &LedgerOptions { theta: 1.0, global_rho: false, floor: VarianceFloor::Worst(0.1) },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            export_plot_data(PlotSource::Ledger(&ledger), "fig2", dir.path()),
            Err(ExportError::WrongSource("fig2", _))
        ));
        assert!(matches!(
            export_plot_data(PlotSource::Ledger(&ledger), "figX", dir.path()),
            Err(ExportError::UnknownFigure(_))
        ));
        let path = export_plot_data(PlotSource::Ledger(&ledger), "fig1b", dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(path).unwrap().lines().count(), 4);
    }
}
