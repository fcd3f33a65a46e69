//! Argument parsing and dispatch for the `nfsim` binary.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use noisy_formation::privacy::CheckMode;
use serde_json::json;

use crate::config::{load_config, ConfigError, SimConfig};
use crate::experiment::{self, RunError};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "nfsim", version, about = "Noisy formation control simulator and privacy auditor")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON).
    #[arg(long, global = true, default_value = "configs/three_robot.json")]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Noise-free receptions.
    #[arg(long, global = true)]
    zero_noise: bool,
    /// Certify against realised reception variances instead of the receiver floor.
    #[arg(long, global = true)]
    realized_audit: bool,
    /// Use the largest gain norm over the window at every step.
    #[arg(long, global = true)]
    global_rho: bool,
    /// First step of the audit window.
    #[arg(long, global = true, default_value_t = 0)]
    from: u64,
    /// Last step of the audit window; defaults to the horizon.
    #[arg(long, global = true)]
    to: Option<u64>,
    /// Worker threads for monte-carlo.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
pub enum Command {
    /// One trajectory: trajectory, edge-error and figure CSVs.
    Simulate,
    /// Many independent runs: stats.json.
    MonteCarlo,
    /// Per-step and composed privacy budget: ledger.json, ledger.csv, fig1b.csv.
    PrivacyAudit,
    /// Admissibility of the gain and failure-probability schedules.
    ValidateSchedule {
        #[arg(long, value_enum, default_value_t = Mode::Analytic)]
        mode: Mode,
    },
    /// Gain table and gain-norm series.
    Gains,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Mode {
    Analytic,
    PartialSum,
}

enum Failure {
    Config(ConfigError),
    Usage(String),
    Run(RunError),
}

impl Failure {
    fn report(&self) -> (u8, serde_json::Value) {
        match self {
            Failure::Config(ConfigError::Validation { path, reason }) => (
                EXIT_VALIDATION,
                json!({"error": "ValidationError", "path": path, "reason": reason}),
            ),
            Failure::Config(e @ ConfigError::Parse(_)) => {
                (EXIT_VALIDATION, json!({"error": "ParseError", "reason": e.to_string()}))
            }
            Failure::Config(e @ ConfigError::Io { .. }) => {
                (EXIT_VALIDATION, json!({"error": "ConfigUnreadable", "reason": e.to_string()}))
            }
            Failure::Usage(reason) => (EXIT_VALIDATION, json!({"error": "ValidationError", "reason": reason})),
            Failure::Run(e) => (EXIT_RUNTIME, json!({"error": "RuntimeError", "reason": e.to_string()})),
        }
    }
}

fn configure(cli: &Cli) -> Result<SimConfig, Failure> {
    let mut cfg = load_config(&cli.config).map_err(Failure::Config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(h) = cli.horizon {
        cfg.horizon = h;
    }
    if let Some(runs) = cli.runs {
        cfg.runs = runs;
    }
    cfg.flags.zero_noise |= cli.zero_noise;
    cfg.flags.realized_audit |= cli.realized_audit;
    cfg.flags.global_rho |= cli.global_rho;
    if cli.threads == Some(0) {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<serde_json::Value, Failure> {
    let cfg = configure(cli)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let files = |paths: Vec<PathBuf>| paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>();
    match &cli.command {
        Command::Simulate => {
            let (log, paths) = experiment::simulate(&cfg, &out).map_err(Failure::Run)?;
            Ok(json!({"files": files(paths), "final_edge_error_sq": log.xi_sq.last()}))
        }
        Command::MonteCarlo => {
            if cfg.runs < 2 {
                return Err(Failure::Usage("monte-carlo needs --runs >= 2".into()));
            }
            let (report, path) = experiment::monte_carlo(&cfg, cli.threads, &out).map_err(Failure::Run)?;
            let s = &report.stats;
            Ok(json!({
                "files": files(vec![path]),
                "runs": s.runs,
                "mean_sq_initial": s.mean_sq.first(),
                "mean_sq_final": s.mean_sq.last(),
            }))
        }
        Command::PrivacyAudit => {
            let to = cli.to.unwrap_or(cfg.horizon as u64);
            if cli.from > to {
                return Err(Failure::Usage(format!("--from {} is after --to {to}", cli.from)));
            }
            let (report, paths) = experiment::privacy_audit_to(&cfg, cli.from, to, &out).map_err(Failure::Run)?;
            Ok(json!({
                "files": files(paths),
                "eps_total": report.eps_total,
                "delta_total": report.delta_total,
                "from_0": report.from_0,
                "from_1": report.from_1,
            }))
        }
        Command::ValidateSchedule { mode } => {
            let mode = match mode {
                Mode::Analytic => CheckMode::Analytic,
                Mode::PartialSum => CheckMode::PartialSum,
            };
            let (report, path) = experiment::validate_schedule(&cfg, mode, &out).map_err(Failure::Run)?;
            Ok(json!({"files": files(vec![path]), "admissible": report.admissible}))
        }
        Command::Gains => {
            let (gains, paths) = experiment::gains(&cfg, &out).map_err(Failure::Run)?;
            Ok(json!({"files": files(paths), "rho_max": gains.rho_series().iter().copied().fold(0.0, f64::max)}))
        }
    }
}

/// Runs one parsed command. `Ok` carries the summary printed on stdout,
/// `Err` the exit code and the error document printed on stderr.
pub fn run(cli: &Cli) -> Result<serde_json::Value, (u8, serde_json::Value)> {
    execute(cli).map_err(|f| f.report())
}

#[cfg(test)]
mod tests {
    use std::fs;
    use std::path::Path;

    use serde_json::Value;

    use super::*;

    fn preset_path() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/three_robot.json")
    }

    fn invoke(config: &Path, out: &Path, args: &[&str]) -> Result<Value, (u8, Value)> {
        let mut argv = vec!["nfsim".to_string()];
        argv.extend(args.iter().map(|s| s.to_string()));
        argv.extend(["--config".into(), config.display().to_string(), "--out".into(), out.display().to_string()]);
        run(&Cli::try_parse_from(argv).unwrap())
    }

    /// Preset with one JSON edit, written into `dir`.
    fn edited(dir: &Path, f: impl FnOnce(&mut Value)) -> PathBuf {
        let mut v: Value = serde_json::from_str(&fs::read_to_string(preset_path()).unwrap()).unwrap();
        f(&mut v);
        let path = dir.join("config.json");
        fs::write(&path, v.to_string()).unwrap();
        path
    }

    fn csv_rows(path: &Path) -> Vec<Vec<String>> {
        fs::read_to_string(path)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn simulate_writes_plot_ready_files() {
        let dir = tempfile::tempdir().unwrap();
        let summary = invoke(&preset_path(), dir.path(), &["simulate", "--seed", "1"]).unwrap();
        assert_eq!(summary["files"].as_array().unwrap().len(), 4);
        let paths = csv_rows(&dir.path().join("fig2.csv"));
        assert_eq!(paths.len(), 3 * 101);
        for agent in ["1", "2", "3"] {
            assert_eq!(paths.iter().filter(|r| r[0] == agent).count(), 101);
        }
        let relative = csv_rows(&dir.path().join("fig1a.csv"));
        let target = [("1-2", ["-10", "-10"]), ("2-3", ["-10", "10"])];
        for row in relative.iter().filter(|r| r[0] == "100") {
            let (_, d) = target.iter().find(|(e, _)| *e == row[1]).unwrap();
            let want: f64 = d[row[2].parse::<usize>().unwrap() - 1].parse().unwrap();
            assert!((row[3].parse::<f64>().unwrap() - want).abs() < 2.0);
        }
        assert_eq!(csv_rows(&dir.path().join("trajectory.csv")).len(), 101 * 3 * 2);
        assert_eq!(csv_rows(&dir.path().join("edge_errors.csv")).len(), 101 * 2 * 2);
    }

    #[test]
    fn privacy_audit_reports_both_conventions() {
        let dir = tempfile::tempdir().unwrap();
        let summary = invoke(&preset_path(), dir.path(), &["privacy-audit", "--from", "0", "--to", "100"]).unwrap();
        assert!((summary["from_0"]["delta"].as_f64().unwrap() - 0.00267).abs() < 1e-5);
        assert!((summary["from_1"]["delta"].as_f64().unwrap() - 0.00167).abs() < 1e-5);
        let ledger: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ledger.json")).unwrap()).unwrap();
        assert_eq!(ledger["per_step"].as_array().unwrap().len(), 101);
        assert!(ledger["per_step"][0]["delta_sens"].as_f64().unwrap() > 0.0);
        let per_time = ledger["eps_total_per_time_rho"].as_f64().unwrap();
        assert_eq!(ledger["eps_total"].as_f64().unwrap(), per_time);
        assert!(ledger["eps_total_global_rho"].as_f64().unwrap() > per_time);
        let cumulative: Vec<f64> = csv_rows(&dir.path().join("fig1b.csv")).iter().map(|r| r[1].parse().unwrap()).collect();
        assert_eq!(cumulative.len(), 101);
        assert!(cumulative.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(csv_rows(&dir.path().join("ledger.csv")).len(), 101);
    }

    #[test]
    fn audit_window_and_modes() {
        let dir = tempfile::tempdir().unwrap();
        let worst = invoke(&preset_path(), dir.path(), &["privacy-audit", "--from", "10", "--to", "50"]).unwrap();
        let realized = invoke(&preset_path(), dir.path(), &["privacy-audit", "--from", "10", "--to", "50", "--realized-audit"]).unwrap();
        let global = invoke(&preset_path(), dir.path(), &["privacy-audit", "--from", "10", "--to", "50", "--global-rho"]).unwrap();
        let eps = |v: &Value| v["eps_total"].as_f64().unwrap();
        assert!(eps(&realized) <= eps(&worst));
        assert!(eps(&global) > eps(&worst));
        assert_eq!(worst["delta_total"], global["delta_total"]);
    }

    #[test]
    fn schedule_gains_and_monte_carlo() {
        let dir = tempfile::tempdir().unwrap();
        let v = invoke(&preset_path(), dir.path(), &["validate-schedule"]).unwrap();
        assert_eq!(v["admissible"], true);
        let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("admissibility.json")).unwrap()).unwrap();
        assert!(report["cross_term_in_l1"]["reason"].as_str().unwrap().contains("p > 5/4"));

        let slow = edited(dir.path(), |v| v["schedules"]["c"] = serde_json::json!({"family": "power", "a": 1.0, "p": 0.4}));
        assert_eq!(invoke(&slow, dir.path(), &["validate-schedule"]).unwrap()["admissible"], false);

        invoke(&preset_path(), dir.path(), &["gains", "--horizon", "20"]).unwrap();
        assert_eq!(csv_rows(&dir.path().join("gains.csv")).len(), 20 * 3 * 4);
        assert_eq!(csv_rows(&dir.path().join("rho.csv")).len(), 20);

        let mc = invoke(&preset_path(), dir.path(), &["monte-carlo", "--runs", "8", "--horizon", "30"]).unwrap();
        assert_eq!(mc["runs"], 8);
        assert!(dir.path().join("stats.json").exists());
    }

    fn failure(r: Result<Value, (u8, Value)>) -> (u8, String) {
        let (code, body) = r.unwrap_err();
        (code, body["error"].as_str().unwrap().to_string())
    }

    #[test]
    fn validation_failures_exit_2() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        assert_eq!(failure(invoke(&out.join("missing.json"), out, &["simulate"])).0, EXIT_VALIDATION);

        let triangle = edited(out, |v| v["graph"]["edges"] = serde_json::json!([[1, 2], [2, 3], [3, 1]]));
        let (code, body) = invoke(&triangle, out, &["simulate"]).unwrap_err();
        assert_eq!(code, EXIT_VALIDATION);
        assert!(body["reason"].as_str().unwrap().contains("NotATree"));

        let delta = edited(out, |v| v["schedules"]["delta"] = serde_json::json!({"family": "constant", "value": 0.6}));
        assert_eq!(failure(invoke(&delta, out, &["privacy-audit"])), (EXIT_VALIDATION, "ValidationError".into()));

        fs::write(out.join("broken.json"), "{ not json").unwrap();
        assert_eq!(failure(invoke(&out.join("broken.json"), out, &["gains"])), (EXIT_VALIDATION, "ParseError".into()));

        assert_eq!(failure(invoke(&preset_path(), out, &["privacy-audit", "--from", "9", "--to", "3"])).0, EXIT_VALIDATION);
        assert_eq!(failure(invoke(&preset_path(), out, &["monte-carlo", "--runs", "1"])).0, EXIT_VALIDATION);
        assert_eq!(failure(invoke(&preset_path(), out, &["monte-carlo", "--threads", "0"])).0, EXIT_VALIDATION);

        let err = Cli::try_parse_from(["nfsim", "simulate", "--bogus"]).err().unwrap();
        assert_eq!(err.exit_code(), i32::from(EXIT_VALIDATION));
    }

    #[test]
    fn runtime_failures_exit_3() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let short = edited(out, |v| v["schedules"]["c"] = serde_json::json!({"family": "table", "values": [0.1, 0.1]}));
        assert_eq!(failure(invoke(&short, out, &["simulate"])), (EXIT_RUNTIME, "RuntimeError".into()));
        // closed-form verdicts exist only for named families
        assert_eq!(failure(invoke(&short, out, &["validate-schedule"])).0, EXIT_RUNTIME);
        assert!(invoke(&short, out, &["validate-schedule", "--mode", "partial-sum"]).is_ok());

        let blocked = out.join("file");
        fs::write(&blocked, "").unwrap();
        assert_eq!(failure(invoke(&preset_path(), &blocked, &["gains"])).0, EXIT_RUNTIME);
    }
}
