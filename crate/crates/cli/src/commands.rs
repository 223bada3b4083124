//! The `simulate`, `verify` and `covariance` subcommands.

use std::fs;
use std::path::Path;
use std::time::Instant;

use ousse_core::ensemble::{
    girsanov_crosscheck, martingale_check, mean_equation_residual, mean_equation_trend, run_ensemble, RunOptions,
};
use ousse_core::model::{consistency_residual, linear_drift_a};
use ousse_core::noise::{empirical_covariance, SeedPolicy, TimeGrid};
use ousse_core::oracle::{build_liouvillian, propagate_lindblad};
use ousse_core::{DensityMatrix, EnsembleEstimate, Mode};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{num, series_csv};

/// Seed label of the covariance suite, kept apart from the trajectory streams.
const COVARIANCE_LABEL: u64 = 0xC0;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error("run aborted: {0}")]
    Runtime(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Runtime(_) | CliError::Io { .. } => 2,
        }
    }
}

impl From<ousse_core::Error> for CliError {
    fn from(e: ousse_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn config_value(cfg: &ExperimentConfig) -> Value {
    serde_json::to_value(&cfg.raw).expect("config serializes")
}

/// Runs the configured ensemble and writes `series.csv` and `summary.json`.
pub fn simulate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let summary_path = cfg.out_dir.join("summary.json");
    // residual records only feed `verify`
    let opts = cfg.run.clone().with_generator_record(false);
    match run_ensemble(&cfg.model, &cfg.grid, cfg.n_traj, cfg.seeds, &opts) {
        Ok(est) => {
            write_file(&cfg.out_dir.join("series.csv"), &series_csv(&est))?;
            let summary = json!({
                "status": "ok",
                "partial": false,
                "version": env!("CARGO_PKG_VERSION"),
                "mode": est.mode.as_str(),
                "master_seed": cfg.seeds.master_seed,
                "n_traj": est.n_traj,
                "divergence_count": est.n_failed,
                "output_points": est.times.len(),
                "elapsed_seconds": start.elapsed().as_secs_f64(),
                "files": ["series.csv"],
                "config": config_value(cfg),
            });
            write_file(&summary_path, &pretty(&summary))
        }
        Err(e) => {
            let summary = json!({
                "status": "aborted",
                "partial": true,
                "error": e.to_string(),
                "version": env!("CARGO_PKG_VERSION"),
                "mode": cfg.run.mode.as_str(),
                "master_seed": cfg.seeds.master_seed,
                "n_traj": cfg.n_traj,
                "elapsed_seconds": start.elapsed().as_secs_f64(),
                "files": [],
                "config": config_value(cfg),
            });
            write_file(&summary_path, &pretty(&summary))?;
            Err(e.into())
        }
    }
}

/// One entry of the verification report. `statistic` is compared with
/// `threshold` using `comparison` (`"<="` or `">="`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub comparison: &'static str,
    pub pass: bool,
    pub details: Value,
}

impl CheckEntry {
    fn at_most(name: &str, statistic: f64, threshold: f64, details: Value) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            comparison: "<=",
            pass: statistic <= threshold,
            details,
        }
    }

    fn at_least(name: &str, statistic: f64, threshold: f64, details: Value) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            comparison: ">=",
            pass: statistic >= threshold,
            details,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Skipped {
    pub name: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub version: &'static str,
    pub master_seed: u64,
    pub checks: Vec<CheckEntry>,
    pub skipped: Vec<Skipped>,
}

fn consistency(cfg: &ExperimentConfig) -> CheckEntry {
    let mut worst = 0.0f64;
    let mut max_residual = 0.0f64;
    for j in 0..21 {
        let x = -5.0 + 0.5 * j as f64;
        let r = consistency_residual(&cfg.model, x);
        max_residual = max_residual.max(r);
        worst = worst.max(r / (1e-12 * (1.0 + linear_drift_a(&cfg.model, x).max_abs())));
    }
    CheckEntry::at_most(
        "consistency",
        worst,
        1.0,
        json!({ "max_residual": max_residual, "x_points": 21, "relative_tolerance": 1e-12 }),
    )
}

fn lindblad_oracle(cfg: &ExperimentConfig, est: &EnsembleEstimate) -> Result<CheckEntry, CliError> {
    let h = cfg.model.h_poly().eval(0.0);
    let b = cfg.model.b_poly().eval(0.0);
    let l = build_liouvillian(&h, &b)?;
    let rho0 = DensityMatrix::pure(&cfg.run.initial);
    let dt = cfg.grid.dt();
    let mut worst = 0.0f64;
    let mut max_dev = 0.0f64;
    for (o, &t) in est.times.iter().enumerate() {
        let reference = propagate_lindblad(&l, &rho0, t)?;
        let d = reference.dim();
        for i in 0..d {
            for j in 0..d {
                let dev = (est.eta[o][(i, j)] - reference[(i, j)]).norm();
                let allowed = 3.0 * est.eta_stderr[o][(i, j)].norm() + cfg.c_disc * dt;
                max_dev = max_dev.max(dev);
                let ratio = if allowed > 0.0 {
                    dev / allowed
                } else if dev == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(ratio);
            }
        }
    }
    Ok(CheckEntry::at_most(
        "lindblad_oracle",
        worst,
        1.0,
        json!({ "max_abs_deviation": max_dev, "output_points": est.times.len() }),
    ))
}

/// Runs the configured verification suites and writes `verify.json`.
pub fn verify(cfg: &ExperimentConfig) -> Result<VerifyReport, CliError> {
    let mut checks = Vec::new();
    let mut skipped = Vec::new();

    if cfg.wants("consistency") {
        checks.push(consistency(cfg));
    }

    let oracle_applies = cfg.model.is_x_independent();
    let needs_linear =
        cfg.wants("martingale") || cfg.wants("mean_equation") || (cfg.wants("lindblad_oracle") && oracle_applies);
    if needs_linear {
        let mut opts =
            RunOptions::new(Mode::Linear, cfg.run.initial.clone()).with_generator_record(cfg.wants("mean_equation"));
        opts.output_times = cfg.run.output_times.clone();
        let est = run_ensemble(&cfg.model, &cfg.grid, cfg.n_traj, cfg.seeds, &opts)?;

        if cfg.wants("martingale") {
            let r = martingale_check(&est, cfg.c_disc)?;
            let worst_dev = r.points.iter().map(|p| (p.value - 1.0).abs()).fold(0.0, f64::max);
            checks.push(CheckEntry::at_most(
                "martingale",
                r.worst_ratio(),
                1.0,
                json!({ "max_abs_deviation": worst_dev, "output_points": r.points.len(), "divergence_count": est.n_failed }),
            ));
        }
        if cfg.wants("mean_equation") {
            let r = mean_equation_residual(&cfg.model, &est, cfg.c_fd)?;
            checks.push(CheckEntry::at_most(
                "mean_equation",
                r.worst_ratio(),
                1.0,
                json!({ "max_residual": r.max_residual(), "intervals": r.points.len() }),
            ));
            if cfg.raw.check.mean_equation_trend {
                let trend = mean_equation_trend(&cfg.model, &cfg.grid, cfg.n_traj, cfg.seeds, &opts, cfg.c_fd)?;
                let ratio = trend.fine.max_residual() / trend.coarse.max_residual();
                checks.push(CheckEntry {
                    pass: trend.decreased(),
                    ..CheckEntry::at_most(
                        "mean_equation_trend",
                        ratio,
                        1.0,
                        json!({ "coarse": trend.coarse.max_residual(), "fine": trend.fine.max_residual() }),
                    )
                });
            }
        }
        if cfg.wants("lindblad_oracle") && oracle_applies {
            checks.push(lindblad_oracle(cfg, &est)?);
        }
    }
    if cfg.wants("lindblad_oracle") && !oracle_applies {
        skipped.push(Skipped {
            name: "lindblad_oracle".into(),
            reason: "model depends on x; no closed-form reference".into(),
        });
    }

    if cfg.wants("girsanov") {
        let r = girsanov_crosscheck(
            &cfg.model,
            &cfg.grid,
            cfg.n_traj,
            cfg.seeds,
            &cfg.run.initial,
            &cfg.girsanov_observable,
            &cfg.girsanov_times,
            cfg.c_disc,
        )?;
        let points: Vec<Value> = r
            .check
            .points
            .iter()
            .map(|p| json!({ "t": p.t, "weighted_reference": p.value, "physical": p.reference, "stderr": p.stderr }))
            .collect();
        checks.push(CheckEntry::at_most(
            "girsanov",
            r.check.worst_ratio(),
            1.0,
            json!({ "points": points }),
        ));
    }

    if cfg.wants("covariance") {
        let rows = empirical_covariance(
            cfg.model.gamma(),
            &cfg.grid,
            &cfg.covariance_times,
            cfg.covariance_paths,
            cfg.seeds.derive(COVARIANCE_LABEL),
        )?;
        let inside = rows.iter().filter(|r| r.within(3.0)).count();
        checks.push(CheckEntry::at_least(
            "covariance",
            inside as f64 / rows.len() as f64,
            0.95,
            json!({ "rows": rows.len(), "within_3_stderr": inside, "n_paths": cfg.covariance_paths }),
        ));
    }

    let report = VerifyReport {
        pass: checks.iter().all(|c| c.pass),
        version: env!("CARGO_PKG_VERSION"),
        master_seed: cfg.seeds.master_seed,
        checks,
        skipped,
    };
    write_file(&cfg.out_dir.join("verify.json"), &pretty(&report))?;
    Ok(report)
}

/// Parameters of the `covariance` subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceArgs {
    pub gamma: f64,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Defaults to five evenly spaced times ending at the horizon.
    pub times: Option<Vec<f64>>,
}

/// `t,s,analytic,empirical,stderr` for every ordered pair of times.
pub fn covariance_csv(args: &CovarianceArgs) -> Result<String, CliError> {
    if !(args.gamma.is_finite() && args.gamma >= 0.0) {
        return Err(CliError::Usage(format!(
            "gamma must be non-negative, got {}",
            args.gamma
        )));
    }
    let grid = TimeGrid::with_horizon(args.dt, args.horizon).map_err(|e| CliError::Usage(e.to_string()))?;
    ousse_core::noise::check_stability(args.gamma, args.dt).map_err(|e| CliError::Usage(e.to_string()))?;
    let times = match &args.times {
        Some(t) => t.clone(),
        None => (1..=5)
            .map(|i| grid.time((i * grid.n_steps()) / 5).max(grid.dt()))
            .collect(),
    };
    let rows = empirical_covariance(args.gamma, &grid, &times, args.n_paths, SeedPolicy::new(args.seed))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = String::from("t,s,analytic,empirical,stderr\n");
    for r in rows {
        out.push_str(&[num(r.t), num(r.s), num(r.analytic), num(r.empirical), num(r.stderr)].join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_covariance(args: &CovarianceArgs, out: Option<&Path>) -> Result<String, CliError> {
    let csv = covariance_csv(args)?;
    if let Some(dir) = out {
        write_file(&dir.join("covariance.csv"), &csv)?;
    }
    Ok(csv)
}
