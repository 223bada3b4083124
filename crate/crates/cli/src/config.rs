//! Experiment configuration: JSON schema, validation and canonical form.
//!
//! Complex numbers are `[re, im]` pairs and matrices are arrays of rows.
//! Parsing happens in two phases. Structural problems (bad JSON, wrong
//! types, unknown fields) stop at the first error and report its location.
//! Semantic validation then collects every problem it finds, each tagged
//! with the dotted path of the offending field.

use std::fmt;
use std::path::PathBuf;

use ousse_core::ensemble::{Observable, RunOptions, DEFAULT_C_DISC, DEFAULT_C_FD};
use ousse_core::linalg::{hermitian_residual, tau_herm};
use ousse_core::model::{make_measurement_model, make_random_hamiltonian, MAX_DEGREE};
use ousse_core::noise::check_stability;
use ousse_core::{Mode, ModelSpec, Operator, OperatorPolynomial, SeedPolicy, StateVector, TimeGrid, C64};
use serde::{Deserialize, Serialize};

pub type Complex = [f64; 2];
pub type Matrix = Vec<Vec<Complex>>;

/// Names accepted in `check.suites`.
pub const SUITES: [&str; 6] = [
    "consistency",
    "martingale",
    "girsanov",
    "mean_equation",
    "covariance",
    "lindblad_oracle",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: RawModel,
    pub grid: RawGrid,
    pub run: RawRun,
    #[serde(default)]
    pub check: RawCheck,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    /// `random_hamiltonian` or `measurement`
    pub kind: String,
    pub dim: usize,
    pub gamma: f64,
    #[serde(rename = "H")]
    pub h: RawPolynomial,
    /// Coupling of a random-Hamiltonian model.
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Matrix>,
    /// Measurement operator polynomial of a measurement model.
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<RawPolynomial>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPolynomial {
    /// Coefficients of `x⁰, x¹, …`.
    pub coefficients: Vec<Matrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRun {
    pub mode: String,
    pub n_traj: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_times: Option<Vec<f64>>,
    #[serde(default)]
    pub observables: Vec<RawObservable>,
    /// Defaults to the first basis vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<Complex>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawObservable {
    pub name: String,
    pub matrix: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCheck {
    #[serde(default = "default_suites")]
    pub suites: Vec<String>,
    #[serde(default = "default_c_disc")]
    pub c_disc: f64,
    #[serde(default = "default_c_fd")]
    pub c_fd: f64,
    /// Test hook: adds `ε·I` to the drift so the consistency check must fail.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_drift: Option<Complex>,
    /// Times for the Girsanov comparison; defaults to `T/4, T/2, T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub girsanov_times: Option<Vec<f64>>,
    /// Observable name (from `run.observables`) for the Girsanov comparison;
    /// defaults to the first observable, or the identity if there is none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub girsanov_observable: Option<String>,
    /// Also rerun at `dt/2` and require the mean-equation residual to drop.
    #[serde(default)]
    pub mean_equation_trend: bool,
    #[serde(default)]
    pub covariance: RawCovariance,
}

impl Default for RawCheck {
    fn default() -> Self {
        Self {
            suites: default_suites(),
            c_disc: DEFAULT_C_DISC,
            c_fd: DEFAULT_C_FD,
            perturb_drift: None,
            girsanov_times: None,
            girsanov_observable: None,
            mean_equation_trend: false,
            covariance: RawCovariance::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCovariance {
    /// Defaults to five evenly spaced times ending at `T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default = "default_cov_paths")]
    pub n_paths: usize,
}

impl Default for RawCovariance {
    fn default() -> Self {
        Self {
            times: None,
            n_paths: default_cov_paths(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    #[serde(default = "default_out_dir")]
    pub dir: String,
}

impl Default for RawOutput {
    fn default() -> Self {
        Self { dir: default_out_dir() }
    }
}

fn default_suites() -> Vec<String> {
    SUITES.iter().map(|s| s.to_string()).collect()
}
fn default_c_disc() -> f64 {
    DEFAULT_C_DISC
}
fn default_c_fd() -> f64 {
    DEFAULT_C_FD
}
fn default_cov_paths() -> usize {
    10_000
}
fn default_out_dir() -> String {
    "out".into()
}

/// One validation problem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed config at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{} validation error(s):\n{}", .0.len(), join_lines(.0))]
    Invalid(Vec<FieldError>),
}

fn join_lines(errors: &[FieldError]) -> String {
    errors.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

impl ConfigError {
    pub fn errors(&self) -> Vec<FieldError> {
        match self {
            ConfigError::Parse { path, message } => vec![FieldError {
                path: path.clone(),
                message: message.clone(),
            }],
            ConfigError::Invalid(v) => v.clone(),
        }
    }
}

/// A fully validated experiment, ready to run.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub raw: RawConfig,
    pub model: ModelSpec,
    pub grid: TimeGrid,
    pub n_traj: usize,
    pub seeds: SeedPolicy,
    pub run: RunOptions,
    pub suites: Vec<String>,
    pub c_disc: f64,
    pub c_fd: f64,
    pub girsanov_times: Vec<f64>,
    pub girsanov_observable: Operator,
    pub covariance_times: Vec<f64>,
    pub covariance_paths: usize,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Canonical JSON: every defaulted field written out, fixed key order.
    pub fn canonical_json(&self) -> String {
        canonical_json(&self.raw)
    }

    /// Replaces the master seed (command-line override).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.raw.run.master_seed = seed;
        self.seeds = SeedPolicy::new(seed);
        self
    }

    pub fn with_out_dir(mut self, dir: PathBuf) -> Self {
        self.raw.output.dir = dir.to_string_lossy().into_owned();
        self.out_dir = dir;
        self
    }

    pub fn wants(&self, suite: &str) -> bool {
        self.suites.iter().any(|s| s == suite)
    }
}

pub fn canonical_json(raw: &RawConfig) -> String {
    let mut s = serde_json::to_string_pretty(raw).expect("config serializes");
    s.push('\n');
    s
}

/// Parses and validates a JSON experiment description.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    validate(raw)
}

struct Collector(Vec<FieldError>);

impl Collector {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldError {
            path: path.into(),
            message: message.into(),
        });
    }
}

fn to_c64(z: Complex) -> C64 {
    C64::new(z[0], z[1])
}

fn matrix(errs: &mut Collector, path: &str, m: &Matrix, dim: usize) -> Option<Operator> {
    if m.len() != dim || m.iter().any(|row| row.len() != dim) {
        errs.push(path, format!("expected a {dim}x{dim} matrix"));
        return None;
    }
    if m.iter().flatten().flatten().any(|v| !v.is_finite()) {
        errs.push(path, "entries must be finite");
        return None;
    }
    Some(Operator::from_fn(dim, |i, j| to_c64(m[i][j])))
}

fn hermitian(errs: &mut Collector, path: &str, m: &Matrix, dim: usize) -> Option<Operator> {
    let op = matrix(errs, path, m, dim)?;
    let residual = hermitian_residual(&op);
    if residual > tau_herm(&op) {
        errs.push(path, format!("matrix is not Hermitian (residual {residual:e})"));
        return None;
    }
    Some(op)
}

fn polynomial(
    errs: &mut Collector,
    path: &str,
    poly: &RawPolynomial,
    dim: usize,
    require_hermitian: bool,
) -> Option<OperatorPolynomial> {
    let n = poly.coefficients.len();
    if n == 0 || n > MAX_DEGREE + 1 {
        errs.push(
            format!("{path}.coefficients"),
            format!("need between 1 and {} coefficients, got {n}", MAX_DEGREE + 1),
        );
        return None;
    }
    let mut ops = Vec::with_capacity(n);
    let mut ok = true;
    for (i, c) in poly.coefficients.iter().enumerate() {
        let p = format!("{path}.coefficients[{i}]");
        let op = if require_hermitian {
            hermitian(errs, &p, c, dim)
        } else {
            matrix(errs, &p, c, dim)
        };
        match op {
            Some(op) => ops.push(op),
            None => ok = false,
        }
    }
    if !ok {
        return None;
    }
    OperatorPolynomial::new(ops).ok()
}

fn validate_model(errs: &mut Collector, raw: &RawModel) -> Option<ModelSpec> {
    if raw.dim == 0 {
        errs.push("model.dim", "dimension must be at least 1");
        return None;
    }
    let gamma_ok = raw.gamma.is_finite() && raw.gamma >= 0.0;
    if !gamma_ok {
        errs.push(
            "model.gamma",
            format!("must be finite and non-negative, got {}", raw.gamma),
        );
    }
    let d = raw.dim;
    match raw.kind.as_str() {
        "random_hamiltonian" => {
            if raw.b.is_some() {
                errs.push("model.B", "random_hamiltonian models take K, not B");
            }
            if raw.h.coefficients.len() != 1 {
                errs.push(
                    "model.H.coefficients",
                    "random_hamiltonian models take a single constant H; the x-dependence is derived from K",
                );
            }
            let h = raw
                .h
                .coefficients
                .first()
                .and_then(|c| hermitian(errs, "model.H.coefficients[0]", c, d));
            let k = match &raw.k {
                Some(k) => hermitian(errs, "model.K", k, d),
                None => {
                    errs.push("model.K", "missing coupling operator");
                    None
                }
            };
            match (h, k, gamma_ok) {
                (Some(h), Some(k), true) if raw.h.coefficients.len() == 1 => make_random_hamiltonian(h, k, raw.gamma)
                    .map_err(|e| errs.push("model", e.to_string()))
                    .ok(),
                _ => None,
            }
        }
        "measurement" => {
            if raw.k.is_some() {
                errs.push("model.K", "measurement models take B, not K");
            }
            let h = polynomial(errs, "model.H", &raw.h, d, true);
            let b = match &raw.b {
                Some(b) => polynomial(errs, "model.B", b, d, false),
                None => {
                    errs.push("model.B", "missing measurement operator polynomial");
                    None
                }
            };
            match (h, b, gamma_ok) {
                (Some(h), Some(b), true) => make_measurement_model(h, b, raw.gamma)
                    .map_err(|e| errs.push("model", e.to_string()))
                    .ok(),
                _ => None,
            }
        }
        other => {
            errs.push(
                "model.kind",
                format!("unknown kind `{other}` (expected random_hamiltonian or measurement)"),
            );
            None
        }
    }
}

fn grid_times(errs: &mut Collector, path: &str, times: &[f64], grid: &TimeGrid) -> bool {
    let mut ok = true;
    let mut prev: Option<usize> = None;
    for (i, &t) in times.iter().enumerate() {
        match grid.index_of(t) {
            Some(k) => {
                if prev.is_some_and(|p| k <= p) {
                    errs.push(format!("{path}[{i}]"), "times must be strictly increasing");
                    ok = false;
                }
                prev = Some(k);
            }
            None => {
                errs.push(format!("{path}[{i}]"), format!("{t} is not a point of the time grid"));
                ok = false;
            }
        }
    }
    ok
}

fn snap(grid: &TimeGrid, t: f64) -> f64 {
    grid.time(((t / grid.dt()).round() as usize).clamp(1, grid.n_steps()))
}

fn validate(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let mut errs = Collector(Vec::new());
    let model = validate_model(&mut errs, &raw.model);

    let grid = match TimeGrid::with_horizon(raw.grid.dt, raw.grid.horizon) {
        Ok(g) => Some(g),
        Err(e) => {
            errs.push("grid", e.to_string());
            None
        }
    };
    if let Some(g) = &grid {
        if raw.model.gamma.is_finite() && raw.model.gamma >= 0.0 {
            if let Err(e) = check_stability(raw.model.gamma, g.dt()) {
                errs.push("grid.dt", format!("stability: {e}"));
            }
        }
    }

    let mode = match raw.run.mode.parse::<Mode>() {
        Ok(m) => Some(m),
        Err(e) => {
            errs.push("run.mode", e.to_string());
            None
        }
    };
    if mode == Some(Mode::DensityLinear) && raw.model.kind != "random_hamiltonian" {
        errs.push("run.mode", "density_linear requires a random_hamiltonian model");
    }
    if raw.run.n_traj < 2 {
        errs.push("run.n_traj", "need at least 2 trajectories");
    }
    if let (Some(times), Some(g)) = (&raw.run.output_times, &grid) {
        if times.is_empty() {
            errs.push("run.output_times", "must not be empty when given");
        }
        grid_times(&mut errs, "run.output_times", times, g);
    }

    let d = raw.model.dim.max(1);
    let mut observables = Vec::new();
    for (i, o) in raw.run.observables.iter().enumerate() {
        let path = format!("run.observables[{i}]");
        if o.name.is_empty() || !o.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            errs.push(format!("{path}.name"), "names must be non-empty [A-Za-z0-9_]");
        }
        if raw.run.observables[..i].iter().any(|p| p.name == o.name) {
            errs.push(
                format!("{path}.name"),
                format!("duplicate observable name `{}`", o.name),
            );
        }
        if let Some(op) = hermitian(&mut errs, &format!("{path}.matrix"), &o.matrix, d) {
            observables.push(Observable {
                name: o.name.clone(),
                operator: op,
            });
        }
    }

    let initial = match &raw.run.initial_state {
        None => Some(StateVector::basis(d, 0)),
        Some(amps) if amps.len() != d => {
            errs.push(
                "run.initial_state",
                format!("expected {d} amplitudes, got {}", amps.len()),
            );
            None
        }
        Some(amps) => match StateVector::new(amps.iter().copied().map(to_c64).collect()) {
            Ok(v) if (v.norm_sq() - 1.0).abs() <= 1e-9 => Some(v),
            Ok(v) => {
                errs.push(
                    "run.initial_state",
                    format!("state must be normalized, |psi|^2 = {}", v.norm_sq()),
                );
                None
            }
            Err(e) => {
                errs.push("run.initial_state", e.to_string());
                None
            }
        },
    };

    let check = &raw.check;
    for (i, s) in check.suites.iter().enumerate() {
        if !SUITES.contains(&s.as_str()) {
            errs.push(format!("check.suites[{i}]"), format!("unknown suite `{s}`"));
        }
    }
    if !(check.c_disc.is_finite() && check.c_disc >= 0.0) {
        errs.push("check.c_disc", "must be finite and non-negative");
    }
    if !(check.c_fd.is_finite() && check.c_fd >= 0.0) {
        errs.push("check.c_fd", "must be finite and non-negative");
    }
    if let Some(eps) = check.perturb_drift {
        if !(eps[0].is_finite() && eps[1].is_finite()) {
            errs.push("check.perturb_drift", "must be finite");
        }
    }
    if check.covariance.n_paths < 2 {
        errs.push("check.covariance.n_paths", "need at least 2 paths");
    }
    let girsanov_observable = match &check.girsanov_observable {
        Some(name) => match observables.iter().find(|o| &o.name == name) {
            Some(o) => Some(o.operator.clone()),
            None => {
                errs.push("check.girsanov_observable", format!("no observable named `{name}`"));
                None
            }
        },
        None => Some(
            observables
                .first()
                .map_or_else(|| Operator::identity(d), |o| o.operator.clone()),
        ),
    };
    let (mut girsanov_times, mut covariance_times) = (Vec::new(), Vec::new());
    if let Some(g) = &grid {
        girsanov_times = match &check.girsanov_times {
            Some(t) => {
                grid_times(&mut errs, "check.girsanov_times", t, g);
                t.clone()
            }
            None => {
                let mut t: Vec<f64> = [0.25, 0.5, 1.0].iter().map(|f| snap(g, f * g.horizon())).collect();
                t.dedup();
                t
            }
        };
        covariance_times = match &check.covariance.times {
            Some(t) => {
                grid_times(&mut errs, "check.covariance.times", t, g);
                t.clone()
            }
            None => {
                let mut t: Vec<f64> = (1..=5).map(|i| snap(g, i as f64 * g.horizon() / 5.0)).collect();
                t.dedup();
                t
            }
        };
    }

    if !errs.0.is_empty() {
        return Err(ConfigError::Invalid(errs.0));
    }
    let (model, grid, mode, initial, girsanov_observable) = match (model, grid, mode, initial, girsanov_observable) {
        (Some(m), Some(g), Some(mode), Some(i), Some(o)) => (m, g, mode, i, o),
        _ => unreachable!("every missing piece records an error"),
    };
    let model = match check.perturb_drift {
        Some(eps) => model.with_drift_perturbation(to_c64(eps)),
        None => model,
    };
    let mut run = RunOptions::new(mode, initial);
    if let Some(t) = &raw.run.output_times {
        run = run.with_output_times(t);
    }
    for o in observables {
        run = run.with_observable(o);
    }
    Ok(ExperimentConfig {
        model,
        grid,
        n_traj: raw.run.n_traj,
        seeds: SeedPolicy::new(raw.run.master_seed),
        run,
        suites: check.suites.clone(),
        c_disc: check.c_disc,
        c_fd: check.c_fd,
        girsanov_times,
        girsanov_observable,
        covariance_times,
        covariance_paths: check.covariance.n_paths,
        out_dir: PathBuf::from(&raw.output.dir),
        raw,
    })
}
