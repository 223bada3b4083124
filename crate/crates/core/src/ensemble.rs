//! Monte Carlo ensembles and the structural cross-checks built on them.
//!
//! In reference-measure modes the averages are *unnormalized*:
//! `η_t = (1/n)·Σ|ψ_t⟩⟨ψ_t|`, so `Tr η_t` equals the mean squared norm.
//! In physical-measure modes the normalized states are averaged directly.
//!
//! Trajectory `i` always draws from `SeedPolicy::stream(i)` and trajectories
//! are reduced in fixed blocks through a fixed pairwise tree, so estimates
//! are bit-identical for any thread count.
//!
//! For the mean-equation residual the linear mode also records, per output
//! interval, the time integrals of `η`, of `C = E[X·ρ]` and of the mean
//! generator `E[L(X)[ρ]]`, plus a drift-compensated mean state
//! `η̃_t = η_t − E[Σ_k M_k]` where
//! `M_k = dW_k(Bρ_k + ρ_kB†) + (dW_k² − dt)·Bρ_kB†` is the zero-mean part of
//! each Euler increment of `|ψ⟩⟨ψ|`.

use crate::dynamics::{lindblad_apply, step_density_linear, step_linear, step_nonlinear, step_sme, Mode};
use crate::error::{Error, Result};
use crate::linalg::{
    commutator, hermitian_residual, outer, tau_herm, DensityMatrix, Operator, StateVector, C64, I, ONE,
};
use crate::model::{diffusion_operator, ModelKind, ModelSpec, NORM_TOL};
use crate::noise::{check_stability, ou_step, sample_wiener, SeedPolicy, TimeGrid};
use crate::stats::{par_blocks, reduce_pairwise, Moments};

/// Default number of output points (including `t = 0`).
pub const DEFAULT_OUTPUT_POINTS: usize = 21;

/// Default discretization allowance multiplier on `dt`.
pub const DEFAULT_C_DISC: f64 = 5.0;
/// Default finite-difference allowance multiplier on `dt`.
pub const DEFAULT_C_FD: f64 = 5.0;

/// Named Hermitian observable recorded per trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    pub name: String,
    pub operator: Operator,
}

impl Observable {
    pub fn new(name: impl Into<String>, operator: Operator) -> Result<Self> {
        let name = name.into();
        let residual = hermitian_residual(&operator);
        if residual > tau_herm(&operator) {
            return Err(Error::NotHermitian { name, residual });
        }
        Ok(Self { name, operator })
    }
}

/// Ensemble run parameters besides model, grid and seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub mode: Mode,
    pub initial: StateVector,
    /// Output times; must be grid points. Empty selects
    /// [`DEFAULT_OUTPUT_POINTS`] evenly spaced points.
    pub output_times: Vec<f64>,
    pub observables: Vec<Observable>,
    /// Record the mean-equation residual data (linear mode only).
    pub record_generator: bool,
}

impl RunOptions {
    pub fn new(mode: Mode, initial: StateVector) -> Self {
        Self {
            mode,
            initial,
            output_times: Vec::new(),
            observables: Vec::new(),
            record_generator: mode == Mode::Linear,
        }
    }

    pub fn with_output_times(mut self, times: &[f64]) -> Self {
        self.output_times = times.to_vec();
        self
    }

    pub fn with_observable(mut self, obs: Observable) -> Self {
        self.observables.push(obs);
        self
    }

    pub fn with_generator_record(mut self, on: bool) -> Self {
        self.record_generator = on;
        self
    }
}

fn output_steps(grid: &TimeGrid, times: &[f64]) -> Result<Vec<usize>> {
    if times.is_empty() {
        let n = grid.n_steps();
        let points = DEFAULT_OUTPUT_POINTS.min(n + 1);
        let mut steps: Vec<usize> = (0..points)
            .map(|i| ((i as f64) * n as f64 / (points - 1) as f64).round() as usize)
            .collect();
        steps.dedup();
        return Ok(steps);
    }
    let mut steps = Vec::with_capacity(times.len());
    for &t in times {
        let k = grid
            .index_of(t)
            .ok_or_else(|| Error::InvalidArgument(format!("output time {t} is not a grid point")))?;
        if steps.last().is_some_and(|&prev| k <= prev) {
            return Err(Error::InvalidArgument(
                "output times must be strictly increasing".into(),
            ));
        }
        steps.push(k);
    }
    Ok(steps)
}

/// Per-interval data for the mean-equation residual.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalRecord {
    pub t_start: f64,
    pub t_end: f64,
    /// `∫ η dt` over the interval (left Riemann sum on the grid).
    pub eta_integral: Operator,
    /// `∫ C dt`
    pub c_integral: Operator,
    /// `∫ E[L(X)[ρ]] dt`
    pub generator_integral: Operator,
    /// Entrywise standard error (re + i·im) of the per-trajectory residual
    /// increment `Δρ̃ − ∫L(X)[ρ]dt`.
    pub increment_stderr: Operator,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorRecord {
    /// Drift-compensated mean state at each output time.
    pub eta_compensated: Vec<Operator>,
    /// One record per consecutive pair of output times.
    pub intervals: Vec<IntervalRecord>,
}

/// Mean and standard error series of one observable.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSeries {
    pub name: String,
    pub operator: Operator,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleEstimate {
    pub grid: TimeGrid,
    pub mode: Mode,
    pub seeds: SeedPolicy,
    /// Requested trajectories.
    pub n_traj: usize,
    /// Trajectories excluded after diverging.
    pub n_failed: usize,
    /// Output times and their grid indices.
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    /// Mean state `η_t`.
    pub eta: Vec<DensityMatrix>,
    /// Entrywise standard error of `η_t` (re + i·im).
    pub eta_stderr: Vec<Operator>,
    /// Memory correlation `C_t ≈ E[X_t ρ_t]`.
    pub c: Vec<Operator>,
    pub c_stderr: Vec<Operator>,
    pub mean_weight: Vec<f64>,
    pub weight_stderr: Vec<f64>,
    pub observables: Vec<ObservableSeries>,
    pub generator: Option<GeneratorRecord>,
}

impl EnsembleEstimate {
    pub fn n_used(&self) -> usize {
        self.n_traj - self.n_failed
    }

    pub fn dim(&self) -> usize {
        self.eta[0].dim()
    }

    pub fn observable(&self, name: &str) -> Option<&ObservableSeries> {
        self.observables.iter().find(|o| o.name == name)
    }
}

// Flat per-trajectory sample layout.
struct Layout {
    d2: usize,
    n_out: usize,
    n_obs: usize,
    generator: bool,
}

impl Layout {
    fn op(&self) -> usize {
        2 * self.d2
    }
    fn per_output(&self) -> usize {
        2 * self.op() + 1 + self.n_obs
    }
    fn rho(&self, o: usize) -> usize {
        o * self.per_output()
    }
    fn xrho(&self, o: usize) -> usize {
        self.rho(o) + self.op()
    }
    fn weight(&self, o: usize) -> usize {
        self.rho(o) + 2 * self.op()
    }
    fn obs(&self, o: usize, j: usize) -> usize {
        self.weight(o) + 1 + j
    }
    fn gen_base(&self) -> usize {
        self.n_out * self.per_output()
    }
    fn rho_comp(&self, o: usize) -> usize {
        self.gen_base() + o * self.op()
    }
    // interval i spans outputs i → i+1
    fn interval(&self, i: usize, field: usize) -> usize {
        self.gen_base() + self.n_out * self.op() + (4 * i + field) * self.op()
    }
    fn len(&self) -> usize {
        let base = self.gen_base();
        if self.generator {
            base + self.n_out * self.op() + 4 * self.n_out.saturating_sub(1) * self.op()
        } else {
            base
        }
    }
}

fn write_op(buf: &mut [f64], at: usize, op: &Operator) {
    for (k, z) in op.entries().iter().enumerate() {
        buf[at + 2 * k] = z.re;
        buf[at + 2 * k + 1] = z.im;
    }
}

fn read_op(buf: &[f64], at: usize, dim: usize) -> Operator {
    Operator::from_fn(dim, |i, j| {
        let k = i * dim + j;
        C64::new(buf[at + 2 * k], buf[at + 2 * k + 1])
    })
}

enum State {
    Vector(StateVector),
    Density(DensityMatrix),
}

impl State {
    fn rho(&self) -> Operator {
        match self {
            State::Vector(v) => outer(v),
            State::Density(d) => d.as_operator().clone(),
        }
    }
}

struct Setup<'a> {
    model: &'a ModelSpec,
    grid: TimeGrid,
    opts: &'a RunOptions,
    steps: Vec<usize>,
    layout: Layout,
}

// `k` is both the step index and the output schedule key
#[allow(clippy::needless_range_loop)]
fn run_trajectory(setup: &Setup<'_>, stream_index: u64, seeds: SeedPolicy, sample: &mut [f64]) -> Result<()> {
    let Setup {
        model,
        grid,
        opts,
        steps,
        layout,
    } = setup;
    let dt = grid.dt();
    let gamma = model.gamma();
    let dim = model.dim();
    let dw = sample_wiener(grid, &mut seeds.stream(stream_index));

    let mut state = match opts.mode {
        Mode::Linear | Mode::Nonlinear => State::Vector(opts.initial.clone()),
        Mode::DensityLinear | Mode::Sme => State::Density(DensityMatrix::pure(&opts.initial)),
    };
    let mut x = 0.0;
    let mut next_out = 0usize;

    let generator = layout.generator;
    let mut compensator = Operator::zeros(dim);
    let mut gen_cumulative = Operator::zeros(dim);
    let mut y_prev = Operator::zeros(dim);
    let mut int_rho = Operator::zeros(dim);
    let mut int_xrho = Operator::zeros(dim);
    let mut int_gen = Operator::zeros(dim);

    for k in 0..=grid.n_steps() {
        let need_rho = generator || steps.get(next_out) == Some(&k);
        let rho = if need_rho { Some(state.rho()) } else { None };

        if steps.get(next_out) == Some(&k) {
            let o = next_out;
            let rho = rho.as_ref().expect("computed above");
            write_op(sample, layout.rho(o), rho);
            write_op(sample, layout.xrho(o), &rho.scale_re(x));
            sample[layout.weight(o)] = rho.trace().re;
            for (j, obs) in opts.observables.iter().enumerate() {
                sample[layout.obs(o, j)] = (&obs.operator * rho).trace().re;
            }
            if generator {
                let comp_rho = rho - &compensator;
                write_op(sample, layout.rho_comp(o), &comp_rho);
                let y = &comp_rho - &gen_cumulative;
                if o > 0 {
                    let i = o - 1;
                    write_op(sample, layout.interval(i, 0), &int_rho);
                    write_op(sample, layout.interval(i, 1), &int_xrho);
                    write_op(sample, layout.interval(i, 2), &int_gen);
                    write_op(sample, layout.interval(i, 3), &(&y - &y_prev));
                    int_rho = Operator::zeros(dim);
                    int_xrho = Operator::zeros(dim);
                    int_gen = Operator::zeros(dim);
                }
                y_prev = y;
            }
            next_out += 1;
        }
        if k == grid.n_steps() || next_out == steps.len() {
            break;
        }

        let dwk = dw[k];
        if generator {
            let rho = rho.as_ref().expect("computed above");
            let g = lindblad_apply(model, x, rho)?;
            let b = diffusion_operator(model, x);
            let b_rho = &b * rho;
            let mut m = &b_rho + &b_rho.adjoint();
            m = m.scale_re(dwk);
            m.add_scaled(C64::new(dwk * dwk - dt, 0.0), &(&b_rho * &b.adjoint()));
            compensator = &compensator + &m;
            gen_cumulative.add_scaled(C64::new(dt, 0.0), &g);
            int_rho.add_scaled(C64::new(dt, 0.0), rho);
            int_xrho.add_scaled(C64::new(dt * x, 0.0), rho);
            int_gen.add_scaled(C64::new(dt, 0.0), &g);
        }

        let wrap = |e: Error| Error::AtStep {
            step: k,
            source: Box::new(e),
        };
        state = match (opts.mode, state) {
            (Mode::Linear, State::Vector(psi)) => {
                let next = step_linear(&psi, x, dwk, dt, model).map_err(wrap)?;
                x = ou_step(x, gamma, 0.0, dt, dwk);
                State::Vector(next)
            }
            (Mode::Nonlinear, State::Vector(psi)) => {
                let s = step_nonlinear(&psi, x, dwk, dt, model).map_err(wrap)?;
                x = ou_step(x, gamma, s.m_value, dt, dwk);
                State::Vector(s.state)
            }
            (Mode::DensityLinear, State::Density(r)) => {
                let next = step_density_linear(&r, x, dwk, dt, model).map_err(wrap)?;
                x = ou_step(x, gamma, 0.0, dt, dwk);
                State::Density(next)
            }
            (Mode::Sme, State::Density(r)) => {
                let s = step_sme(&r, x, dwk, dt, model).map_err(wrap)?;
                x = ou_step(x, gamma, s.m_value, dt, dwk);
                State::Density(s.state)
            }
            _ => unreachable!("state representation fixed by mode"),
        };
    }
    Ok(())
}

/// Runs `n_traj` trajectories and reduces them into an [`EnsembleEstimate`].
pub fn run_ensemble(
    model: &ModelSpec,
    grid: &TimeGrid,
    n_traj: usize,
    seeds: SeedPolicy,
    opts: &RunOptions,
) -> Result<EnsembleEstimate> {
    if n_traj < 2 {
        return Err(Error::InvalidArgument(
            "an ensemble needs at least two trajectories".into(),
        ));
    }
    check_stability(model.gamma(), grid.dt())?;
    if opts.initial.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            op: "initial state",
            left: model.dim(),
            right: opts.initial.dim(),
        });
    }
    let norm_sq = opts.initial.norm_sq();
    if (norm_sq - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm_sq });
    }
    if opts.mode == Mode::DensityLinear && model.kind() != ModelKind::RandomHamiltonian {
        return Err(Error::WrongModelKind {
            expected: ModelKind::RandomHamiltonian.as_str(),
            found: model.kind().as_str(),
        });
    }
    for obs in &opts.observables {
        if obs.operator.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                op: "observable",
                left: model.dim(),
                right: obs.operator.dim(),
            });
        }
    }
    let steps = output_steps(grid, &opts.output_times)?;
    let dim = model.dim();
    let layout = Layout {
        d2: dim * dim,
        n_out: steps.len(),
        n_obs: opts.observables.len(),
        generator: opts.record_generator && opts.mode == Mode::Linear,
    };
    let setup = Setup {
        model,
        grid: *grid,
        opts,
        steps,
        layout,
    };

    let parts = par_blocks(n_traj, |range| {
        let mut acc = Moments::new(setup.layout.len());
        let mut sample = vec![0.0; setup.layout.len()];
        let mut failures = 0usize;
        for i in range {
            match run_trajectory(&setup, i as u64, seeds, &mut sample) {
                Ok(()) => acc.push(&sample),
                Err(_) => failures += 1,
            }
        }
        (acc, failures)
    });
    let n_failed: usize = parts.iter().map(|p| p.1).sum();
    if n_failed * 100 > n_traj {
        return Err(Error::TooManyFailures {
            failed: n_failed,
            total: n_traj,
        });
    }
    let acc = reduce_pairwise(parts.into_iter().map(|p| p.0).collect()).expect("n_traj >= 2");
    Ok(assemble(setup, acc, n_traj, n_failed, seeds))
}

fn assemble(setup: Setup<'_>, acc: Moments, n_traj: usize, n_failed: usize, seeds: SeedPolicy) -> EnsembleEstimate {
    let Setup {
        grid,
        opts,
        steps,
        layout,
        model,
    } = setup;
    let dim = model.dim();
    let mean = acc.mean();
    let se = acc.stderr();
    let n_out = steps.len();

    let mut eta = Vec::with_capacity(n_out);
    let mut eta_stderr = Vec::with_capacity(n_out);
    let mut c = Vec::with_capacity(n_out);
    let mut c_stderr = Vec::with_capacity(n_out);
    let mut mean_weight = Vec::with_capacity(n_out);
    let mut weight_stderr = Vec::with_capacity(n_out);
    for o in 0..n_out {
        eta.push(DensityMatrix::from_operator_unchecked(read_op(
            mean,
            layout.rho(o),
            dim,
        )));
        eta_stderr.push(read_op(&se, layout.rho(o), dim));
        c.push(read_op(mean, layout.xrho(o), dim));
        c_stderr.push(read_op(&se, layout.xrho(o), dim));
        mean_weight.push(mean[layout.weight(o)]);
        weight_stderr.push(se[layout.weight(o)]);
    }
    let observables = opts
        .observables
        .iter()
        .enumerate()
        .map(|(j, obs)| ObservableSeries {
            name: obs.name.clone(),
            operator: obs.operator.clone(),
            mean: (0..n_out).map(|o| mean[layout.obs(o, j)]).collect(),
            stderr: (0..n_out).map(|o| se[layout.obs(o, j)]).collect(),
        })
        .collect();
    let times: Vec<f64> = steps.iter().map(|&k| grid.time(k)).collect();

    let generator = layout.generator.then(|| GeneratorRecord {
        eta_compensated: (0..n_out).map(|o| read_op(mean, layout.rho_comp(o), dim)).collect(),
        intervals: (0..n_out.saturating_sub(1))
            .map(|i| IntervalRecord {
                t_start: times[i],
                t_end: times[i + 1],
                eta_integral: read_op(mean, layout.interval(i, 0), dim),
                c_integral: read_op(mean, layout.interval(i, 1), dim),
                generator_integral: read_op(mean, layout.interval(i, 2), dim),
                increment_stderr: read_op(&se, layout.interval(i, 3), dim),
            })
            .collect(),
    });

    EnsembleEstimate {
        grid,
        mode: opts.mode,
        seeds,
        n_traj,
        n_failed,
        times,
        steps,
        eta,
        eta_stderr,
        c,
        c_stderr,
        mean_weight,
        weight_stderr,
        observables,
        generator,
    }
}

/// One time point of a pass/fail statistic.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckPoint {
    pub t: f64,
    pub value: f64,
    pub reference: f64,
    pub stderr: f64,
    /// Allowed `|value − reference|`.
    pub allowed: f64,
    pub pass: bool,
}

impl CheckPoint {
    fn new(t: f64, value: f64, reference: f64, stderr: f64, allowed: f64) -> Self {
        Self {
            t,
            value,
            reference,
            stderr,
            allowed,
            pass: (value - reference).abs() <= allowed,
        }
    }

    /// `|value − reference| / allowed`; ≤ 1 means pass.
    pub fn excess_ratio(&self) -> f64 {
        let dev = (self.value - self.reference).abs();
        if self.allowed > 0.0 {
            dev / self.allowed
        } else if dev == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub points: Vec<CheckPoint>,
}

impl CheckReport {
    pub fn pass(&self) -> bool {
        self.points.iter().all(|p| p.pass)
    }

    pub fn worst_ratio(&self) -> f64 {
        self.points.iter().map(CheckPoint::excess_ratio).fold(0.0, f64::max)
    }
}

fn require_reference_measure(est: &EnsembleEstimate) -> Result<()> {
    match est.mode {
        Mode::Linear | Mode::DensityLinear => Ok(()),
        other => Err(Error::WrongMode {
            expected: "linear",
            found: other.as_str(),
        }),
    }
}

/// `|E_Q[‖ψ_t‖²] − 1| ≤ 3·stderr + c_disc·dt` at every output time.
pub fn martingale_check(est: &EnsembleEstimate, c_disc: f64) -> Result<CheckReport> {
    require_reference_measure(est)?;
    let dt = est.grid.dt();
    let points = est
        .times
        .iter()
        .zip(est.mean_weight.iter().zip(&est.weight_stderr))
        .map(|(&t, (&w, &se))| CheckPoint::new(t, w, 1.0, se, 3.0 * se + c_disc * dt))
        .collect();
    Ok(CheckReport { points })
}

/// `Tr(O·η_t)` with standard errors. Observables recorded during the run get
/// exact per-trajectory standard errors; otherwise the entrywise errors of
/// `η` are propagated as the bound `Σ|O_ji|·|se(η_ij)|`.
pub fn observable_series(est: &EnsembleEstimate, observable: &Operator) -> Result<Vec<(f64, f64, f64)>> {
    if observable.dim() != est.dim() {
        return Err(Error::DimensionMismatch {
            op: "observable_series",
            left: est.dim(),
            right: observable.dim(),
        });
    }
    let residual = hermitian_residual(observable);
    if residual > tau_herm(observable) {
        return Err(Error::NotHermitian {
            name: "observable".into(),
            residual,
        });
    }
    if let Some(rec) = est.observables.iter().find(|o| &o.operator == observable) {
        return Ok(est
            .times
            .iter()
            .zip(rec.mean.iter().zip(&rec.stderr))
            .map(|(&t, (&m, &s))| (t, m, s))
            .collect());
    }
    let d = est.dim();
    Ok(est
        .times
        .iter()
        .enumerate()
        .map(|(o, &t)| {
            let mean = (observable * est.eta[o].as_operator()).trace().re;
            let mut se = 0.0;
            for i in 0..d {
                for j in 0..d {
                    se += observable[(j, i)].norm() * est.eta_stderr[o][(i, j)].norm();
                }
            }
            (t, mean, se)
        })
        .collect())
}

/// Two-sided comparison of the Girsanov-weighted reference estimate with the
/// physical-measure estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct GirsanovReport {
    /// `value` = weighted-Q estimate, `reference` = physical estimate,
    /// `stderr` = combined standard error.
    pub check: CheckReport,
    pub reference_estimate: EnsembleEstimate,
    pub physical_estimate: EnsembleEstimate,
}

/// Seeds label of the reference-measure side of [`girsanov_crosscheck`].
pub const GIRSANOV_Q_LABEL: u64 = 1;
/// Seeds label of the physical side of [`girsanov_crosscheck`].
pub const GIRSANOV_P_LABEL: u64 = 2;

/// Compares `E_Q[‖ψ_t‖²·⟨ψ̂_t|O ψ̂_t⟩]` (linear runs) with
/// `E_P[⟨ψ̂_t|O ψ̂_t⟩]` (nonlinear runs) at every `t` in `t_list`.
#[allow(clippy::too_many_arguments)]
pub fn girsanov_crosscheck(
    m: &ModelSpec,
    grid: &TimeGrid,
    n_traj: usize,
    seeds: SeedPolicy,
    initial: &StateVector,
    observable: &Operator,
    t_list: &[f64],
    c_disc: f64,
) -> Result<GirsanovReport> {
    let obs = Observable::new("O", observable.clone())?;
    let q_opts = RunOptions::new(Mode::Linear, initial.clone())
        .with_output_times(t_list)
        .with_observable(obs.clone())
        .with_generator_record(false);
    let p_opts = RunOptions::new(Mode::Nonlinear, initial.clone())
        .with_output_times(t_list)
        .with_observable(obs);
    let q = run_ensemble(m, grid, n_traj, seeds.derive(GIRSANOV_Q_LABEL), &q_opts)?;
    let p = run_ensemble(m, grid, n_traj, seeds.derive(GIRSANOV_P_LABEL), &p_opts)?;
    let (qs, ps) = (&q.observables[0], &p.observables[0]);
    let dt = grid.dt();
    let points = q
        .times
        .iter()
        .enumerate()
        .map(|(o, &t)| {
            let se = qs.stderr[o].hypot(ps.stderr[o]);
            CheckPoint::new(t, qs.mean[o], ps.mean[o], se, 3.0 * se + c_disc * dt)
        })
        .collect();
    Ok(GirsanovReport {
        check: CheckReport { points },
        reference_estimate: q,
        physical_estimate: p,
    })
}

/// Residual of the mean-state equation on one output interval.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualPoint {
    /// Interval midpoint.
    pub t: f64,
    /// Max-abs entry of `Δη̃/Δt − (1/Δt)∫RHS dt`.
    pub residual: f64,
    /// Max entrywise standard error of the residual.
    pub stderr: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanEquationReport {
    pub points: Vec<ResidualPoint>,
}

impl MeanEquationReport {
    pub fn pass(&self) -> bool {
        self.points.iter().all(|p| p.pass)
    }

    pub fn max_residual(&self) -> f64 {
        self.points.iter().map(|p| p.residual).fold(0.0, f64::max)
    }

    pub fn worst_ratio(&self) -> f64 {
        self.points
            .iter()
            .map(|p| if p.bound > 0.0 { p.residual / p.bound } else { 0.0 })
            .fold(0.0, f64::max)
    }
}

/// Checks the mean-state equation on every output interval.
///
/// For random-Hamiltonian models the right-hand side is assembled from the
/// time integrals of `η` and `C`:
/// `−i[H, ∫η] − ½[K, [K, ∫η]] + iγ[K, ∫C]`.
/// For general models it is the integrated mean generator `∫E[L(X)[ρ]]`.
/// The left-hand side is the central difference of the drift-compensated
/// mean state across the interval.
pub fn mean_equation_residual(m: &ModelSpec, est: &EnsembleEstimate, c_fd: f64) -> Result<MeanEquationReport> {
    if est.mode != Mode::Linear {
        return Err(Error::WrongMode {
            expected: "linear",
            found: est.mode.as_str(),
        });
    }
    let rec = est
        .generator
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("estimate was run without generator records".into()))?;
    if m.dim() != est.dim() {
        return Err(Error::DimensionMismatch {
            op: "mean_equation_residual",
            left: m.dim(),
            right: est.dim(),
        });
    }
    let dt = est.grid.dt();
    let mut points = Vec::with_capacity(rec.intervals.len());
    for (i, iv) in rec.intervals.iter().enumerate() {
        let span = iv.t_end - iv.t_start;
        let rhs = match m.coupling() {
            Some(k) => {
                let h = &m.h_poly().coefficients()[0];
                let mut r = commutator(h, &iv.eta_integral)?.scale(-I);
                let k_eta = commutator(&k, &iv.eta_integral)?;
                r.add_scaled(C64::new(-0.5, 0.0), &commutator(&k, &k_eta)?);
                r.add_scaled(I * m.gamma(), &commutator(&k, &iv.c_integral)?);
                r
            }
            None => iv.generator_integral.clone(),
        };
        let mut diff = &rec.eta_compensated[i + 1] - &rec.eta_compensated[i];
        diff.add_scaled(-ONE, &rhs);
        let residual = diff.max_abs() / span;
        let stderr = iv
            .increment_stderr
            .entries()
            .iter()
            .map(|z| z.re.max(z.im))
            .fold(0.0, f64::max)
            / span;
        let bound = 3.0 * stderr + c_fd * dt;
        points.push(ResidualPoint {
            t: 0.5 * (iv.t_start + iv.t_end),
            residual,
            stderr,
            bound,
            pass: residual <= bound,
        });
    }
    Ok(MeanEquationReport { points })
}

/// Mean-equation residual at `dt` and `dt/2` with the same seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualTrend {
    pub coarse: MeanEquationReport,
    pub fine: MeanEquationReport,
}

impl ResidualTrend {
    pub fn decreased(&self) -> bool {
        self.fine.max_residual() < self.coarse.max_residual()
    }
}

pub fn mean_equation_trend(
    m: &ModelSpec,
    grid: &TimeGrid,
    n_traj: usize,
    seeds: SeedPolicy,
    opts: &RunOptions,
    c_fd: f64,
) -> Result<ResidualTrend> {
    let mut opts = opts.clone();
    opts.record_generator = true;
    if opts.output_times.is_empty() {
        let steps = output_steps(grid, &[])?;
        opts.output_times = steps.iter().map(|&k| grid.time(k)).collect();
    }
    let coarse_est = run_ensemble(m, grid, n_traj, seeds, &opts)?;
    let fine_grid = grid.refined(2)?;
    let fine_est = run_ensemble(m, &fine_grid, n_traj, seeds, &opts)?;
    Ok(ResidualTrend {
        coarse: mean_equation_residual(m, &coarse_est, c_fd)?,
        fine: mean_equation_residual(m, &fine_est, c_fd)?,
    })
}
