//! Euler–Maruyama integrators for the four stochastic equations.
//!
//! * linear state equation under the reference measure Q:
//!   `dψ = (−iH(X) − ½B†B)ψ dt + B(X)ψ dW`
//! * normalized state equation under the physical measure, driven by Ŵ:
//!   `dψ̂ = [B − m/2]ψ̂ dŴ − [iH + m²/8 − (m/2)B + ½B†B]ψ̂ dt`,
//!   `m = ⟨ψ̂|(B† + B)ψ̂⟩`
//! * density form of the random-Hamiltonian linear equation
//! * the nonlinear stochastic master equation
//!
//! In the physical-measure modes the OU value is advanced together with the
//! state: `X[k+1] = X[k] + (−γX[k] + m[k])dt + dŴ[k]` with `m[k]` taken at the
//! start of the step.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{
    anticommutator, commutator, matrix_exp, outer, DensityMatrix, Operator, StateVector, C64, I, TAU_TRACE,
};
use crate::model::{diffusion_operator, drift_operator, girsanov_drift, ModelKind, ModelSpec, NORM_TOL};
use crate::noise::{check_stability, ou_path, ou_step, TimeGrid};

/// Which probability law a path was sampled under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measure {
    /// Reference measure: `W` is a Brownian motion, `X` is OU.
    Reference,
    /// Physical measure: `Ŵ` is a Brownian motion.
    Physical,
}

/// Integration mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Linear,
    Nonlinear,
    DensityLinear,
    Sme,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Linear => "linear",
            Mode::Nonlinear => "nonlinear",
            Mode::DensityLinear => "density_linear",
            Mode::Sme => "sme",
        }
    }

    pub fn measure(&self) -> Measure {
        match self {
            Mode::Linear | Mode::DensityLinear => Measure::Reference,
            Mode::Nonlinear | Mode::Sme => Measure::Physical,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Mode::Linear),
            "nonlinear" => Ok(Mode::Nonlinear),
            "density_linear" => Ok(Mode::DensityLinear),
            "sme" => Ok(Mode::Sme),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

/// Euler–Maruyama step of the linear state equation.
pub fn step_linear(psi: &StateVector, x: f64, dw: f64, dt: f64, m: &ModelSpec) -> Result<StateVector> {
    let drift = drift_operator(m, x).apply(psi)?;
    let noise = diffusion_operator(m, x).apply(psi)?;
    let mut next = psi.clone();
    next.axpy(C64::new(dt, 0.0), &drift);
    next.axpy(C64::new(dw, 0.0), &noise);
    // the weight ‖ψ‖² must stay representable too
    if !next.is_finite() || !next.norm_sq().is_finite() {
        return Err(Error::Overflow);
    }
    Ok(next)
}

/// Result of one normalized-state step.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearStep {
    pub state: StateVector,
    /// Girsanov drift `m` evaluated at the start of the step.
    pub m_value: f64,
    /// Squared norm just before renormalization.
    pub pre_norm_sq: f64,
}

/// Euler–Maruyama step of the normalized state equation followed by
/// renormalization.
pub fn step_nonlinear(psi_hat: &StateVector, x: f64, dw_hat: f64, dt: f64, m: &ModelSpec) -> Result<NonlinearStep> {
    let m_value = girsanov_drift(m, x, psi_hat)?;
    let b_psi = diffusion_operator(m, x).apply(psi_hat)?;
    let mut drift = drift_operator(m, x).apply(psi_hat)?;
    let mut noise = b_psi.clone();
    if m_value != 0.0 {
        // −[m²/8 − (m/2)B]ψ̂
        drift.axpy(C64::new(0.5 * m_value, 0.0), &b_psi);
        drift.axpy(C64::new(-0.125 * m_value * m_value, 0.0), psi_hat);
        noise.axpy(C64::new(-0.5 * m_value, 0.0), psi_hat);
    }
    let mut next = psi_hat.clone();
    next.axpy(C64::new(dt, 0.0), &drift);
    next.axpy(C64::new(dw_hat, 0.0), &noise);
    if !next.is_finite() {
        return Err(Error::Overflow);
    }
    let pre_norm_sq = next.norm_sq();
    if pre_norm_sq.sqrt() < 1e-12 {
        return Err(Error::VanishingNorm {
            norm: pre_norm_sq.sqrt(),
        });
    }
    Ok(NonlinearStep {
        state: next.normalized()?,
        m_value,
        pre_norm_sq,
    })
}

/// Random Lindblad generator
/// `L(x)[ρ] = −i[H(x), ρ] − ½{B†B, ρ} + BρB†`.
pub fn lindblad_apply(m: &ModelSpec, x: f64, rho: &Operator) -> Result<Operator> {
    let h = m.hamiltonian(x);
    let b = diffusion_operator(m, x);
    let b_dag = b.adjoint();
    let mut out = commutator(&h, rho)?.scale(-I);
    out.add_scaled(C64::new(-0.5, 0.0), &anticommutator(&(&b_dag * &b), rho)?);
    out = &out + &(&(&b * rho) * &b_dag);
    Ok(out)
}

fn require_random_hamiltonian(m: &ModelSpec) -> Result<Operator> {
    m.coupling().ok_or(Error::WrongModelKind {
        expected: ModelKind::RandomHamiltonian.as_str(),
        found: m.kind().as_str(),
    })
}

/// Euler–Maruyama step of
/// `dρ = −i[H − γXK, ρ]dt − i[K, ρ]dW − ½[K, [K, ρ]]dt`.
pub fn step_density_linear(rho: &DensityMatrix, x: f64, dw: f64, dt: f64, m: &ModelSpec) -> Result<DensityMatrix> {
    let k = require_random_hamiltonian(m)?;
    let r = rho.as_operator();
    let h = m.hamiltonian(x);
    let k_rho = commutator(&k, r)?;
    let mut next = r.clone();
    next.add_scaled(-I * dt, &commutator(&h, r)?);
    next.add_scaled(-I * dw, &k_rho);
    next.add_scaled(C64::new(-0.5 * dt, 0.0), &commutator(&k, &k_rho)?);
    if !next.is_finite() {
        return Err(Error::Overflow);
    }
    Ok(DensityMatrix::from_operator_unchecked(next))
}

/// Result of one stochastic-master-equation step.
#[derive(Clone, Debug, PartialEq)]
pub struct SmeStep {
    pub state: DensityMatrix,
    pub m_value: f64,
    pub pre_trace: f64,
}

/// Euler–Maruyama step of the nonlinear stochastic master equation
/// followed by trace renormalization.
pub fn step_sme(rho_tilde: &DensityMatrix, x: f64, dw_hat: f64, dt: f64, m: &ModelSpec) -> Result<SmeStep> {
    let tr = rho_tilde.trace();
    if (tr - 1.0).abs() > TAU_TRACE {
        return Err(Error::InvalidArgument(format!("SME state trace {tr} differs from 1")));
    }
    let r = rho_tilde.as_operator();
    let b = diffusion_operator(m, x);
    let b_dag = b.adjoint();
    let m_value = match m.kind() {
        ModelKind::RandomHamiltonian => 0.0,
        ModelKind::Measurement => (&(&b + &b_dag) * r).trace().re,
    };
    let mut next = r.clone();
    next.add_scaled(C64::new(dt, 0.0), &lindblad_apply(m, x, r)?);
    let mut noise = &(&b * r) + &(r * &b_dag);
    if m_value != 0.0 {
        noise.add_scaled(C64::new(-m_value, 0.0), r);
    }
    next.add_scaled(C64::new(dw_hat, 0.0), &noise);
    if !next.is_finite() {
        return Err(Error::Overflow);
    }
    let pre_trace = next.trace().re;
    if pre_trace < 1e-12 {
        return Err(Error::VanishingNorm { norm: pre_trace });
    }
    Ok(SmeStep {
        state: DensityMatrix::from_operator_unchecked(next.scale_re(1.0 / pre_trace)),
        m_value,
        pre_trace,
    })
}

/// Closed-form solution for commuting `H`, `K`:
/// `ψ_t = exp(−i(H·t + X_t·K)) ψ₀`.
pub fn exact_commuting_solution(
    psi0: &StateVector,
    h: &Operator,
    k: &Operator,
    x_t: f64,
    t: f64,
) -> Result<StateVector> {
    let residual = commutator(h, k)?.max_abs();
    if residual > 1e-12 {
        return Err(Error::NonCommuting { residual });
    }
    let mut generator = h.scale_re(t);
    generator.add_scaled(C64::new(x_t, 0.0), k);
    matrix_exp(&generator.scale(-I))?.apply(psi0)
}

/// Full path of a state-vector propagation.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<StateVector>,
    /// `‖ψ_k‖²`; identically 1 in nonlinear mode.
    pub weights: Vec<f64>,
    /// OU samples, length `n_steps + 1`.
    pub x: Vec<f64>,
    /// Increments of `W` (reference) or `Ŵ` (physical).
    pub dw: Vec<f64>,
    /// Girsanov drift per step (nonlinear mode only).
    pub m_record: Vec<f64>,
    /// Squared norm before each renormalization (nonlinear mode only).
    pub pre_norms: Vec<f64>,
    pub measure: Measure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityTrajectory {
    pub grid: TimeGrid,
    pub matrices: Vec<DensityMatrix>,
    pub x: Vec<f64>,
    pub dw: Vec<f64>,
    pub m_record: Vec<f64>,
    pub measure: Measure,
}

fn check_initial(psi0: &StateVector, m: &ModelSpec) -> Result<()> {
    if psi0.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            op: "initial state",
            left: m.dim(),
            right: psi0.dim(),
        });
    }
    let norm_sq = psi0.norm_sq();
    if (norm_sq - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm_sq });
    }
    Ok(())
}

fn check_increments(dw: &[f64], grid: &TimeGrid) -> Result<()> {
    if dw.len() != grid.n_steps() {
        return Err(Error::DimensionMismatch {
            op: "noise increments",
            left: grid.n_steps(),
            right: dw.len(),
        });
    }
    Ok(())
}

fn at_step(step: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::AtStep {
        step,
        source: Box::new(e),
    }
}

/// Linear state equation under Q on the given increments of `W`.
pub fn propagate_linear(psi0: &StateVector, dw: &[f64], m: &ModelSpec, grid: &TimeGrid) -> Result<Trajectory> {
    check_initial(psi0, m)?;
    check_increments(dw, grid)?;
    let x = ou_path(dw, m.gamma(), grid)?;
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    let mut weights = Vec::with_capacity(grid.n_steps() + 1);
    let mut psi = psi0.clone();
    weights.push(psi.norm_sq());
    states.push(psi.clone());
    for k in 0..grid.n_steps() {
        psi = step_linear(&psi, x[k], dw[k], grid.dt(), m).map_err(at_step(k))?;
        weights.push(psi.norm_sq());
        states.push(psi.clone());
    }
    Ok(Trajectory {
        grid: *grid,
        states,
        weights,
        x,
        dw: dw.to_vec(),
        m_record: Vec::new(),
        pre_norms: Vec::new(),
        measure: Measure::Reference,
    })
}

/// Normalized state equation under the physical measure on increments of Ŵ.
pub fn propagate_nonlinear(psi0: &StateVector, dw_hat: &[f64], m: &ModelSpec, grid: &TimeGrid) -> Result<Trajectory> {
    check_initial(psi0, m)?;
    check_increments(dw_hat, grid)?;
    check_stability(m.gamma(), grid.dt())?;
    let n = grid.n_steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut x = Vec::with_capacity(n + 1);
    let mut m_record = Vec::with_capacity(n);
    let mut pre_norms = Vec::with_capacity(n);
    let mut psi = psi0.normalized()?;
    let mut xk = 0.0;
    states.push(psi.clone());
    x.push(xk);
    for (k, &dwk) in dw_hat.iter().enumerate() {
        let step = step_nonlinear(&psi, xk, dwk, grid.dt(), m).map_err(at_step(k))?;
        xk = ou_step(xk, m.gamma(), step.m_value, grid.dt(), dwk);
        psi = step.state;
        m_record.push(step.m_value);
        pre_norms.push(step.pre_norm_sq);
        states.push(psi.clone());
        x.push(xk);
    }
    Ok(Trajectory {
        grid: *grid,
        weights: vec![1.0; n + 1],
        states,
        x,
        dw: dw_hat.to_vec(),
        m_record,
        pre_norms,
        measure: Measure::Physical,
    })
}

fn check_initial_density(rho0: &DensityMatrix, m: &ModelSpec) -> Result<()> {
    if rho0.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            op: "initial density matrix",
            left: m.dim(),
            right: rho0.dim(),
        });
    }
    if (rho0.trace() - 1.0).abs() > TAU_TRACE {
        return Err(Error::NotNormalized { norm_sq: rho0.trace() });
    }
    Ok(())
}

/// Density form of the random-Hamiltonian linear equation under Q.
pub fn propagate_density_linear(
    rho0: &DensityMatrix,
    dw: &[f64],
    m: &ModelSpec,
    grid: &TimeGrid,
) -> Result<DensityTrajectory> {
    require_random_hamiltonian(m)?;
    check_initial_density(rho0, m)?;
    check_increments(dw, grid)?;
    let x = ou_path(dw, m.gamma(), grid)?;
    let mut matrices = Vec::with_capacity(grid.n_steps() + 1);
    let mut rho = rho0.clone();
    matrices.push(rho.clone());
    for k in 0..grid.n_steps() {
        rho = step_density_linear(&rho, x[k], dw[k], grid.dt(), m).map_err(at_step(k))?;
        matrices.push(rho.clone());
    }
    Ok(DensityTrajectory {
        grid: *grid,
        matrices,
        x,
        dw: dw.to_vec(),
        m_record: Vec::new(),
        measure: Measure::Reference,
    })
}

/// Nonlinear stochastic master equation under the physical measure.
pub fn propagate_sme(
    rho0: &DensityMatrix,
    dw_hat: &[f64],
    m: &ModelSpec,
    grid: &TimeGrid,
) -> Result<DensityTrajectory> {
    check_initial_density(rho0, m)?;
    check_increments(dw_hat, grid)?;
    check_stability(m.gamma(), grid.dt())?;
    let n = grid.n_steps();
    let mut matrices = Vec::with_capacity(n + 1);
    let mut x = Vec::with_capacity(n + 1);
    let mut m_record = Vec::with_capacity(n);
    let mut rho = rho0.clone();
    let mut xk = 0.0;
    matrices.push(rho.clone());
    x.push(xk);
    for (k, &dwk) in dw_hat.iter().enumerate() {
        let step = step_sme(&rho, xk, dwk, grid.dt(), m).map_err(at_step(k))?;
        xk = ou_step(xk, m.gamma(), step.m_value, grid.dt(), dwk);
        rho = step.state;
        m_record.push(step.m_value);
        matrices.push(rho.clone());
        x.push(xk);
    }
    Ok(DensityTrajectory {
        grid: *grid,
        matrices,
        x,
        dw: dw_hat.to_vec(),
        m_record,
        measure: Measure::Physical,
    })
}

/// Output of [`propagate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Propagated {
    States(Trajectory),
    Densities(DensityTrajectory),
}

/// Runs the integrator for `mode` from the pure initial state `psi0`.
/// `dw` are increments of `W` (reference modes) or `Ŵ` (physical modes).
pub fn propagate(mode: Mode, psi0: &StateVector, dw: &[f64], m: &ModelSpec, grid: &TimeGrid) -> Result<Propagated> {
    Ok(match mode {
        Mode::Linear => Propagated::States(propagate_linear(psi0, dw, m, grid)?),
        Mode::Nonlinear => Propagated::States(propagate_nonlinear(psi0, dw, m, grid)?),
        Mode::DensityLinear => {
            check_initial(psi0, m)?;
            Propagated::Densities(propagate_density_linear(&DensityMatrix::pure(psi0), dw, m, grid)?)
        }
        Mode::Sme => {
            check_initial(psi0, m)?;
            Propagated::Densities(propagate_sme(&DensityMatrix::pure(psi0), dw, m, grid)?)
        }
    })
}

impl Propagated {
    /// Density matrix at step `k` (`|ψ⟩⟨ψ|` for state paths).
    pub fn density_at(&self, k: usize) -> Operator {
        match self {
            Propagated::States(t) => outer(&t.states[k]),
            Propagated::Densities(t) => t.matrices[k].as_operator().clone(),
        }
    }
}
