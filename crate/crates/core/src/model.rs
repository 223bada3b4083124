//! Dynamics models with operators that are polynomials in the OU value `x`.
//!
//! A model is fixed by `(γ, H(x), B(x))`. The drift operator of the linear
//! equation is always derived as
//!
//! ```text
//! A(x) − γ·x·B(x) = −i·H(x) − ½·B(x)†B(x)
//! ```
//!
//! which makes `A† + A − γx(B† + B) + B†B = 0` hold identically, so the
//! squared norm of the linear state is a martingale.

use crate::error::{Error, Result};
use crate::linalg::{expectation, hermitian_residual, tau_herm, Operator, StateVector, C64, I, ONE};

/// Maximum supported polynomial degree in `x`.
pub const MAX_DEGREE: usize = 2;

/// `x ↦ Σ_k x^k·M_k`
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorPolynomial {
    coefficients: Vec<Operator>,
}

impl OperatorPolynomial {
    pub fn new(coefficients: Vec<Operator>) -> Result<Self> {
        let Some(first) = coefficients.first() else {
            return Err(Error::InvalidArgument(
                "polynomial needs at least one coefficient".into(),
            ));
        };
        if coefficients.len() > MAX_DEGREE + 1 {
            return Err(Error::DegreeTooHigh(coefficients.len() - 1));
        }
        let dim = first.dim();
        for c in &coefficients {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    op: "OperatorPolynomial",
                    left: dim,
                    right: c.dim(),
                });
            }
            if !c.is_finite() {
                return Err(Error::NonFinite("polynomial coefficient".into()));
            }
        }
        Ok(Self { coefficients })
    }

    pub fn constant(op: Operator) -> Self {
        Self { coefficients: vec![op] }
    }

    pub fn dim(&self) -> usize {
        self.coefficients[0].dim()
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[Operator] {
        &self.coefficients
    }

    pub fn eval(&self, x: f64) -> Operator {
        // Horner
        let mut acc = self.coefficients[self.degree()].clone();
        for c in self.coefficients.iter().rev().skip(1) {
            acc = acc.scale_re(x);
            acc.add_scaled(ONE, c);
        }
        acc
    }

    /// True when every coefficient of degree ≥ 1 is exactly zero.
    pub fn is_constant(&self) -> bool {
        self.coefficients[1..].iter().all(|c| c.max_abs() == 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// `B = −iK`, `H(x) = H − γxK`: unitary random-Hamiltonian evolution.
    RandomHamiltonian,
    /// General `H(x)`, `B(x)`: continuous indirect measurement.
    Measurement,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::RandomHamiltonian => "random_hamiltonian",
            ModelKind::Measurement => "measurement",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    gamma: f64,
    kind: ModelKind,
    h_poly: OperatorPolynomial,
    b_poly: OperatorPolynomial,
    // coefficients of −iH(x) − ½B(x)†B(x), degree ≤ 4
    drift_coefficients: Vec<Operator>,
    drift_shift: C64,
}

fn check_hermitian(op: &Operator, name: &str) -> Result<()> {
    let residual = hermitian_residual(op);
    if residual > tau_herm(op) {
        return Err(Error::NotHermitian {
            name: name.to_string(),
            residual,
        });
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be finite and non-negative, got {gamma}"
        )));
    }
    Ok(())
}

impl ModelSpec {
    fn build(gamma: f64, kind: ModelKind, h_poly: OperatorPolynomial, b_poly: OperatorPolynomial) -> Self {
        let dim = h_poly.dim();
        let hb = h_poly.coefficients();
        let bb = b_poly.coefficients();
        let degree = hb.len().max(2 * bb.len() - 1);
        let mut drift = vec![Operator::zeros(dim); degree];
        for (k, h) in hb.iter().enumerate() {
            drift[k].add_scaled(-I, h);
        }
        for (a, ba) in bb.iter().enumerate() {
            let ba_dag = ba.adjoint();
            for (b, bbb) in bb.iter().enumerate() {
                drift[a + b].add_scaled(C64::new(-0.5, 0.0), &(&ba_dag * bbb));
            }
        }
        Self {
            gamma,
            kind,
            h_poly,
            b_poly,
            drift_coefficients: drift,
            drift_shift: C64::new(0.0, 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.h_poly.dim()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn h_poly(&self) -> &OperatorPolynomial {
        &self.h_poly
    }

    pub fn b_poly(&self) -> &OperatorPolynomial {
        &self.b_poly
    }

    /// `H(x)`
    pub fn hamiltonian(&self, x: f64) -> Operator {
        self.h_poly.eval(x)
    }

    /// `K` of a random-Hamiltonian model (`B = −iK`).
    pub fn coupling(&self) -> Option<Operator> {
        match self.kind {
            ModelKind::RandomHamiltonian => Some(self.b_poly.coefficients()[0].scale(I)),
            ModelKind::Measurement => None,
        }
    }

    /// True when neither `H` nor `B` depends on `x`; the mean state then
    /// obeys a closed Lindblad equation.
    pub fn is_x_independent(&self) -> bool {
        self.h_poly.is_constant() && self.b_poly.is_constant() && self.drift_shift == C64::new(0.0, 0.0)
    }

    /// Test hook: adds `eps·I` to the drift, breaking the norm condition
    /// when `Re eps ≠ 0`.
    pub fn with_drift_perturbation(mut self, eps: C64) -> Self {
        self.drift_shift = eps;
        self
    }

    pub fn drift_perturbation(&self) -> C64 {
        self.drift_shift
    }
}

/// Random-Hamiltonian model: `B = −iK`, `H(x) = H − γ·x·K`.
pub fn make_random_hamiltonian(h: Operator, k: Operator, gamma: f64) -> Result<ModelSpec> {
    check_gamma(gamma)?;
    if h.dim() != k.dim() {
        return Err(Error::DimensionMismatch {
            op: "make_random_hamiltonian",
            left: h.dim(),
            right: k.dim(),
        });
    }
    check_hermitian(&h, "H")?;
    check_hermitian(&k, "K")?;
    let b = k.scale(-I);
    let h_poly = OperatorPolynomial::new(vec![h, k.scale_re(-gamma)])?;
    let b_poly = OperatorPolynomial::constant(b);
    Ok(ModelSpec::build(gamma, ModelKind::RandomHamiltonian, h_poly, b_poly))
}

/// General measurement model with Hermitian-valued `H(x)`.
pub fn make_measurement_model(h_poly: OperatorPolynomial, b_poly: OperatorPolynomial, gamma: f64) -> Result<ModelSpec> {
    check_gamma(gamma)?;
    if h_poly.dim() != b_poly.dim() {
        return Err(Error::DimensionMismatch {
            op: "make_measurement_model",
            left: h_poly.dim(),
            right: b_poly.dim(),
        });
    }
    for (i, c) in h_poly.coefficients().iter().enumerate() {
        check_hermitian(c, &format!("H.coefficients[{i}]"))?;
    }
    Ok(ModelSpec::build(gamma, ModelKind::Measurement, h_poly, b_poly))
}

/// `−i·H(x) − ½·B(x)†B(x)`, equal to `A(x) − γ·x·B(x)`.
pub fn drift_operator(m: &ModelSpec, x: f64) -> Operator {
    let c = &m.drift_coefficients;
    let mut acc = c[c.len() - 1].clone();
    for coeff in c.iter().rev().skip(1) {
        acc = acc.scale_re(x);
        acc.add_scaled(ONE, coeff);
    }
    if m.drift_shift != C64::new(0.0, 0.0) {
        acc.add_scaled(m.drift_shift, &Operator::identity(m.dim()));
    }
    acc
}

/// `B(x)`
pub fn diffusion_operator(m: &ModelSpec, x: f64) -> Operator {
    m.b_poly.eval(x)
}

/// Max-abs entry of `A† + A − γx(B† + B) + B†B` with `A = drift + γx·B`.
pub fn consistency_residual(m: &ModelSpec, x: f64) -> f64 {
    let b = diffusion_operator(m, x);
    let gx = m.gamma * x;
    let mut a = drift_operator(m, x);
    a.add_scaled(C64::new(gx, 0.0), &b);
    let b_dag = b.adjoint();
    let mut r = &a.adjoint() + &a;
    r.add_scaled(C64::new(-gx, 0.0), &(&b_dag + &b));
    r = &r + &(&b_dag * &b);
    r.max_abs()
}

/// Reconstructed `A(x) = drift + γ·x·B(x)`.
pub fn linear_drift_a(m: &ModelSpec, x: f64) -> Operator {
    let mut a = drift_operator(m, x);
    a.add_scaled(C64::new(m.gamma * x, 0.0), &diffusion_operator(m, x));
    a
}

/// Tolerance of the normalization precondition on `psi_hat`.
pub const NORM_TOL: f64 = 1e-9;

/// Girsanov drift `m = ⟨ψ̂|(B† + B)ψ̂⟩`.
pub fn girsanov_drift(m: &ModelSpec, x: f64, psi_hat: &StateVector) -> Result<f64> {
    let norm_sq = psi_hat.norm_sq();
    if (norm_sq - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm_sq });
    }
    if m.kind == ModelKind::RandomHamiltonian {
        return Ok(0.0);
    }
    let b = diffusion_operator(m, x);
    Ok(2.0 * expectation(&b, psi_hat)?.re)
}
