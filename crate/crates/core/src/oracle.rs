//! Deterministic reference solutions.
//!
//! Density matrices are vectorized by stacking columns:
//! `vec(ρ)[i + j·d] = ρ[i][j]`. With that convention
//! `vec(AρB) = (Bᵀ ⊗ A)·vec(ρ)`, so the generator
//! `L[ρ] = Dρ + ρD† + BρB†` with `D = −iH − ½B†B` becomes
//!
//! ```text
//! M = I ⊗ D + conj(D) ⊗ I + conj(B) ⊗ B
//! ```

use crate::error::{Error, Result};
use crate::linalg::{hermitian_residual, matrix_exp, tau_herm, DensityMatrix, Operator, C64, I, ONE};

/// Superoperator matrix acting on column-stacked density matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Liouvillian {
    dim: usize,
    matrix: Operator,
}

impl Liouvillian {
    /// Hilbert-space dimension `d` (the matrix is `d² × d²`).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &Operator {
        &self.matrix
    }

    pub fn apply(&self, rho: &Operator) -> Result<Operator> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                op: "Liouvillian::apply",
                left: self.dim,
                right: rho.dim(),
            });
        }
        let v = vectorize(rho);
        let out = self.matrix.apply(&v)?;
        Ok(unvectorize(out.amplitudes(), self.dim))
    }
}

/// Column-stacked vectorization.
pub fn vectorize(rho: &Operator) -> crate::linalg::StateVector {
    let d = rho.dim();
    let mut v = Vec::with_capacity(d * d);
    for j in 0..d {
        for i in 0..d {
            v.push(rho[(i, j)]);
        }
    }
    crate::linalg::StateVector::new(v).expect("finite operator")
}

pub fn unvectorize(v: &[C64], dim: usize) -> Operator {
    Operator::from_fn(dim, |i, j| v[i + j * dim])
}

/// Generator of `ρ ↦ −i[H, ρ] − ½{B†B, ρ} + BρB†` for constant `H`, `B`.
pub fn build_liouvillian(h: &Operator, b: &Operator) -> Result<Liouvillian> {
    if h.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            op: "build_liouvillian",
            left: h.dim(),
            right: b.dim(),
        });
    }
    let residual = hermitian_residual(h);
    if residual > tau_herm(h) {
        return Err(Error::NotHermitian {
            name: "H".into(),
            residual,
        });
    }
    let d = h.dim();
    let id = Operator::identity(d);
    let mut drift = h.scale(-I);
    drift.add_scaled(C64::new(-0.5, 0.0), &(&b.adjoint() * b));
    let mut m = id.kron(&drift);
    m.add_scaled(ONE, &drift.conj().kron(&id));
    m.add_scaled(ONE, &b.conj().kron(b));
    Ok(Liouvillian { dim: d, matrix: m })
}

/// `unvec(exp(t·M)·vec(ρ₀))`
pub fn propagate_lindblad(l: &Liouvillian, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    if rho0.dim() != l.dim {
        return Err(Error::DimensionMismatch {
            op: "propagate_lindblad",
            left: l.dim,
            right: rho0.dim(),
        });
    }
    let prop = matrix_exp(&l.matrix.scale_re(t))?;
    let v = prop.apply(&vectorize(rho0.as_operator()))?;
    Ok(DensityMatrix::from_operator_unchecked(unvectorize(
        v.amplitudes(),
        l.dim,
    )))
}

/// Coherence factor `E[exp(−2i·X_t)] = exp(−2·Var X_t)` of the OU-dephased
/// qubit (`H = 0`, `K = σ_z`). Equals `exp(−(1 − e^{−2γt})/γ)`, or
/// `exp(−2t)` at `γ = 0`.
pub fn dephasing_coherence(t: f64, gamma: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be non-negative, got {gamma}"
        )));
    }
    if gamma == 0.0 {
        return Ok((-2.0 * t).exp());
    }
    // (1 − e^{−2γt})/γ = −expm1(−2γt)/γ
    Ok(((-2.0 * gamma * t).exp_m1() / gamma).exp())
}
