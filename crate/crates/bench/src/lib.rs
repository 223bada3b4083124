//! Benchmark fixtures shared by the criterion targets in `benches/`.

use ousse_core::linalg::pauli::{sigma_minus, sigma_z};
use ousse_core::model::{make_measurement_model, make_random_hamiltonian};
use ousse_core::{ModelSpec, Operator, OperatorPolynomial};

/// `K = σ_z`, `H = 0`.
pub fn dephasing(gamma: f64) -> ModelSpec {
    make_random_hamiltonian(Operator::zeros(2), sigma_z(), gamma).expect("valid model")
}

/// `H = σ_z/2`, `B(x) = σ_- + 0.3·x·σ_z`.
pub fn damping_with_feedback() -> ModelSpec {
    make_measurement_model(
        OperatorPolynomial::constant(sigma_z().scale_re(0.5)),
        OperatorPolynomial::new(vec![sigma_minus(), sigma_z().scale_re(0.3)]).expect("valid polynomial"),
        1.0,
    )
    .expect("valid model")
}

/// Deterministic dense operator of dimension `d` with 1-norm of order one.
pub fn dense_operator(d: usize) -> Operator {
    Operator::from_fn(d, |i, j| {
        let v = ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5;
        ousse_core::C64::new(v / d as f64, (i as f64 - j as f64) / (4 * d * d) as f64)
    })
}
