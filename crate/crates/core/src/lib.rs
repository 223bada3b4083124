//! Non-Markovian quantum trajectories driven by Ornstein-Uhlenbeck noise.
//!
//! The crate integrates linear and normalized stochastic Schrödinger
//! equations and stochastic master equations whose operators depend on an
//! OU process `X_t`, estimates mean states by Monte Carlo, and provides the
//! deterministic references used to verify them.
//!
//! Module map:
//!
//! * [`linalg`] – dense complex operators, matrix exponential
//! * [`noise`] – Wiener increments, OU paths, seeding
//! * [`model`] – operator polynomials in `x` and the derived drift
//! * [`dynamics`] – Euler–Maruyama integrators
//! * [`ensemble`] – Monte Carlo estimates and structural cross-checks
//! * [`oracle`] – Liouvillian propagation and the dephasing law

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod oracle;
pub mod stats;

pub use dynamics::{Measure, Mode, Trajectory};
pub use ensemble::{EnsembleEstimate, RunOptions};
pub use error::{Error, Result};
pub use linalg::{DensityMatrix, Operator, StateVector, C64};
pub use model::{ModelKind, ModelSpec, OperatorPolynomial};
pub use noise::{SeedPolicy, TimeGrid};
