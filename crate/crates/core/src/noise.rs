//! Wiener increments and the Ornstein-Uhlenbeck driving process.
//!
//! The OU value is advanced with the explicit Euler rule on the *same*
//! increments that drive the state equation:
//!
//! ```text
//! X[0] = 0,   X[k+1] = X[k] − γ·X[k]·dt + dW[k]
//! ```
//!
//! Under the physical measure the increments are those of Ŵ and the drift
//! `m[k]` is added: `X[k+1] = X[k] + (−γ·X[k] + m[k])·dt + dŴ[k]`.
//!
//! Random streams are ChaCha8 generators seeded from a SplitMix64 hash of
//! `(master_seed, trajectory index)`; Gaussian draws use the `rand_distr`
//! ziggurat sampler scaled by `√dt`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stats::{par_blocks, reduce_pairwise, Moments};

/// Random stream type used for every trajectory.
pub type Stream = ChaCha8Rng;

/// Uniform grid `t_k = k·dt`, `k = 0..=n_steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

/// Guard on the stored path length per trajectory.
pub const MAX_STEPS: usize = 1_000_000;

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("dt must be positive and finite, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be positive".into()));
        }
        if n_steps > MAX_STEPS {
            return Err(Error::InvalidGrid(format!(
                "n_steps {n_steps} exceeds the limit of {MAX_STEPS}"
            )));
        }
        Ok(Self { dt, n_steps })
    }

    /// Grid on `[0, horizon]`; `horizon / dt` must be an integer up to 1e-9
    /// relative error.
    pub fn with_horizon(dt: f64, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("dt must be positive and finite, got {dt}")));
        }
        let steps = (horizon / dt).round();
        if steps < 1.0 || ((steps * dt - horizon) / horizon).abs() > 1e-9 {
            return Err(Error::InvalidGrid(format!(
                "horizon {horizon} is not an integer multiple of dt {dt}"
            )));
        }
        Self::new(dt, steps as usize)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Index of the grid point at time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || k > self.n_steps as f64 {
            return None;
        }
        ((k * self.dt - t).abs() <= 1e-9 * self.dt.max(t.abs())).then_some(k as usize)
    }

    /// The same horizon with `dt` divided by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.dt / factor as f64, self.n_steps * factor)
    }
}

/// Derives independent per-trajectory streams from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedPolicy {
    pub master_seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Seed of trajectory `index`. SplitMix64 is a bijection, so distinct
    /// indices always give distinct seeds.
    pub fn stream_seed(&self, index: u64) -> u64 {
        splitmix64(splitmix64(self.master_seed) ^ index)
    }

    pub fn stream(&self, index: u64) -> Stream {
        Stream::seed_from_u64(self.stream_seed(index))
    }

    /// An independent policy for a labelled sub-experiment.
    pub fn derive(&self, label: u64) -> SeedPolicy {
        SeedPolicy::new(splitmix64(self.master_seed ^ splitmix64(label.wrapping_add(0x5eed))))
    }
}

/// `n_steps` independent N(0, dt) draws.
pub fn sample_wiener<R: Rng + ?Sized>(grid: &TimeGrid, stream: &mut R) -> Vec<f64> {
    let sd = grid.dt().sqrt();
    (0..grid.n_steps())
        .map(|_| sd * stream.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Sums consecutive groups of `factor` increments (coarser grid, same path).
pub fn coarsen(dw: &[f64], factor: usize) -> Vec<f64> {
    assert!(
        factor > 0 && dw.len().is_multiple_of(factor),
        "increment count not divisible by factor"
    );
    dw.chunks(factor).map(|c| c.iter().sum()).collect()
}

/// Rejects `γ·dt ≥ 1`, where the explicit OU update stops contracting.
pub fn check_stability(gamma: f64, dt: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be finite and non-negative, got {gamma}"
        )));
    }
    let product = gamma * dt;
    if product >= 1.0 {
        return Err(Error::UnstableGrid { product });
    }
    Ok(())
}

/// One explicit OU update.
#[inline]
pub fn ou_step(x: f64, gamma: f64, drift: f64, dt: f64, dw: f64) -> f64 {
    x + (-gamma * x + drift) * dt + dw
}

/// OU samples under the reference measure, `X[0] = 0`.
pub fn ou_path(dw: &[f64], gamma: f64, grid: &TimeGrid) -> Result<Vec<f64>> {
    if dw.len() != grid.n_steps() {
        return Err(Error::DimensionMismatch {
            op: "ou_path",
            left: grid.n_steps(),
            right: dw.len(),
        });
    }
    check_stability(gamma, grid.dt())?;
    let mut x = Vec::with_capacity(dw.len() + 1);
    let mut cur = 0.0;
    x.push(cur);
    for &d in dw {
        cur = ou_step(cur, gamma, 0.0, grid.dt(), d);
        x.push(cur);
    }
    Ok(x)
}

/// OU samples under the physical measure: increments of Ŵ plus drift `m`.
pub fn ou_path_physical(dw_hat: &[f64], m_values: &[f64], gamma: f64, grid: &TimeGrid) -> Result<Vec<f64>> {
    for (len, op) in [
        (dw_hat.len(), "ou_path_physical(dW)"),
        (m_values.len(), "ou_path_physical(m)"),
    ] {
        if len != grid.n_steps() {
            return Err(Error::DimensionMismatch {
                op,
                left: grid.n_steps(),
                right: len,
            });
        }
    }
    check_stability(gamma, grid.dt())?;
    let mut x = Vec::with_capacity(dw_hat.len() + 1);
    let mut cur = 0.0;
    x.push(cur);
    for (&d, &m) in dw_hat.iter().zip(m_values) {
        cur = ou_step(cur, gamma, m, grid.dt(), d);
        x.push(cur);
    }
    Ok(x)
}

/// `Cov(X_t, X_s)` of the continuous OU process started at 0.
pub fn ou_covariance(t: f64, s: f64, gamma: f64) -> Result<f64> {
    for v in [t, s] {
        if v < 0.0 {
            return Err(Error::NegativeTime(v));
        }
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be non-negative, got {gamma}"
        )));
    }
    let lo = t.min(s);
    if gamma == 0.0 {
        return Ok(lo);
    }
    // e^{−γ|t−s|}(1 − e^{−2γ·min}) / (2γ), written with expm1 for small γ
    Ok(-(-gamma * (t - s).abs()).exp() * (-2.0 * gamma * lo).exp_m1() / (2.0 * gamma))
}

/// Shared-grid noise record of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    pub grid: TimeGrid,
    pub dw: Vec<f64>,
    pub x: Vec<f64>,
}

impl NoisePath {
    pub fn from_increments(grid: TimeGrid, gamma: f64, dw: Vec<f64>) -> Result<Self> {
        let x = ou_path(&dw, gamma, &grid)?;
        Ok(Self { grid, dw, x })
    }

    pub fn sample<R: Rng + ?Sized>(grid: TimeGrid, gamma: f64, stream: &mut R) -> Result<Self> {
        let dw = sample_wiener(&grid, stream);
        Self::from_increments(grid, gamma, dw)
    }
}

/// One row of the empirical covariance table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceRow {
    pub t: f64,
    pub s: f64,
    pub analytic: f64,
    pub empirical: f64,
    pub stderr: f64,
}

impl CovarianceRow {
    pub fn within(&self, n_sigma: f64) -> bool {
        (self.empirical - self.analytic).abs() <= n_sigma * self.stderr
    }
}

/// Monte Carlo estimate of `Cov(X_t, X_s)` for every pair of `times`
/// (grid points of `grid`) over `n_paths` independent OU paths.
pub fn empirical_covariance(
    gamma: f64,
    grid: &TimeGrid,
    times: &[f64],
    n_paths: usize,
    seeds: SeedPolicy,
) -> Result<Vec<CovarianceRow>> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument("need at least two paths".into()));
    }
    check_stability(gamma, grid.dt())?;
    let idx: Vec<usize> = times
        .iter()
        .map(|&t| {
            grid.index_of(t)
                .ok_or_else(|| Error::InvalidArgument(format!("time {t} is not a grid point")))
        })
        .collect::<Result<_>>()?;
    let m = idx.len();
    // layout: X at each time, then X_a·X_b for all ordered pairs
    let len = m + m * m;

    let parts = par_blocks(n_paths, |range| {
        let mut acc = Moments::new(len);
        let mut sample = vec![0.0; len];
        for i in range {
            let mut stream = seeds.stream(i as u64);
            let dw = sample_wiener(grid, &mut stream);
            let x = ou_path(&dw, gamma, grid).expect("validated grid");
            for (a, &ka) in idx.iter().enumerate() {
                sample[a] = x[ka];
                for (b, &kb) in idx.iter().enumerate() {
                    sample[m + a * m + b] = x[ka] * x[kb];
                }
            }
            acc.push(&sample);
        }
        acc
    });
    let acc = reduce_pairwise(parts).expect("n_paths >= 2");
    let mean = acc.mean();
    let se = acc.stderr();

    let mut rows = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            let (t, s) = (times[a], times[b]);
            rows.push(CovarianceRow {
                t,
                s,
                analytic: ou_covariance(t, s, gamma)?,
                empirical: mean[m + a * m + b] - mean[a] * mean[b],
                stderr: se[m + a * m + b],
            });
        }
    }
    Ok(rows)
}
