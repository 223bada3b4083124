//! Small dense complex linear algebra.
//!
//! Everything here targets few-level systems (dimension up to ~64), so
//! operators are stored as flat row-major `Vec<Complex64>` and all products
//! are the naive triple loop.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Trace tolerance for normalized density matrices.
pub const TAU_TRACE: f64 = 1e-9;
/// Allowed negative eigenvalue magnitude for density matrices.
pub const TAU_PSD: f64 = 1e-8;

/// Hermiticity tolerance, scaled by the largest entry of `a`.
pub fn tau_herm(a: &Operator) -> f64 {
    1e-10 * (1.0 + a.max_abs())
}

/// A (not necessarily normalized) state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidArgument("state vector must be non-empty".into()));
        }
        if amps.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("state vector".into()));
        }
        Ok(Self { amps })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    /// Computational basis vector `|k⟩`.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim, "basis index {k} out of range for dimension {dim}");
        let mut amps = vec![ZERO; dim];
        amps[k] = ONE;
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|z| z.is_finite())
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            amps: self.amps.iter().map(|z| z * c).collect(),
        }
    }

    /// Returns `self / ‖self‖`. Fails on a zero vector.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n.is_nan() || n <= 0.0 {
            return Err(Error::VanishingNorm { norm: n });
        }
        Ok(self.scale(C64::new(1.0 / n, 0.0)))
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_dim("inner", self.dim(), other.dim())?;
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// Euclidean distance `‖self − other‖`.
    pub fn distance(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn axpy(&mut self, c: C64, x: &StateVector) {
        for (a, b) in self.amps.iter_mut().zip(&x.amps) {
            *a += c * b;
        }
    }
}

impl Index<usize> for StateVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.amps[i]
    }
}

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    dim: usize,
    data: Vec<C64>,
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Self::zeros(dim);
        for i in 0..dim {
            op[(i, i)] = ONE;
        }
        op
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("operator must be non-empty".into()));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    op: "from_rows",
                    left: dim,
                    right: row.len(),
                });
            }
            data.extend(row);
        }
        if data.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("operator".into()));
        }
        Ok(Self { dim, data })
    }

    /// Convenience for real matrices written inline.
    pub fn from_real_rows<const N: usize>(rows: [[f64; N]; N]) -> Self {
        Self::from_fn(N, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let mut op = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            op[(i, i)] = *d;
        }
        op
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Induced 1-norm (max column sum).
    pub fn norm_one(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, c: C64, other: &Operator) {
        assert_eq!(self.dim, other.dim, "add_scaled dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn matmul(&self, other: &Operator) -> Result<Operator> {
        check_dim("matmul", self.dim, other.dim)?;
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &Operator) -> Operator {
        let d = self.dim;
        let mut out = vec![ZERO; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * d..(k + 1) * d];
                let dst = &mut out[i * d..(i + 1) * d];
                for (o, b) in dst.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Operator { dim: d, data: out }
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        check_dim("apply", self.dim, v.dim())?;
        let d = self.dim;
        let amps = (0..d)
            .map(|i| {
                self.data[i * d..(i + 1) * d]
                    .iter()
                    .zip(&v.amps)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        Ok(StateVector { amps })
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Operator) -> Operator {
        let (m, n) = (self.dim, other.dim);
        Operator::from_fn(m * n, |r, c| self[(r / n, c / n)] * other[(r % n, c % n)])
    }

    /// Frobenius-distance style max-abs difference.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Operator {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for Operator {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator addition dimension mismatch");
        Operator {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator subtraction dimension mismatch");
        Operator {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Matrix product. Panics on dimension mismatch; use [`Operator::matmul`]
/// for a checked product.
impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator product dimension mismatch");
        self.mul_unchecked(rhs)
    }
}

/// Density matrix: a Hermitian operator with real trace and no eigenvalue
/// below `-TAU_PSD`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    /// Validates Hermiticity, a real trace and positivity.
    pub fn new(op: Operator) -> Result<Self> {
        let tol = tau_herm(&op);
        let residual = hermitian_residual(&op);
        if residual > tol {
            return Err(Error::NotHermitian {
                name: "density matrix".into(),
                residual,
            });
        }
        if op.trace().im.abs() > tol {
            return Err(Error::InvalidArgument("density matrix trace is not real".into()));
        }
        if !is_positive_semidefinite(&op, TAU_PSD) {
            return Err(Error::InvalidArgument(
                "density matrix has a negative eigenvalue".into(),
            ));
        }
        Ok(Self(op))
    }

    /// Like [`DensityMatrix::new`] and additionally requires unit trace.
    pub fn normalized(op: Operator) -> Result<Self> {
        let tr = op.trace().re;
        if (tr - 1.0).abs() > TAU_TRACE {
            return Err(Error::InvalidArgument(format!(
                "density matrix trace {tr} differs from 1"
            )));
        }
        Self::new(op)
    }

    /// Wraps without validation; used inside integrators where the
    /// structure is preserved by construction.
    pub(crate) fn from_operator_unchecked(op: Operator) -> Self {
        Self(op)
    }

    pub fn pure(psi: &StateVector) -> Self {
        Self(outer(psi))
    }

    pub fn as_operator(&self) -> &Operator {
        &self.0
    }

    pub fn into_operator(self) -> Operator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `Tr ρ²`
    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }
}

impl Index<(usize, usize)> for DensityMatrix {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

fn check_dim(op: &'static str, left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch { op, left, right });
    }
    Ok(())
}

/// `[a, b] = ab − ba`
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    check_dim("commutator", a.dim(), b.dim())?;
    Ok(&(a * b) - &(b * a))
}

/// `{a, b} = ab + ba`
pub fn anticommutator(a: &Operator, b: &Operator) -> Result<Operator> {
    check_dim("anticommutator", a.dim(), b.dim())?;
    Ok(&(a * b) + &(b * a))
}

const EXP_TAYLOR_DEGREE: usize = 20;

/// Matrix exponential by scaling and squaring around a degree-20 Taylor
/// core. The argument is scaled until its 1-norm is at most 1/2, where the
/// truncated series remainder is below `0.5^21 / 21!`.
pub fn matrix_exp(a: &Operator) -> Result<Operator> {
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix_exp argument".into()));
    }
    let norm = a.norm_one();
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = a.scale_re(0.5f64.powi(squarings as i32));

    // Horner: I + A(I + A/2(I + A/3(...)))
    let id = Operator::identity(a.dim());
    let mut acc = id.clone();
    for k in (1..=EXP_TAYLOR_DEGREE).rev() {
        let mut next = (&scaled * &acc).scale_re(1.0 / k as f64);
        next.add_scaled(ONE, &id);
        acc = next;
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    if !acc.is_finite() {
        return Err(Error::NonFinite("matrix_exp result".into()));
    }
    Ok(acc)
}

/// `⟨v|a v⟩`
pub fn expectation(a: &Operator, v: &StateVector) -> Result<C64> {
    let av = a.apply(v)?;
    v.inner(&av)
}

/// `|v⟩⟨v|`
pub fn outer(v: &StateVector) -> Operator {
    let d = v.dim();
    let mut op = Operator::zeros(d);
    for i in 0..d {
        // diagonal written separately so it is exactly real
        op[(i, i)] = C64::new(v[i].norm_sqr(), 0.0);
        for j in (i + 1)..d {
            let z = v[i] * v[j].conj();
            op[(i, j)] = z;
            op[(j, i)] = z.conj();
        }
    }
    op
}

/// Largest entry magnitude of `a − a†`.
pub fn hermitian_residual(a: &Operator) -> f64 {
    let d = a.dim();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Cholesky test on `a + tol·I`: succeeds iff the Hermitian part of `a` has
/// no eigenvalue below `-tol` (up to rounding).
pub fn is_positive_semidefinite(a: &Operator, tol: f64) -> bool {
    let d = a.dim();
    let mut l = Operator::zeros(d);
    for j in 0..d {
        let mut diag = a[(j, j)].re + tol;
        for k in 0..j {
            diag -= l[(j, k)].norm_sqr();
        }
        if diag.is_nan() || diag <= 0.0 {
            return false;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        for i in (j + 1)..d {
            let herm = 0.5 * (a[(i, j)] + a[(j, i)].conj());
            let mut s = herm;
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    true
}

/// Pauli matrices and common qubit states.
pub mod pauli {
    use super::*;

    pub fn identity() -> Operator {
        Operator::identity(2)
    }

    pub fn sigma_x() -> Operator {
        Operator::from_real_rows([[0.0, 1.0], [1.0, 0.0]])
    }

    pub fn sigma_y() -> Operator {
        Operator::from_fn(2, |i, j| match (i, j) {
            (0, 1) => -I,
            (1, 0) => I,
            _ => ZERO,
        })
    }

    pub fn sigma_z() -> Operator {
        Operator::from_real_rows([[1.0, 0.0], [0.0, -1.0]])
    }

    /// Lowering operator `|0⟩⟨1|`.
    pub fn sigma_minus() -> Operator {
        Operator::from_real_rows([[0.0, 1.0], [0.0, 0.0]])
    }

    pub fn ket0() -> StateVector {
        StateVector::basis(2, 0)
    }

    pub fn ket1() -> StateVector {
        StateVector::basis(2, 1)
    }

    /// `(|0⟩ + |1⟩)/√2`
    pub fn ket_plus() -> StateVector {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::from_real(&[h, h]).expect("finite")
    }
}

#[cfg(test)]
mod tests {
    use super::pauli::*;
    use super::*;
    use proptest::prelude::*;

    fn close(a: &Operator, b: &Operator, tol: f64) -> bool {
        a.max_abs_diff(b) <= tol
    }

    #[test]
    fn commutator_pauli() {
        let c = commutator(&sigma_z(), &sigma_x()).unwrap();
        let expected = Operator::from_real_rows([[0.0, 2.0], [-2.0, 0.0]]);
        assert!(close(&c, &expected, 0.0));
        assert!(close(&c, &sigma_y().scale(I * 2.0), 1e-15));
    }

    #[test]
    fn commutator_identity_cases() {
        let a = sigma_y();
        assert_eq!(commutator(&a, &a).unwrap().max_abs(), 0.0);
        let b = Operator::from_fn(3, |i, j| C64::new(i as f64 + 0.3, j as f64 - 1.7));
        assert_eq!(commutator(&Operator::identity(3), &b).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn commutator_dimension_mismatch() {
        let err = commutator(&Operator::identity(2), &Operator::identity(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn exp_of_zero_and_diagonal() {
        assert!(close(
            &matrix_exp(&Operator::zeros(3)).unwrap(),
            &Operator::identity(3),
            0.0
        ));
        let d = Operator::diagonal(&[ONE, C64::new(2.0, 0.0)]);
        let e = matrix_exp(&d).unwrap();
        let expected = Operator::diagonal(&[C64::new(1f64.exp(), 0.0), C64::new(2f64.exp(), 0.0)]);
        assert!(close(&e, &expected, 1e-12 * 2f64.exp()));
    }

    /// Plain truncated power series with many terms and no scaling.
    fn series_exp(a: &Operator, terms: usize) -> Operator {
        let mut term = Operator::identity(a.dim());
        let mut sum = term.clone();
        for k in 1..terms {
            term = (&term * a).scale_re(1.0 / k as f64);
            sum = &sum + &term;
        }
        sum
    }

    #[test]
    fn exp_pauli_rotation() {
        let theta = std::f64::consts::FRAC_PI_2;
        let a = sigma_x().scale(-I * theta);
        let e = matrix_exp(&a).unwrap();
        let expected = sigma_x().scale(-I);
        assert!(close(&e, &expected, 1e-12));
        assert!(close(&e, &series_exp(&a, 60), 1e-12));
    }

    #[test]
    fn exp_large_argument_matches_series() {
        let a = Operator::from_fn(3, |i, j| {
            C64::new(0.7 * i as f64 - 0.4 * j as f64, 0.3 * (i + j) as f64)
        });
        let e = matrix_exp(&a).unwrap();
        let reference = series_exp(&a, 120);
        assert!(e.max_abs_diff(&reference) <= 1e-12 * reference.max_abs());
    }

    #[test]
    fn exp_rejects_non_finite() {
        let mut a = Operator::zeros(2);
        a[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(matrix_exp(&a), Err(Error::NonFinite(_))));
    }

    #[test]
    fn expectation_examples() {
        assert_eq!(expectation(&sigma_z(), &ket0()).unwrap(), ONE);
        assert_eq!(expectation(&sigma_x(), &ket0()).unwrap(), ZERO);
        let e = expectation(&sigma_x(), &ket_plus()).unwrap();
        assert!((e - ONE).norm() < 1e-15);
        assert!(expectation(&sigma_x(), &StateVector::basis(3, 0)).is_err());
    }

    #[test]
    fn outer_examples() {
        assert_eq!(outer(&ket0()), Operator::diagonal(&[ONE, ZERO]));
        let p = outer(&ket_plus());
        assert!(p.entries().iter().all(|z| (z - C64::new(0.5, 0.0)).norm() < 1e-15));
        let two = ket0().scale(C64::new(2.0, 0.0));
        let o = outer(&two);
        assert_eq!(o, Operator::diagonal(&[C64::new(4.0, 0.0), ZERO]));
        assert_eq!(o.trace().re, two.norm_sq());
    }

    #[test]
    fn hermitian_residual_examples() {
        assert_eq!(hermitian_residual(&sigma_y()), 0.0);
        assert_eq!(hermitian_residual(&sigma_minus()), 1.0);
        let eps = 1e-3;
        let a = &sigma_x() + &Operator::identity(2).scale(I * eps);
        assert!((hermitian_residual(&a) - 2.0 * eps).abs() < 1e-15);
    }

    #[test]
    fn psd_check() {
        assert!(is_positive_semidefinite(&outer(&ket_plus()), TAU_PSD));
        assert!(!is_positive_semidefinite(&sigma_z(), TAU_PSD));
        assert!(DensityMatrix::normalized(outer(&ket_plus())).is_ok());
        assert!(DensityMatrix::new(sigma_minus()).is_err());
    }

    fn arb_c64() -> impl Strategy<Value = C64> {
        (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C64::new(re, im))
    }

    fn arb_operator(dim: usize, scale: f64) -> impl Strategy<Value = Operator> {
        prop::collection::vec(arb_c64(), dim * dim).prop_map(move |v| Operator {
            dim,
            data: v.into_iter().map(|z| z * scale).collect(),
        })
    }

    fn arb_hermitian(dim: usize) -> impl Strategy<Value = Operator> {
        arb_operator(dim, 1.0).prop_map(|a| (&a + &a.adjoint()).scale_re(0.5))
    }

    fn arb_unit_state(dim: usize) -> impl Strategy<Value = StateVector> {
        prop::collection::vec(arb_c64(), dim)
            .prop_filter("non-zero", |v| v.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3)
            .prop_map(|v| StateVector::new(v).unwrap().normalized().unwrap())
    }

    proptest! {
        #[test]
        fn commutator_antisymmetric(a in arb_operator(3, 2.0), b in arb_operator(3, 2.0)) {
            let ab = commutator(&a, &b).unwrap();
            let ba = commutator(&b, &a).unwrap();
            prop_assert_eq!(ab.max_abs_diff(&ba.scale_re(-1.0)), 0.0);
        }

        #[test]
        fn exp_inverse(a in arb_operator(3, 1.15)) {
            // |entries| ≤ 1.15·√2, so the 1-norm of a 3×3 matrix stays below 5
            let prod = &matrix_exp(&a).unwrap() * &matrix_exp(&a.scale_re(-1.0)).unwrap();
            prop_assert!(prod.max_abs_diff(&Operator::identity(3)) <= 1e-10);
        }

        #[test]
        fn hermitian_expectation_real(a in arb_hermitian(4), v in arb_unit_state(4)) {
            prop_assert!(expectation(&a, &v).unwrap().im.abs() <= 1e-12);
        }

        #[test]
        fn outer_trace_is_norm(v in prop::collection::vec(arb_c64(), 4)) {
            let v = StateVector::new(v).unwrap();
            let o = outer(&v);
            prop_assert!((o.trace().re - v.norm_sq()).abs() <= 1e-12);
            prop_assert_eq!(hermitian_residual(&o), 0.0);
        }
    }
}
