//! Dense complex linear algebra over the small spaces used by the simulator
//! (dimension 2, 4, 8 and 16).
//!
//! Two-qubit operators use the `|q1 q2>` ordering with `q1` the slow index, so
//! `tensor_product(a, b)` places `a` on the first qubit.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::ops::{Add, Index, IndexMut, Mul, Sub};
use thiserror::Error;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Unitarity and hermiticity tolerance.
pub const UNITARY_TOL: f64 = 1e-10;
/// Tolerance for equality of reconstructed operators.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;
/// Slack allowed on eigenvalues of positive semidefinite matrices.
pub const PSD_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: String, right: String },
    #[error("state is not normalized (norm^2 = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("expected {expected} entries, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("eigendecomposition did not converge")]
    NoConvergence,
}

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, MathError> {
        if data.len() != rows * cols {
            return Err(MathError::BadLength { expected: rows * cols, got: data.len() });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(MathError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for
    /// literals.
    pub fn from_rows<R: AsRef<[C64]>>(rows: &[R]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), n_cols, "ragged matrix literal");
            data.extend_from_slice(r.as_ref());
        }
        Self { rows: n_rows, cols: n_cols, data }
    }

    pub fn from_real_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let complex: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.as_ref().iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&complex)
    }

    pub fn diag(entries: &[C64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &z) in entries.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| f(z)).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "apply dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (self - &self.adjoint()).max_norm()
    }

    /// Determinant by LU factorization.
    pub fn determinant(&self) -> C64 {
        assert!(self.is_square());
        self.to_nalgebra().determinant()
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out[(i, j)] = m[(i, j)];
            }
        }
        out
    }

    /// Block `(bi, bj)` of size `size x size`.
    pub fn block(&self, bi: usize, bj: usize, size: usize) -> Self {
        let mut out = Self::zeros(size, size);
        for i in 0..size {
            for j in 0..size {
                out[(i, j)] = self[(bi * size + i, bj * size + j)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Mul for ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: ComplexMatrix) -> ComplexMatrix {
        self.matmul(&rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Kronecker product. The first factor indexes the most significant block.
pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ra, ca, rb, cb) = (a.rows, a.cols, b.rows, b.cols);
    let mut out = ComplexMatrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let s = a[(i, j)];
            for k in 0..rb {
                let dst = &mut out.data[(i * rb + k) * ca * cb + j * cb..][..cb];
                for (d, &x) in dst.iter_mut().zip(b.row(k)) {
                    *d = s * x;
                }
            }
        }
    }
    out
}

/// Max-norm of `u^dagger u - I`.
pub fn unitarity_defect(u: &ComplexMatrix) -> Result<f64, MathError> {
    if !u.is_square() {
        return Err(MathError::NotSquare { rows: u.rows, cols: u.cols });
    }
    let g = u.adjoint().matmul(u);
    Ok((&g - &ComplexMatrix::identity(u.rows)).max_norm())
}

/// `min_phi max|u - e^{i phi} v|`.
///
/// The optimal phase is `arg Tr(v^dagger u)`; when that trace vanishes the
/// phase is undetermined and a 360-point grid is scanned instead.
pub fn global_phase_distance(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<f64, MathError> {
    if (u.rows, u.cols) != (v.rows, v.cols) {
        return Err(MathError::DimensionMismatch {
            left: format!("{}x{}", u.rows, u.cols),
            right: format!("{}x{}", v.rows, v.cols),
        });
    }
    let dist = |phi: f64| {
        let ph = C64::from_polar(1.0, phi);
        u.data.iter().zip(&v.data).map(|(a, b)| (a - ph * b).norm()).fold(0.0, f64::max)
    };
    let overlap: C64 = u.data.iter().zip(&v.data).map(|(a, b)| b.conj() * a).sum();
    let scale = u.frobenius_norm() * v.frobenius_norm();
    if overlap.norm() > 1e-12 * scale.max(1e-300) {
        let best = dist(overlap.arg());
        // The trace phase minimizes the Frobenius distance; the max-norm
        // optimum can sit slightly off it, so never report worse than the grid.
        if best < 1e-6 {
            return Ok(best);
        }
        return Ok(best.min(grid_phase_distance(&dist)));
    }
    Ok(grid_phase_distance(&dist))
}

fn grid_phase_distance(dist: &impl Fn(f64) -> f64) -> f64 {
    (0..360).map(|k| dist(2.0 * PI * k as f64 / 360.0)).fold(f64::INFINITY, f64::min)
}

/// Pure state with amplitudes in the computational basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Self {
        Self { amplitudes }
    }

    /// Normalizes the amplitudes; fails on a zero vector.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self, MathError> {
        let n = norm_sqr(&amplitudes);
        if !(n > 0.0) || !n.is_finite() {
            return Err(MathError::NotNormalized { norm_sqr: n });
        }
        let s = 1.0 / n.sqrt();
        Ok(Self { amplitudes: amplitudes.into_iter().map(|z| z * s).collect() })
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut a = vec![ZERO; dim];
        a[index] = ONE;
        Self { amplitudes: a }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= 1e-10
    }

    pub fn ensure_normalized(&self) -> Result<(), MathError> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(MathError::NotNormalized { norm_sqr: self.norm_sqr() })
        }
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn kron(&self, other: &Self) -> Self {
        let mut out = Vec::with_capacity(self.dim() * other.dim());
        for &a in &self.amplitudes {
            for &b in &other.amplitudes {
                out.push(a * b);
            }
        }
        Self { amplitudes: out }
    }

    pub fn apply(&self, op: &ComplexMatrix) -> Self {
        Self { amplitudes: op.apply(&self.amplitudes) }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `|psi><psi|`.
    pub fn projector(&self) -> ComplexMatrix {
        let n = self.dim();
        let mut m = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.amplitudes[i] * self.amplitudes[j].conj();
            }
        }
        m
    }

    /// `1 - |<self|other>|^2 / (|self|^2 |other|^2)`: zero iff the states
    /// agree up to global phase and normalization.
    pub fn phase_insensitive_infidelity(&self, other: &Self) -> f64 {
        let ov = self.inner(other).norm_sqr();
        1.0 - ov / (self.norm_sqr() * other.norm_sqr())
    }

    /// `min_phi max_i |self_i - e^{i phi} other_i|` for states.
    pub fn phase_distance(&self, other: &Self) -> f64 {
        let ov = other.inner(self);
        let ph = if ov.norm() > 1e-300 { C64::from_polar(1.0, ov.arg()) } else { ONE };
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - ph * b).norm())
            .fold(0.0, f64::max)
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Density operator. Constructors do not enforce physicality; use
/// [`DensityMatrix::check_physical`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self, MathError> {
        if !matrix.is_square() {
            return Err(MathError::NotSquare { rows: matrix.rows, cols: matrix.cols });
        }
        Ok(Self { matrix })
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        Self { matrix: psi.projector() }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: ComplexMatrix::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0)) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.matrix).0
    }

    /// Hermitian within 1e-10, eigenvalues above `-1e-9` and unit trace within
    /// 1e-9.
    pub fn check_physical(&self) -> bool {
        self.matrix.hermiticity_defect() <= UNITARY_TOL
            && self.eigenvalues().iter().all(|&l| l >= -PSD_SLACK)
            && (self.trace() - 1.0).abs() <= PSD_SLACK
    }

    /// Trace distance `0.5 * sum |eig(a - b)|`.
    pub fn trace_distance(&self, other: &Self) -> f64 {
        let d = &self.matrix - &other.matrix;
        0.5 * hermitian_eigen(&d).0.iter().map(|l| l.abs()).sum::<f64>()
    }
}

/// `<psi|rho|psi>`.
pub fn state_fidelity(pure: &StateVector, rho: &DensityMatrix) -> Result<f64, MathError> {
    if pure.dim() != rho.dim() {
        return Err(MathError::DimensionMismatch {
            left: format!("state dim {}", pure.dim()),
            right: format!("density dim {}", rho.dim()),
        });
    }
    pure.ensure_normalized()?;
    let rpsi = rho.matrix.apply(pure.amplitudes());
    Ok(pure.amplitudes().iter().zip(&rpsi).map(|(a, b)| a.conj() * b).sum::<C64>().re)
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns.
pub fn hermitian_eigen(h: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let m = h.to_nalgebra();
    let herm = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = h.rows;
    let mut vecs = ComplexMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        for r in 0..n {
            vecs[(r, col)] = eig.eigenvectors[(r, k)];
        }
    }
    (order.iter().map(|&k| eig.eigenvalues[k]).collect(), vecs)
}

/// Eigenvalues of a unitary (more generally, normal) matrix.
///
/// The Hermitian and anti-Hermitian parts commute, so a fixed mixture of the
/// two is diagonalized and the eigenvalues read back as Rayleigh quotients.
pub fn unitary_eigen(u: &ComplexMatrix) -> Result<(Vec<C64>, ComplexMatrix), MathError> {
    if !u.is_square() {
        return Err(MathError::NotSquare { rows: u.rows, cols: u.cols });
    }
    let ud = u.adjoint();
    let herm = (u + &ud).scale(C64::new(0.5, 0.0));
    let anti = (u - &ud).scale(C64::new(0.0, -0.5));
    for &(a, b) in MIXTURES {
        let mix = &herm.scale(C64::new(a, 0.0)) + &anti.scale(C64::new(b, 0.0));
        let (_, vecs) = hermitian_eigen(&mix);
        let d = vecs.adjoint().matmul(u).matmul(&vecs);
        let off = (0..d.rows)
            .flat_map(|i| (0..d.cols).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|ij| d[ij].norm())
            .fold(0.0, f64::max);
        if off <= 1e-9 {
            return Ok(((0..d.rows).map(|i| d[(i, i)]).collect(), vecs));
        }
    }
    Err(MathError::NoConvergence)
}

/// Fixed mixing coefficients for simultaneous diagonalization of commuting
/// pairs. Irrational-looking ratios avoid accidental degeneracies.
pub(crate) const MIXTURES: &[(f64, f64)] = &[
    (1.2602066112249388, 0.22317849046722027),
    (0.5403023058681398, 0.8414709848078965),
    (-0.4161468365471424, 0.9092974268256817),
    (0.3090169943749474, -1.3862943611198906),
    (0.9899924966004454, 0.1411200080598672),
    (-0.6536436208636119, -0.7568024953079282),
];

/// Haar-random unitary via QR of a complex Gaussian matrix with the phase of
/// `R`'s diagonal divided out.
pub fn haar_unitary<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    use rand_distr::StandardNormal;
    let g = DMatrix::<C64>::from_fn(n, n, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
            * FRAC_1_SQRT_2
    });
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    ComplexMatrix::from_nalgebra(&q)
}

/// Haar-random element of SU(n): a Haar unitary divided by `det^(1/n)`.
pub fn haar_special_unitary<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    let u = haar_unitary(n, rng);
    let det = u.determinant();
    u.scale(C64::from_polar(1.0, -det.arg() / n as f64))
}

/// Haar-random pure state.
pub fn random_state<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> StateVector {
    use rand_distr::StandardNormal;
    let amps = (0..dim)
        .map(|_| C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)))
        .collect();
    StateVector::normalized(amps).expect("gaussian vector is nonzero")
}

pub fn to_dvector(v: &[C64]) -> DVector<C64> {
    DVector::from_column_slice(v)
}

/// Single-qubit constants.
pub mod gates {
    use super::*;

    pub fn identity2() -> ComplexMatrix {
        ComplexMatrix::identity(2)
    }

    pub fn pauli_x() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[[0.0, 1.0], [1.0, 0.0]])
    }

    pub fn pauli_y() -> ComplexMatrix {
        ComplexMatrix::from_rows(&[[ZERO, -I], [I, ZERO]])
    }

    pub fn pauli_z() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[[1.0, 0.0], [0.0, -1.0]])
    }

    /// `(I, X, Y, Z)`.
    pub fn paulis() -> [ComplexMatrix; 4] {
        [identity2(), pauli_x(), pauli_y(), pauli_z()]
    }

    pub fn hadamard() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[[FRAC_1_SQRT_2, FRAC_1_SQRT_2], [FRAC_1_SQRT_2, -FRAC_1_SQRT_2]])
    }

    pub fn phase_s() -> ComplexMatrix {
        ComplexMatrix::diag(&[ONE, I])
    }

    pub fn cnot() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
        ])
    }

    pub fn cz() -> ComplexMatrix {
        ComplexMatrix::diag(&[ONE, ONE, ONE, -ONE])
    }

    /// `|0><0| (x) I + |1><1| (x) u`.
    pub fn controlled(u: &ComplexMatrix) -> ComplexMatrix {
        let mut m = ComplexMatrix::identity(4);
        for i in 0..2 {
            for j in 0..2 {
                m[(2 + i, 2 + j)] = u[(i, j)];
            }
        }
        m
    }

    pub fn swap() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
    }

    pub fn iswap() -> ComplexMatrix {
        ComplexMatrix::from_rows(&[
            [ONE, ZERO, ZERO, ZERO],
            [ZERO, ZERO, I, ZERO],
            [ZERO, I, ZERO, ZERO],
            [ZERO, ZERO, ZERO, ONE],
        ])
    }

    pub fn sqrt_swap() -> ComplexMatrix {
        let p = C64::new(0.5, 0.5);
        let m = C64::new(0.5, -0.5);
        ComplexMatrix::from_rows(&[
            [ONE, ZERO, ZERO, ZERO],
            [ZERO, p, m, ZERO],
            [ZERO, m, p, ZERO],
            [ZERO, ZERO, ZERO, ONE],
        ])
    }

    /// Pauli product `sigma_a (x) sigma_b` for basis index `4a + b`.
    pub fn pauli_product(index: usize) -> ComplexMatrix {
        let p = paulis();
        tensor_product(&p[index / 4], &p[index % 4])
    }

    /// Single-qubit state `|0>, |1>, |+>, |+i>` for index 0..4.
    pub fn tomography_qubit_state(index: usize) -> StateVector {
        let h = FRAC_1_SQRT_2;
        match index {
            0 => StateVector::new(vec![ONE, ZERO]),
            1 => StateVector::new(vec![ZERO, ONE]),
            2 => StateVector::new(vec![C64::new(h, 0.0), C64::new(h, 0.0)]),
            3 => StateVector::new(vec![C64::new(h, 0.0), C64::new(0.0, h)]),
            _ => panic!("qubit tomography state index out of range: {index}"),
        }
    }
}
