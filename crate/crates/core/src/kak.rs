//! Cartan KAK decomposition of two-qubit gates and the four-term LCU form
//!
//! ```text
//! U = e^{i phi} (P1 (x) P2) exp(-i(k1 XX + k2 YY + k3 ZZ)) (Q1 (x) Q2)
//!   = e^{i phi} sum_i alpha_i (P1 s_i Q1) (x) (P2 s_i Q2)
//! ```
//!
//! The decomposition goes through the magic basis, where local gates become
//! real orthogonal matrices and the nonlocal core is diagonal.

use crate::qmath::{gates, tensor_product, unitarity_defect, ComplexMatrix, C64, MIXTURES, ONE, ZERO};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KakError {
    #[error("input is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },
    #[error("input must be 4x4, got {rows}x{cols}")]
    WrongShape { rows: usize, cols: usize },
    #[error("simultaneous diagonalization did not converge (off-diagonal residual {residual:.3e})")]
    NoConvergence { residual: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KakDecomposition {
    pub p1: ComplexMatrix,
    pub p2: ComplexMatrix,
    pub q1: ComplexMatrix,
    pub q2: ComplexMatrix,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// Coefficients of `sum_i alpha_i s_i (x) s_i` for the core, without the
    /// global phase.
    pub alphas: [C64; 4],
    pub global_phase: f64,
}

/// One term `alpha * (A (x) B)` of a linear combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcuTerm {
    pub alpha: C64,
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
}

const CHAMBER_TOL: f64 = 1e-9;

/// Columns are the magic basis vectors
/// `(|00>+|11>)/sqrt2, i(|00>-|11>)/sqrt2, i(|01>+|10>)/sqrt2, (|01>-|10>)/sqrt2`.
pub fn magic_basis() -> ComplexMatrix {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    let ih = C64::new(0.0, FRAC_1_SQRT_2);
    ComplexMatrix::from_rows(&[
        [h, ih, ZERO, ZERO],
        [ZERO, ZERO, ih, h],
        [ZERO, ZERO, ih, -h],
        [h, -ih, ZERO, ZERO],
    ])
}

/// `exp(-i(k1 XX + k2 YY + k3 ZZ))`, built from its Pauli expansion.
pub fn canonical_core(k1: f64, k2: f64, k3: f64) -> ComplexMatrix {
    let alphas = lcu_coefficients(k1, k2, k3);
    let p = gates::paulis();
    let mut out = ComplexMatrix::zeros(4, 4);
    for (i, a) in alphas.iter().enumerate() {
        out = &out + &tensor_product(&p[i], &p[i]).scale(*a);
    }
    out
}

/// Coefficients of `exp(-i(k1 XX + k2 YY + k3 ZZ)) = sum_i alpha_i s_i (x) s_i`.
pub fn lcu_coefficients(k1: f64, k2: f64, k3: f64) -> [C64; 4] {
    let (s1, c1) = k1.sin_cos();
    let (s2, c2) = k2.sin_cos();
    let (s3, c3) = k3.sin_cos();
    [
        C64::new(c1 * c2 * c3, -s1 * s2 * s3),
        C64::new(c1 * s2 * s3, -s1 * c2 * c3),
        C64::new(s1 * c2 * s3, -c1 * s2 * c3),
        C64::new(s1 * s2 * c3, -c1 * c2 * s3),
    ]
}

pub fn kak_decompose(u: &ComplexMatrix) -> Result<KakDecomposition, KakError> {
    if u.rows() != 4 || u.cols() != 4 {
        return Err(KakError::WrongShape { rows: u.rows(), cols: u.cols() });
    }
    let defect = unitarity_defect(u).map_err(|_| KakError::WrongShape { rows: 4, cols: 4 })?;
    if !(defect <= 1e-8) {
        return Err(KakError::NotUnitary { defect });
    }

    let det = u.determinant();
    let su = u.scale(C64::from_polar(1.0, -det.arg() / 4.0));
    let b = magic_basis();
    let m = b.adjoint().matmul(&su).matmul(&b);
    let mtm = m.transpose().matmul(&m);

    let o = diagonalize_commuting(&mtm)?;
    let oc = real_to_complex(&o);
    let d2 = oc.transpose().matmul(&mtm).matmul(&oc);
    let mut theta: Vec<f64> = (0..4).map(|j| d2[(j, j)].arg() / 2.0).collect();
    let det_d: C64 = theta.iter().map(|&t| C64::from_polar(1.0, t)).product();
    if det_d.re < 0.0 {
        theta[0] += std::f64::consts::PI;
    }
    let dinv = ComplexMatrix::diag(&theta.iter().map(|&t| C64::from_polar(1.0, -t)).collect::<Vec<_>>());
    let x = m.matmul(&oc).matmul(&dinv).map(|z| C64::new(z.re, 0.0));

    let k1_local = b.matmul(&x).matmul(&b.adjoint());
    let k2_local = b.matmul(&oc.transpose()).matmul(&b.adjoint());
    let (p1, p2) = factor_local(&k1_local);
    let (q1, q2) = factor_local(&k2_local);

    let mut d = KakDecomposition {
        p1,
        p2,
        q1,
        q2,
        k1: -(theta[0] + theta[2]) / 2.0,
        k2: -(theta[1] + theta[2]) / 2.0,
        k3: -(theta[0] + theta[1]) / 2.0,
        alphas: [ONE, ZERO, ZERO, ZERO],
        global_phase: 0.0,
    };
    canonicalize(&mut d);
    d.alphas = lcu_coefficients(d.k1, d.k2, d.k3);
    let v = d.unphased_matrix();
    d.global_phase = v.adjoint().matmul(u).trace().arg();
    Ok(d)
}

impl KakDecomposition {
    /// `(P1 (x) P2) core (Q1 (x) Q2)` without the global phase.
    pub fn unphased_matrix(&self) -> ComplexMatrix {
        tensor_product(&self.p1, &self.p2)
            .matmul(&canonical_core(self.k1, self.k2, self.k3))
            .matmul(&tensor_product(&self.q1, &self.q2))
    }

    pub fn matrix(&self) -> ComplexMatrix {
        self.unphased_matrix().scale(C64::from_polar(1.0, self.global_phase))
    }

    pub fn ks(&self) -> [f64; 3] {
        [self.k1, self.k2, self.k3]
    }
}

/// Real orthogonal `O` with `det O = +1` diagonalizing both the real and
/// imaginary parts of a complex symmetric matrix whose parts commute.
fn diagonalize_commuting(s: &ComplexMatrix) -> Result<DMatrix<f64>, KakError> {
    let n = s.rows();
    let re = DMatrix::<f64>::from_fn(n, n, |i, j| 0.5 * (s[(i, j)].re + s[(j, i)].re));
    let im = DMatrix::<f64>::from_fn(n, n, |i, j| 0.5 * (s[(i, j)].im + s[(j, i)].im));
    let mut best = f64::INFINITY;
    for &(a, b) in MIXTURES {
        let mix = &re * a + &im * b;
        let mut o = mix.symmetric_eigen().eigenvectors;
        if o.determinant() < 0.0 {
            o.column_mut(0).neg_mut();
        }
        let r = off_diagonal(&(o.transpose() * &re * &o)).max(off_diagonal(&(o.transpose() * &im * &o)));
        if r <= 1e-12 * (1.0 + re.norm() + im.norm()) {
            return Ok(o);
        }
        best = best.min(r);
    }
    Err(KakError::NoConvergence { residual: best })
}

fn off_diagonal(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                worst = worst.max(m[(i, j)].abs());
            }
        }
    }
    worst
}

fn real_to_complex(o: &DMatrix<f64>) -> ComplexMatrix {
    let data = (0..o.nrows())
        .flat_map(|i| (0..o.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| C64::new(o[(i, j)], 0.0))
        .collect();
    ComplexMatrix::from_vec(o.nrows(), o.ncols(), data).expect("finite orthogonal matrix")
}

/// Splits a 4x4 matrix of the form `a (x) b` into its factors. The scale is
/// shared so that `b` has unit determinant.
pub fn factor_local(k: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let mut best = (0, 0);
    let mut best_norm = -1.0;
    for bi in 0..2 {
        for bj in 0..2 {
            let n = k.block(bi, bj, 2).frobenius_norm();
            if n > best_norm {
                best_norm = n;
                best = (bi, bj);
            }
        }
    }
    let blk = k.block(best.0, best.1, 2);
    let scale = blk.determinant().sqrt();
    let b = blk.scale(scale.inv());
    let mut a = ComplexMatrix::zeros(2, 2);
    let bd = b.adjoint();
    for i in 0..2 {
        for j in 0..2 {
            a[(i, j)] = bd.matmul(&k.block(i, j, 2)).trace() / 2.0;
        }
    }
    (a, b)
}

/// Moves `(k1, k2, k3)` into `pi/4 >= k1 >= k2 >= |k3|`, absorbing each step
/// into the local gates. Phases are dropped; the caller refits the global
/// phase afterwards.
fn canonicalize(d: &mut KakDecomposition) {
    let p = gates::paulis();
    let mut k = [d.k1, d.k2, d.k3];

    // Shift every angle into (-pi/4, pi/4]. k_j -> k_j - n pi/2 costs s_j^n on Q.
    for j in 0..3 {
        let mut n = (k[j] / FRAC_PI_2).round();
        let mut r = k[j] - n * FRAC_PI_2;
        if r <= -FRAC_PI_4 {
            r += FRAC_PI_2;
            n -= 1.0;
        }
        k[j] = r;
        if (n as i64).rem_euclid(2) == 1 {
            shift_q(d, &p[j + 1]);
        }
    }

    // Sort by magnitude, descending.
    for _ in 0..3 {
        for j in 0..2 {
            if k[j].abs() + CHAMBER_TOL * 1e-3 < k[j + 1].abs() {
                swap_axes(d, &mut k, j, j + 1);
            }
        }
    }

    // Signs: flip pairs so k1, k2 >= 0.
    match (k[0] < 0.0, k[1] < 0.0) {
        (true, true) => flip_pair(d, &mut k, 0, 1),
        (true, false) => flip_pair(d, &mut k, 0, 2),
        (false, true) => flip_pair(d, &mut k, 1, 2),
        (false, false) => {}
    }

    // On the k1 = pi/4 face, (pi/4, k2, k3) ~ (pi/4, k2, -k3): prefer k3 >= 0.
    if (k[0] - FRAC_PI_4).abs() <= CHAMBER_TOL && k[2] < 0.0 {
        k[0] -= FRAC_PI_2;
        shift_q(d, &p[1]);
        flip_pair(d, &mut k, 0, 2);
    }
    // With k2 = 0 the sign of k3 = 0 is cosmetic; keep zeros positive.
    for v in &mut k {
        if *v == 0.0 {
            *v = 0.0_f64.abs();
        }
    }
    d.k1 = k[0];
    d.k2 = k[1];
    d.k3 = k[2];
}

/// `core(k) = core(k') * (s (x) s)` up to phase after a quarter-period shift.
fn shift_q(d: &mut KakDecomposition, s: &ComplexMatrix) {
    d.q1 = s.matmul(&d.q1);
    d.q2 = s.matmul(&d.q2);
}

/// Negates `k[a]` and `k[b]` by conjugating the core with `s_l (x) I`, where
/// `s_l` anticommutes with the two axes and commutes with the third.
fn flip_pair(d: &mut KakDecomposition, k: &mut [f64; 3], a: usize, b: usize) {
    let p = gates::paulis();
    let other = 3 - a - b;
    let s = &p[other + 1];
    d.p1 = d.p1.matmul(s);
    d.q1 = s.matmul(&d.q1);
    k[a] = -k[a];
    k[b] = -k[b];
}

/// Exchanges two axes with a local Clifford `W (x) W`:
/// `core(k) = (W^dagger (x) W^dagger) core(k_swapped) (W (x) W)`.
fn swap_axes(d: &mut KakDecomposition, k: &mut [f64; 3], a: usize, b: usize) {
    let h = FRAC_1_SQRT_2;
    let w = match (a.min(b), a.max(b)) {
        (0, 1) => gates::phase_s(),
        (1, 2) => ComplexMatrix::from_rows(&[[C64::new(h, 0.0), C64::new(0.0, -h)], [C64::new(0.0, -h), C64::new(h, 0.0)]]),
        (0, 2) => gates::hadamard(),
        _ => unreachable!("axis pair out of range"),
    };
    let wd = w.adjoint();
    d.p1 = d.p1.matmul(&wd);
    d.p2 = d.p2.matmul(&wd);
    d.q1 = w.matmul(&d.q1);
    d.q2 = w.matmul(&d.q2);
    k.swap(a, b);
}

/// `(alpha_i, P1 s_i Q1, P2 s_i Q2)` for `i = 0..4`.
pub fn lcu_terms(d: &KakDecomposition) -> Vec<LcuTerm> {
    gates::paulis()
        .iter()
        .zip(d.alphas)
        .map(|(s, alpha)| LcuTerm {
            alpha,
            a: d.p1.matmul(s).matmul(&d.q1),
            b: d.p2.matmul(s).matmul(&d.q2),
        })
        .collect()
}

/// `sum_i alpha_i (A_i (x) B_i)`.
pub fn reconstruct_from_terms(terms: &[LcuTerm]) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(4, 4);
    for t in terms {
        out = &out + &tensor_product(&t.a, &t.b).scale(t.alpha);
    }
    out
}

/// Residuals of the four quadratic conditions under which the `U_LC`
/// built from `alphas` is unitary: normalization and the three cross terms.
pub fn coefficient_constraints(a: &[C64; 4]) -> [f64; 4] {
    let cross = |x: C64, y: C64| 2.0 * (x * y.conj()).re;
    [
        a.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0,
        cross(a[0], a[1]) - cross(a[2], a[3]),
        cross(a[0], a[2]) - cross(a[1], a[3]),
        cross(a[0], a[3]) - cross(a[1], a[2]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{global_phase_distance, haar_unitary, haar_special_unitary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn in_chamber(k: [f64; 3]) -> bool {
        let t = 1e-9;
        FRAC_PI_4 + t >= k[0] && k[0] + t >= k[1] && k[1] + t >= k[2].abs()
    }

    #[test]
    fn magic_basis_diagonalizes_core() {
        let (k1, k2, k3) = (0.3, -0.2, 0.7);
        let b = magic_basis();
        let d = b.adjoint().matmul(&canonical_core(k1, k2, k3)).matmul(&b);
        let expect = [-(k1 - k2 + k3), -(-k1 + k2 + k3), -(k1 + k2 - k3), k1 + k2 + k3];
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { C64::from_polar(1.0, expect[i]) } else { ZERO };
                assert!((d[(i, j)] - want).norm() < 1e-14, "({i},{j})");
            }
        }
    }

    #[test]
    fn local_gates_are_real_in_magic_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = magic_basis();
        let a = haar_special_unitary(2, &mut rng);
        let c = haar_special_unitary(2, &mut rng);
        let m = b.adjoint().matmul(&tensor_product(&a, &c)).matmul(&b);
        assert!(m.as_slice().iter().all(|z| z.im.abs() < 1e-12));
    }

    #[test]
    fn core_matches_pauli_projection_oracle() {
        let (k1, k2, k3) = (FRAC_PI_4, FRAC_PI_4, FRAC_PI_4);
        // Oracle: matrix exponential of the commuting sum via eigenbasis of
        // each Pauli product.
        let p = gates::paulis();
        let mut u = ComplexMatrix::identity(4);
        for (j, kj) in [k1, k2, k3].iter().enumerate() {
            let pp = tensor_product(&p[j + 1], &p[j + 1]);
            let e = &ComplexMatrix::identity(4).scale(C64::new(kj.cos(), 0.0)) + &pp.scale(C64::new(0.0, -kj.sin()));
            u = u.matmul(&e);
        }
        let alphas = lcu_coefficients(k1, k2, k3);
        for i in 0..4 {
            let proj = tensor_product(&p[i], &p[i]).adjoint().matmul(&u).trace() / 4.0;
            assert!((proj - alphas[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(lcu_coefficients(0.0, 0.0, 0.0), [ONE, ZERO, ZERO, ZERO]);
        let a = lcu_coefficients(FRAC_PI_4, 0.0, 0.0);
        assert!((a[0] - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((a[1] - C64::new(0.0, -FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!(a[2].norm() < 1e-15 && a[3].norm() < 1e-15);
    }

    #[test]
    fn cnot_lands_on_chamber_corner() {
        let d = kak_decompose(&gates::cnot()).unwrap();
        assert!((d.k1 - FRAC_PI_4).abs() < 1e-9 && d.k2.abs() < 1e-9 && d.k3.abs() < 1e-9, "{:?}", d.ks());
        assert!(global_phase_distance(&d.matrix(), &gates::cnot()).unwrap() < 1e-8);
    }

    #[test]
    fn identity_is_trivial() {
        let d = kak_decompose(&ComplexMatrix::identity(4)).unwrap();
        assert!(d.ks().iter().all(|k| k.abs() < 1e-12));
        for g in [&d.p1, &d.p2, &d.q1, &d.q2] {
            let ph = g[(0, 0)];
            assert!(global_phase_distance(g, &ComplexMatrix::identity(2)).unwrap() < 1e-10, "{ph}");
        }
    }

    #[test]
    fn named_gates_canonical_points() {
        let cases = [
            (gates::swap(), [FRAC_PI_4; 3]),
            (gates::iswap(), [FRAC_PI_4, FRAC_PI_4, 0.0]),
            (gates::sqrt_swap(), [FRAC_PI_4 / 2.0; 3]),
            (gates::cz(), [FRAC_PI_4, 0.0, 0.0]),
        ];
        for (u, want) in cases {
            let d = kak_decompose(&u).unwrap();
            for j in 0..3 {
                assert!((d.ks()[j] - want[j]).abs() < 1e-9, "{:?} vs {:?}", d.ks(), want);
            }
            assert!(global_phase_distance(&d.matrix(), &u).unwrap() < 1e-8);
        }
    }

    #[test]
    fn rejects_non_unitary_and_bad_shape() {
        let m = ComplexMatrix::diag(&[ONE, ONE, ONE, C64::new(2.0, 0.0)]);
        assert!(matches!(kak_decompose(&m), Err(KakError::NotUnitary { .. })));
        assert!(matches!(kak_decompose(&ComplexMatrix::identity(2)), Err(KakError::WrongShape { .. })));
    }

    #[test]
    fn haar_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..300 {
            let u = haar_unitary(4, &mut rng);
            let d = kak_decompose(&u).unwrap();
            assert!(in_chamber(d.ks()), "{:?}", d.ks());
            for g in [&d.p1, &d.p2, &d.q1, &d.q2] {
                assert!(unitarity_defect(g).unwrap() <= 1e-10);
            }
            let back = reconstruct_from_terms(&lcu_terms(&d));
            assert!(global_phase_distance(&back, &u).unwrap() <= 1e-8);
            assert!(global_phase_distance(&d.matrix(), &u).unwrap() <= 1e-8);
            let c = coefficient_constraints(&d.alphas);
            assert!(c[0].abs() <= 1e-10);
            assert!(c[1..].iter().all(|r| r.abs() <= 1e-9));
        }
    }

    #[test]
    fn swap_terms_are_paulis() {
        let d = kak_decompose(&gates::swap()).unwrap();
        let terms = lcu_terms(&d);
        for t in &terms {
            assert!((t.alpha.norm() - 0.5).abs() < 1e-12);
        }
        let p = gates::paulis();
        for (t, s) in terms.iter().zip(&p) {
            assert!(global_phase_distance(&t.a, s).unwrap() < 1e-10, "{:?}", t.a);
            assert!(global_phase_distance(&t.b, s).unwrap() < 1e-10, "{:?}", t.b);
        }
        let back = reconstruct_from_terms(&terms);
        assert!(global_phase_distance(&back, &gates::swap()).unwrap() < 1e-10);
    }

    #[test]
    fn reconstruct_examples() {
        let p = gates::paulis();
        let alphas = [C64::new(0.75, 0.25), C64::new(0.25, -0.25), C64::new(0.25, -0.25), C64::new(0.25, -0.25)];
        let terms: Vec<LcuTerm> =
            (0..4).map(|i| LcuTerm { alpha: alphas[i], a: p[i].clone(), b: p[i].clone() }).collect();
        assert!((&reconstruct_from_terms(&terms) - &gates::sqrt_swap()).max_norm() < 1e-12);
        let zero: Vec<LcuTerm> = terms.iter().map(|t| LcuTerm { alpha: ZERO, ..t.clone() }).collect();
        assert_eq!(reconstruct_from_terms(&zero).max_norm(), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn k_is_local_invariant(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let u = haar_unitary(4, &mut rng);
                let l = tensor_product(&haar_unitary(2, &mut rng), &haar_unitary(2, &mut rng));
                let r = tensor_product(&haar_unitary(2, &mut rng), &haar_unitary(2, &mut rng));
                let k0 = kak_decompose(&u).unwrap().ks();
                let k1 = kak_decompose(&l.matmul(&u).matmul(&r)).unwrap().ks();
                for j in 0..3 {
                    prop_assert!((k0[j] - k1[j]).abs() <= 1e-8, "{:?} vs {:?}", k0, k1);
                }
            }

            #[test]
            fn coefficients_are_normalized(k1 in -10.0..10.0f64, k2 in -10.0..10.0f64, k3 in -10.0..10.0f64) {
                let a = lcu_coefficients(k1, k2, k3);
                let c = coefficient_constraints(&a);
                prop_assert!(c[0].abs() <= 1e-12);
                prop_assert!(c[1..].iter().all(|r| r.abs() <= 1e-12));
            }
        }
    }
}
