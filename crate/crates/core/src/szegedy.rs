//! Szegedy quantum walks: the single-step operator `U = S(2Π − I)`, the
//! compiled two-node circuit, evolution traces and periodicity detection.
//!
//! Registers are `|i, j⟩` with `i` the walker position (slow index) and `j`
//! the coin. Nodes are 0-indexed here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::{self, unitary_eigen, ComplexMatrix, MathError, StateVector, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("transition matrix is not column-stochastic; column sums {0:?}")]
    NotStochastic(Vec<f64>),
    #[error("transition matrix has a negative or non-finite entry at ({row}, {col})")]
    BadEntry { row: usize, col: usize },
    #[error("expected {expected} entries, got {got}")]
    BadShape { expected: usize, got: usize },
    #[error("weight {name} = {value} outside [0, 1]")]
    WeightOutOfRange { name: &'static str, value: f64 },
    #[error("initial state has dimension {got}, walk needs {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Math(#[from] MathError),
}

/// Column-stochastic `P`, `P[i][j]` = weight of the edge from `j` to `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    pub const SUM_TOL: f64 = 1e-12;

    /// Row-major entries.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self, WalkError> {
        if entries.len() != n * n || n == 0 {
            return Err(WalkError::BadShape { expected: n * n, got: entries.len() });
        }
        for (k, &v) in entries.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(WalkError::BadEntry { row: k / n, col: k % n });
            }
        }
        let sums: Vec<f64> = (0..n).map(|j| (0..n).map(|i| entries[i * n + j]).sum()).collect();
        if sums.iter().any(|s| (s - 1.0).abs() > Self::SUM_TOL) {
            return Err(WalkError::NotStochastic(sums));
        }
        Ok(TransitionMatrix { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, WalkError> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(WalkError::BadShape { expected: n, got: r.len() });
        }
        Self::new(n, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }
}

/// Two nodes with crossing weights `alpha` (0 → 1) and `beta` (1 → 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoNodeGraph {
    pub alpha: f64,
    pub beta: f64,
}

impl TwoNodeGraph {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, WalkError> {
        for (name, value) in [("alpha", alpha), ("beta", beta)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(WalkError::WeightOutOfRange { name, value });
            }
        }
        Ok(TwoNodeGraph { alpha, beta })
    }

    /// `[[1−α, β], [α, 1−β]]`.
    pub fn transition(&self) -> TransitionMatrix {
        let (a, b) = (self.alpha, self.beta);
        TransitionMatrix { n: 2, entries: vec![1.0 - a, b, a, 1.0 - b] }
    }

    pub fn s(&self) -> f64 {
        self.alpha + self.beta
    }
}

/// Swap `S|i, j⟩ = |j, i⟩` on two `n`-level registers.
pub fn register_swap(n: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            m[(j * n + i, i * n + j)] = C64::new(1.0, 0.0);
        }
    }
    m
}

/// `U = S(2Π − I)` with `Π = Σ_i |φ_i⟩⟨φ_i|`, `|φ_i⟩ = |i⟩ ⊗ Σ_j √P_{j,i} |j⟩`.
pub fn build_usz(p: &TransitionMatrix) -> ComplexMatrix {
    let n = p.n;
    let d = n * n;
    let mut refl = ComplexMatrix::identity(d).scale(C64::new(-1.0, 0.0));
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let v = 2.0 * (p.get(j, i) * p.get(k, i)).sqrt();
                refl[(i * n + j, i * n + k)] += C64::new(v, 0.0);
            }
        }
    }
    register_swap(n).matmul(&refl)
}

/// Gates of the compiled two-node step. Qubit 1 is the position register.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum WalkGate {
    /// `R(θ) = [[cos θ, −sin θ], [sin θ, cos θ]]` on qubit 2.
    Rot { theta: f64 },
    /// `R(θ)` on qubit 2 controlled by qubit 1.
    ControlledRot { theta: f64 },
    /// `Z` on qubit 2.
    Z,
    Swap,
}

fn rot(theta: f64) -> ComplexMatrix {
    let (s, c) = theta.sin_cos();
    ComplexMatrix::from_real_rows(&[[c, -s], [s, c]])
}

impl WalkGate {
    pub fn matrix(&self) -> ComplexMatrix {
        let id = ComplexMatrix::identity(2);
        match *self {
            WalkGate::Rot { theta } => qmath::tensor_product(&id, &rot(theta)),
            WalkGate::ControlledRot { theta } => qmath::gates::controlled(&rot(theta)),
            WalkGate::Z => qmath::tensor_product(&id, &qmath::gates::pauli_z()),
            WalkGate::Swap => qmath::gates::swap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkCircuit {
    /// In application order.
    pub gates: Vec<WalkGate>,
    pub matrix: ComplexMatrix,
}

/// Single-step circuit with `θ1 = arccos √(1−α)` and `θ2 = arccos √β`.
pub fn two_node_circuit(g: &TwoNodeGraph) -> Result<WalkCircuit, WalkError> {
    let g = TwoNodeGraph::new(g.alpha, g.beta)?;
    let t1 = (1.0 - g.alpha).sqrt().acos();
    let t2 = g.beta.sqrt().acos();
    let gates = vec![
        WalkGate::Rot { theta: -t1 },
        WalkGate::ControlledRot { theta: t1 - t2 },
        WalkGate::Z,
        WalkGate::ControlledRot { theta: t2 - t1 },
        WalkGate::Rot { theta: t1 },
        WalkGate::Swap,
    ];
    let matrix = gates.iter().fold(ComplexMatrix::identity(4), |acc, gate| gate.matrix().matmul(&acc));
    Ok(WalkCircuit { gates, matrix })
}

/// `{−1, 1, 1−s−√(s²−2s), 1−s+√(s²−2s)}` with `s = α + β`.
pub fn usz_eigenvalues(g: &TwoNodeGraph) -> [C64; 4] {
    let s = g.s();
    let root = C64::new(s * s - 2.0 * s, 0.0).sqrt();
    let base = C64::new(1.0 - s, 0.0);
    [C64::new(-1.0, 0.0), C64::new(1.0, 0.0), base - root, base + root]
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkStep {
    pub step: usize,
    pub state: StateVector,
    /// Marginal over the coin register.
    pub node_probabilities: Vec<f64>,
}

fn node_marginals(psi: &StateVector, n: usize) -> Vec<f64> {
    psi.amplitudes().chunks(n).map(|c| c.iter().map(|a| a.norm_sqr()).sum()).collect()
}

/// States `u^t ψ0` for `t = 0..=t_max`.
pub fn evolve(u: &ComplexMatrix, psi0: &StateVector, t_max: usize) -> Result<Vec<WalkStep>, WalkError> {
    let d = u.rows();
    if psi0.dim() != d {
        return Err(WalkError::DimensionMismatch { expected: d, got: psi0.dim() });
    }
    psi0.ensure_normalized()?;
    let n = (d as f64).sqrt().round() as usize;
    let mut out = Vec::with_capacity(t_max + 1);
    let mut psi = psi0.clone();
    for step in 0..=t_max {
        if step > 0 {
            psi = psi.apply(u);
        }
        out.push(WalkStep { step, node_probabilities: node_marginals(&psi, n), state: psi.clone() });
    }
    Ok(out)
}

/// `u^t ψ0` through the spectral decomposition, `Σ λ_k^t ⟨v_k|ψ0⟩ |v_k⟩`.
#[derive(Clone, Debug)]
pub struct SpectralEvolution {
    eigenvalues: Vec<C64>,
    vectors: ComplexMatrix,
    coeffs: Vec<C64>,
}

impl SpectralEvolution {
    pub fn new(u: &ComplexMatrix, psi0: &StateVector) -> Result<Self, WalkError> {
        let (eigenvalues, vectors) = unitary_eigen(u)?;
        let coeffs = vectors.adjoint().apply(psi0.amplitudes());
        Ok(SpectralEvolution { eigenvalues, vectors, coeffs })
    }

    pub fn state(&self, t: usize) -> StateVector {
        let scaled: Vec<C64> = self.coeffs.iter().zip(&self.eigenvalues).map(|(c, l)| c * l.powi(t as i32)).collect();
        StateVector::new(self.vectors.apply(&scaled))
    }
}

/// Smallest `n ≤ n_max` with `‖uⁿ − e^{iφ}I‖_max ≤ tol` for the best `φ`.
pub fn detect_period(u: &ComplexMatrix, n_max: usize, tol: f64) -> Option<usize> {
    let id = ComplexMatrix::identity(u.rows());
    let mut power = u.clone();
    for n in 1..=n_max {
        if qmath::global_phase_distance(&power, &id).ok()? <= tol {
            return Some(n);
        }
        power = power.matmul(u);
    }
    None
}

pub const DEFAULT_N_MAX: usize = 256;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Smallest `n ≤ n_max` with `|λⁿ − 1| ≤ tol`.
pub fn root_of_unity_order(lambda: C64, n_max: usize, tol: f64) -> Option<usize> {
    let mut p = lambda;
    for n in 1..=n_max {
        if (p - 1.0).norm() <= tol {
            return Some(n);
        }
        p *= lambda;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{global_phase_distance, unitarity_defect};
    use proptest::prelude::*;

    fn graph(a: f64, b: f64) -> TwoNodeGraph {
        TwoNodeGraph::new(a, b).unwrap()
    }

    fn sorted(mut v: Vec<C64>) -> Vec<C64> {
        v.sort_by(|a, b| a.arg().total_cmp(&b.arg()).then(a.re.total_cmp(&b.re)));
        v
    }

    /// Greedy multiset distance.
    fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
        let mut pool: Vec<C64> = b.to_vec();
        let mut worst: f64 = 0.0;
        for x in a {
            let (k, d) = pool.iter().enumerate().map(|(k, y)| (k, (x - y).norm())).min_by(|p, q| p.1.total_cmp(&q.1)).unwrap();
            worst = worst.max(d);
            pool.remove(k);
        }
        worst
    }

    #[test]
    fn stochastic_validation() {
        assert!(matches!(TransitionMatrix::new(2, vec![0.5, 0.5, 0.6, 0.5]), Err(WalkError::NotStochastic(_))));
        assert!(matches!(TransitionMatrix::new(2, vec![1.5, 0.0, -0.5, 1.0]), Err(WalkError::BadEntry { row: 1, col: 0 })));
        assert!(TransitionMatrix::new(2, vec![0.3, 0.6, 0.7, 0.4]).is_ok());
        assert!(TwoNodeGraph::new(1.2, 0.0).is_err());
    }

    #[test]
    fn crossing_walk_has_period_two() {
        let u = build_usz(&graph(1.0, 1.0).transition());
        let u2 = u.matmul(&u);
        assert!((&u2 - &ComplexMatrix::identity(4)).max_norm() < 1e-10);
    }

    #[test]
    fn half_weights_spectrum() {
        let g = graph(0.5, 0.5);
        let (ev, _) = unitary_eigen(&build_usz(&g.transition())).unwrap();
        let want = [C64::new(-1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)];
        assert!(multiset_distance(&ev, &want) < 1e-10);
        assert!(multiset_distance(&usz_eigenvalues(&g), &want) < 1e-12);
        let (cev, _) = unitary_eigen(&two_node_circuit(&g).unwrap().matrix).unwrap();
        assert!(multiset_distance(&sorted(cev), &sorted(want.to_vec())) < 1e-9);
    }

    #[test]
    fn full_weights_spectrum() {
        let ev = usz_eigenvalues(&graph(1.0, 1.0));
        assert!(multiset_distance(&ev, &[C64::new(-1.0, 0.0), C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(-1.0, 0.0)]) < 1e-12);
    }

    #[test]
    fn three_node_structure() {
        let p = TransitionMatrix::new(3, vec![1.0 / 3.0; 9]).unwrap();
        let u = build_usz(&p);
        assert!(unitarity_defect(&u).unwrap() < 1e-10);
        // elementwise oracle: <a,b|U|c,d> = <b,a|(2Π−I)|c,d>
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        let pi = if b == c { 2.0 * (p.get(a, c) * p.get(d, c)).sqrt() } else { 0.0 };
                        let id = if b == c && a == d { 1.0 } else { 0.0 };
                        assert!((u[(a * 3 + b, c * 3 + d)].re - (pi - id)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn periods_of_the_example_graphs() {
        for (a, b, want) in [(0.25, 0.25, 6), (0.5, 0.5, 4), (0.75, 0.75, 6), (1.0, 1.0, 2), (0.1, 0.9, 4), (0.2, 0.3, 6)] {
            let g = graph(a, b);
            let u = two_node_circuit(&g).unwrap().matrix;
            assert_eq!(detect_period(&u, DEFAULT_N_MAX, DEFAULT_TOL), Some(want), "({a}, {b})");
            let lcm = usz_eigenvalues(&g)
                .iter()
                .map(|&l| root_of_unity_order(l, DEFAULT_N_MAX, DEFAULT_TOL).unwrap())
                .fold(1, lcm);
            assert_eq!(lcm, want);
        }
        assert_eq!(detect_period(&two_node_circuit(&graph(0.43, 0.43)).unwrap().matrix, DEFAULT_N_MAX, DEFAULT_TOL), None);
        assert_eq!(detect_period(&ComplexMatrix::identity(4), 8, 1e-12), Some(1));
    }

    fn lcm(a: usize, b: usize) -> usize {
        fn gcd(a: usize, b: usize) -> usize {
            if b == 0 { a } else { gcd(b, a % b) }
        }
        a / gcd(a, b) * b
    }

    #[test]
    fn evolution_trace_period_and_conservation() {
        let u = two_node_circuit(&graph(0.25, 0.25)).unwrap().matrix;
        let trace = evolve(&u, &StateVector::basis(4, 0), 200).unwrap();
        assert_eq!(trace.len(), 201);
        for s in &trace {
            assert!((s.node_probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for t in 0..194 {
            assert!((trace[t].node_probabilities[0] - trace[t + 6].node_probabilities[0]).abs() < 1e-9);
        }
        assert!((trace[200].state.norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identity_walk_is_constant() {
        let psi = StateVector::basis(4, 1);
        let trace = evolve(&ComplexMatrix::identity(4), &psi, 5).unwrap();
        assert!(trace.iter().all(|s| s.node_probabilities == trace[0].node_probabilities));
        assert!(evolve(&ComplexMatrix::identity(4), &StateVector::basis(2, 0), 1).is_err());
    }

    #[test]
    fn spectral_matches_iteration() {
        let u = build_usz(&graph(0.43, 0.43).transition());
        let psi = StateVector::basis(4, 0);
        let sp = SpectralEvolution::new(&u, &psi).unwrap();
        let trace = evolve(&u, &psi, 50).unwrap();
        for s in &trace {
            assert!(sp.state(s.step).phase_insensitive_infidelity(&s.state) < 1e-10);
        }
    }

    #[test]
    fn circuit_matches_dense_on_grid() {
        for i in 0..=20 {
            for j in 0..=20 {
                let g = graph(i as f64 / 20.0, j as f64 / 20.0);
                let c = two_node_circuit(&g).unwrap().matrix;
                let u = build_usz(&g.transition());
                assert!(global_phase_distance(&c, &u).unwrap() <= 1e-9);
                let (ev, _) = unitary_eigen(&u).unwrap();
                assert!(multiset_distance(&usz_eigenvalues(&g), &ev) <= 1e-8);
            }
        }
    }

    fn stochastic(n: usize) -> impl Strategy<Value = TransitionMatrix> {
        prop::collection::vec(0.01..1.0f64, n * n).prop_map(move |mut w| {
            for j in 0..n {
                let s: f64 = (0..n).map(|i| w[i * n + j]).sum();
                for i in 0..n {
                    w[i * n + j] /= s;
                }
            }
            TransitionMatrix { n, entries: w }
        })
    }

    proptest! {
        #[test]
        fn usz_is_unitary(p in (2usize..=4).prop_flat_map(stochastic)) {
            prop_assert!(unitarity_defect(&build_usz(&p)).unwrap() < 1e-10);
        }

        #[test]
        fn eigenvalues_on_unit_circle(a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
            for l in usz_eigenvalues(&graph(a, b)) {
                prop_assert!((l.norm() - 1.0).abs() < 1e-10);
            }
        }
    }
}
