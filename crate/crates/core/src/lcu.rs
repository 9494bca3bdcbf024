//! Abstract LCU circuits: the probabilistic ancilla circuit, the deterministic
//! feedforward circuit with a ququard control, and the named-gate library.

use crate::kak::{kak_decompose, lcu_terms, reconstruct_from_terms, KakDecomposition, KakError, LcuTerm};
use crate::qmath::{gates, tensor_product, unitarity_defect, ComplexMatrix, StateVector, C64, I, ONE, ZERO};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LcuError {
    #[error("coefficient constraint `{constraint}` violated by {residual:.3e}")]
    ConstraintViolation { constraint: &'static str, residual: f64 },
    #[error("coefficients are not normalized (sum |a|^2 = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
    #[error("input state is not normalized (norm^2 = {norm_sqr})")]
    InputNotNormalized { norm_sqr: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown gate `{0}`")]
    UnknownGate(String),
    #[error("controlled gate needs a unitary 2x2 target (defect {defect:.3e})")]
    BadTarget { defect: f64 },
    #[error("decomposition does not describe a unitary")]
    NonUnitary,
    #[error(transparent)]
    Kak(#[from] KakError),
}

pub const CONSTRAINT_NAMES: [&str; 4] = ["normalization", "cross(01)-cross(23)", "cross(02)-cross(13)", "cross(03)-cross(12)"];

/// `U_LC` for a four-term decomposition. Its first row is the coefficient
/// list and the remaining rows pair each coefficient with a Pauli correction.
pub fn build_ulc(alphas: &[C64; 4]) -> Result<ComplexMatrix, LcuError> {
    let residuals = crate::kak::coefficient_constraints(alphas);
    if residuals[0].abs() > 1e-9 {
        return Err(LcuError::ConstraintViolation { constraint: CONSTRAINT_NAMES[0], residual: residuals[0].abs() });
    }
    for (name, r) in CONSTRAINT_NAMES.iter().zip(residuals).skip(1) {
        if r.abs() > 1e-8 {
            return Err(LcuError::ConstraintViolation { constraint: name, residual: r.abs() });
        }
    }
    let [a0, a1, a2, a3] = *alphas;
    Ok(ComplexMatrix::from_rows(&[
        [a0, a1, a2, a3],
        [a1, a0, -a3, -a2],
        [a2, -a3, a0, -a1],
        [a3, -a2, -a1, a0],
    ]))
}

/// Unitary whose first row is `first` (unit norm), completed by Gram-Schmidt
/// over the canonical basis vectors in order.
pub fn complete_unitary(first: &[C64]) -> ComplexMatrix {
    let k = first.len();
    let mut rows: Vec<Vec<C64>> = vec![first.to_vec()];
    for e in 0..k {
        if rows.len() == k {
            break;
        }
        let mut v = vec![ZERO; k];
        v[e] = ONE;
        for _ in 0..2 {
            for r in &rows {
                let proj: C64 = r.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, ri) in v.iter_mut().zip(r) {
                    *vi -= proj * ri;
                }
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-8 {
            rows.push(v.into_iter().map(|z| z / n).collect());
        }
    }
    let mut m = ComplexMatrix::zeros(k, k);
    for (i, r) in rows.iter().enumerate() {
        for (j, &z) in r.iter().enumerate() {
            m[(i, j)] = z;
        }
    }
    m
}

/// A linear combination `sum_i c_i V_i` wired as a probabilistic ancilla
/// circuit. The ancilla dimension `k` is the term count rounded up to a
/// power of two; padding terms have zero weight and act as identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcuCircuitSpec {
    pub n_ancilla: usize,
    pub coefficients: Vec<C64>,
    pub operators: Vec<ComplexMatrix>,
    pub ulc: ComplexMatrix,
}

impl LcuCircuitSpec {
    pub fn new(coefficients: Vec<C64>, operators: Vec<ComplexMatrix>) -> Result<Self, LcuError> {
        if coefficients.len() != operators.len() || coefficients.is_empty() {
            return Err(LcuError::Dimension(format!(
                "{} coefficients for {} operators",
                coefficients.len(),
                operators.len()
            )));
        }
        let dim = operators[0].rows();
        if operators.iter().any(|o| o.rows() != dim || o.cols() != dim) {
            return Err(LcuError::Dimension("operators must share one square shape".into()));
        }
        let norm_sqr: f64 = coefficients.iter().map(|z| z.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > 1e-9 {
            return Err(LcuError::NotNormalized { norm_sqr });
        }
        let k = coefficients.len().next_power_of_two().max(2);
        let n_ancilla = k.trailing_zeros() as usize;
        let mut coefficients = coefficients;
        let mut operators = operators;
        coefficients.resize(k, ZERO);
        operators.resize(k, ComplexMatrix::identity(dim));
        let ulc = if k == 4 {
            let a = [coefficients[0], coefficients[1], coefficients[2], coefficients[3]];
            build_ulc(&a).unwrap_or_else(|_| complete_unitary(&coefficients))
        } else {
            complete_unitary(&coefficients)
        };
        Ok(Self { n_ancilla, coefficients, operators, ulc })
    }

    pub fn from_recipe(recipe: &GateRecipe) -> Result<Self, LcuError> {
        Self::new(
            recipe.terms.iter().map(|t| t.alpha).collect(),
            recipe.terms.iter().map(|t| tensor_product(&t.a, &t.b)).collect(),
        )
    }

    /// The four-term circuit for a KAK decomposition, with `U_LC` as built by
    /// [`build_ulc`].
    pub fn from_decomposition(d: &KakDecomposition) -> Result<Self, LcuError> {
        let ulc = build_ulc(&d.alphas)?;
        let terms = lcu_terms(d);
        Ok(Self {
            n_ancilla: 2,
            coefficients: d.alphas.to_vec(),
            operators: terms.iter().map(|t| tensor_product(&t.a, &t.b)).collect(),
            ulc,
        })
    }

    /// Ancilla dimension `k = 2^n_ancilla`.
    pub fn k(&self) -> usize {
        1 << self.n_ancilla
    }

    /// `M = sum_i c_i V_i`.
    pub fn combined_operator(&self) -> ComplexMatrix {
        let dim = self.operators[0].rows();
        let mut m = ComplexMatrix::zeros(dim, dim);
        for (c, v) in self.coefficients.iter().zip(&self.operators) {
            m = &m + &v.scale(*c);
        }
        m
    }
}

/// One ancilla measurement branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub outcome: usize,
    pub probability: f64,
    /// Normalized post-measurement target state; `None` when the branch has
    /// zero probability.
    pub state: Option<StateVector>,
}

/// Runs the probabilistic circuit: uniform ancilla superposition, controlled
/// `V_i`, `U_LC` on the ancilla, then measurement. Outcome `0` is success.
pub fn simulate_probabilistic(spec: &LcuCircuitSpec, input: &StateVector) -> Result<Vec<Branch>, LcuError> {
    let dim = spec.operators[0].rows();
    if input.dim() != dim {
        return Err(LcuError::Dimension(format!("input dim {} vs operator dim {}", input.dim(), dim)));
    }
    if !input.is_normalized() {
        return Err(LcuError::InputNotNormalized { norm_sqr: input.norm_sqr() });
    }
    let k = spec.k();
    let scale = 1.0 / (k as f64).sqrt();
    let images: Vec<Vec<C64>> = spec.operators.iter().map(|v| v.apply(input.amplitudes())).collect();
    Ok((0..k)
        .map(|m| {
            let mut amp = vec![ZERO; dim];
            for (i, img) in images.iter().enumerate() {
                let c = spec.ulc[(m, i)] * scale;
                for (a, x) in amp.iter_mut().zip(img) {
                    *a += c * x;
                }
            }
            branch(m, amp)
        })
        .collect())
}

fn branch(outcome: usize, amp: Vec<C64>) -> Branch {
    let probability: f64 = amp.iter().map(|z| z.norm_sqr()).sum();
    let state = if probability > 1e-24 { StateVector::normalized(amp).ok() } else { None };
    Branch { outcome, probability, state }
}

/// Deterministic circuit on a 16-dimensional (ququard control) x (two
/// qubits) register. Each branch is returned after its `s_j (x) s_j`
/// correction and the final `P1 (x) P2` layer.
pub fn simulate_deterministic(d: &KakDecomposition, input: &StateVector) -> Result<Vec<Branch>, LcuError> {
    if input.dim() != 4 {
        return Err(LcuError::Dimension(format!("input dim {} vs 4", input.dim())));
    }
    if !input.is_normalized() {
        return Err(LcuError::InputNotNormalized { norm_sqr: input.norm_sqr() });
    }
    if unitarity_defect(&d.unphased_matrix()).map_or(true, |x| x > 1e-8) {
        return Err(LcuError::NonUnitary);
    }
    let ulc = build_ulc(&d.alphas)?;
    let p = gates::paulis();
    let paulis2: Vec<ComplexMatrix> = p.iter().map(|s| tensor_product(s, s)).collect();

    let q = tensor_product(&d.q1, &d.q2);
    let h = gates::hadamard();
    let uniform = tensor_product(&h, &h);
    let mut ctrl = ComplexMatrix::zeros(16, 16);
    for (m, s) in paulis2.iter().enumerate() {
        for i in 0..4 {
            for j in 0..4 {
                ctrl[(4 * m + i, 4 * m + j)] = s[(i, j)];
            }
        }
    }
    let i4 = ComplexMatrix::identity(4);
    let circuit = tensor_product(&ulc, &i4)
        .matmul(&ctrl)
        .matmul(&tensor_product(&uniform, &i4))
        .matmul(&tensor_product(&i4, &q));
    let register = StateVector::basis(4, 0).kron(input).apply(&circuit);

    let p12 = tensor_product(&d.p1, &d.p2);
    Ok((0..4)
        .map(|j| {
            let raw = &register.amplitudes()[4 * j..4 * j + 4];
            let corrected = p12.apply(&paulis2[j].apply(raw));
            branch(j, corrected)
        })
        .collect())
}

/// Samples one ancilla outcome of the deterministic circuit.
pub fn sample_deterministic(
    d: &KakDecomposition,
    input: &StateVector,
    seed: u64,
) -> Result<(usize, StateVector), LcuError> {
    let branches = simulate_deterministic(d, input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for b in &branches {
        acc += b.probability;
        if r < acc {
            if let Some(s) = &b.state {
                return Ok((b.outcome, s.clone()));
            }
        }
    }
    let last = branches.into_iter().rev().find(|b| b.state.is_some()).ok_or(LcuError::NonUnitary)?;
    Ok((last.outcome, last.state.expect("checked above")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    Cnot,
    Cz,
    Ch,
    Swap,
    ISwap,
    SqrtSwap,
    /// Controlled-`V` for a 2x2 unitary `V`.
    Cu(ComplexMatrix),
    Ef,
    Es,
}

pub const GATE_NAMES: [&str; 9] = ["CNOT", "CZ", "CH", "SWAP", "ISWAP", "SQRT_SWAP", "CU", "EF", "ES"];

impl Gate {
    /// Parses an uppercase gate name; `CU` needs `target`.
    pub fn parse(name: &str, target: Option<ComplexMatrix>) -> Result<Self, LcuError> {
        Ok(match name.to_ascii_uppercase().as_str() {
            "CNOT" => Gate::Cnot,
            "CZ" => Gate::Cz,
            "CH" => Gate::Ch,
            "SWAP" => Gate::Swap,
            "ISWAP" => Gate::ISwap,
            "SQRT_SWAP" => Gate::SqrtSwap,
            "EF" => Gate::Ef,
            "ES" => Gate::Es,
            "CU" => Gate::Cu(target.ok_or_else(|| LcuError::UnknownGate("CU without target".into()))?),
            _ => return Err(LcuError::UnknownGate(name.to_string())),
        })
    }

    /// The fixed library, without the parametric `CU`.
    pub fn named() -> Vec<Gate> {
        vec![Gate::Cnot, Gate::Cz, Gate::Ch, Gate::Swap, Gate::ISwap, Gate::SqrtSwap, Gate::Ef, Gate::Es]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gate::Cnot => "CNOT",
            Gate::Cz => "CZ",
            Gate::Ch => "CH",
            Gate::Swap => "SWAP",
            Gate::ISwap => "ISWAP",
            Gate::SqrtSwap => "SQRT_SWAP",
            Gate::Cu(_) => "CU",
            Gate::Ef => "EF",
            Gate::Es => "ES",
        }
    }

    pub fn is_unitary(&self) -> bool {
        !matches!(self, Gate::Ef | Gate::Es)
    }

    /// Reference matrix, written out independently of any decomposition.
    pub fn matrix(&self) -> ComplexMatrix {
        let r = C64::new(FRAC_1_SQRT_2, 0.0);
        match self {
            Gate::Cnot => gates::cnot(),
            Gate::Cz => gates::cz(),
            Gate::Ch => gates::controlled(&gates::hadamard()),
            Gate::Swap => gates::swap(),
            Gate::ISwap => gates::iswap(),
            Gate::SqrtSwap => gates::sqrt_swap(),
            Gate::Cu(v) => gates::controlled(v),
            Gate::Ef => ComplexMatrix::diag(&[r * 2.0, ZERO, ZERO, r * 2.0]),
            Gate::Es => ComplexMatrix::diag(&[ZERO, r * 2.0, r * 2.0, ZERO]),
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateRecipe {
    pub name: String,
    pub terms: Vec<LcuTerm>,
    pub unitary_flag: bool,
}

impl GateRecipe {
    pub fn matrix(&self) -> ComplexMatrix {
        reconstruct_from_terms(&self.terms)
    }

    /// True when every `A_i`, `B_i` is unitary and so can be set directly
    /// on an interferometer.
    pub fn has_unitary_factors(&self) -> bool {
        self.terms
            .iter()
            .all(|t| unitarity_defect(&t.a).is_ok_and(|d| d <= 1e-10) && unitarity_defect(&t.b).is_ok_and(|d| d <= 1e-10))
    }

    /// Four coefficients with unit-local padding, as loaded onto the chip.
    pub fn padded_terms(&self) -> Vec<LcuTerm> {
        let mut t = self.terms.clone();
        while t.len() < 4 {
            t.push(LcuTerm { alpha: ZERO, a: ComplexMatrix::identity(2), b: ComplexMatrix::identity(2) });
        }
        t
    }
}

/// Explicit decompositions of the named gates.
pub fn gate_library(gate: &Gate) -> Result<GateRecipe, LcuError> {
    let p = gates::paulis();
    let r = C64::new(FRAC_1_SQRT_2, 0.0);
    let pauli_terms = |alphas: [C64; 4]| -> Vec<LcuTerm> {
        (0..4).map(|i| LcuTerm { alpha: alphas[i], a: p[i].clone(), b: p[i].clone() }).collect()
    };
    let half = C64::new(0.5, 0.0);
    let terms = match gate {
        Gate::Cnot => controlled_terms(&gates::pauli_x()),
        Gate::Cz => controlled_terms(&gates::pauli_z()),
        Gate::Ch => controlled_terms(&gates::hadamard()),
        Gate::Cu(v) => {
            if v.rows() != 2 || v.cols() != 2 {
                return Err(LcuError::Dimension(format!("CU target is {}x{}", v.rows(), v.cols())));
            }
            let defect = unitarity_defect(v).unwrap_or(f64::INFINITY);
            if defect > 1e-10 {
                return Err(LcuError::BadTarget { defect });
            }
            controlled_terms(v)
        }
        Gate::Swap => pauli_terms([half; 4]),
        Gate::ISwap => pauli_terms([half, half * I, half * I, half]),
        Gate::SqrtSwap => {
            let b = C64::new(0.25, -0.25);
            pauli_terms([C64::new(0.75, 0.25), b, b, b])
        }
        Gate::Ef => vec![
            LcuTerm { alpha: r, a: p[0].clone(), b: p[0].clone() },
            LcuTerm { alpha: r, a: p[3].clone(), b: p[3].clone() },
        ],
        Gate::Es => vec![
            LcuTerm { alpha: r, a: p[0].clone(), b: p[0].clone() },
            LcuTerm { alpha: -r, a: p[3].clone(), b: p[3].clone() },
        ],
    };
    Ok(GateRecipe { name: gate.name().to_string(), terms, unitary_flag: gate.is_unitary() })
}

/// `CU = (1/sqrt2) diag(1, i) (x) (I - iV)/sqrt2 + (1/sqrt2) diag(1, -i) (x) (I + iV)/sqrt2`.
fn controlled_terms(v: &ComplexMatrix) -> Vec<LcuTerm> {
    let r = C64::new(FRAC_1_SQRT_2, 0.0);
    let id = ComplexMatrix::identity(2);
    let iv = v.scale(I);
    vec![
        LcuTerm { alpha: r, a: ComplexMatrix::diag(&[ONE, I]), b: (&id - &iv).scale(r) },
        LcuTerm { alpha: r, a: ComplexMatrix::diag(&[ONE, -I]), b: (&id + &iv).scale(r) },
    ]
}

/// KAK-derived four-term recipe for an arbitrary two-qubit unitary.
pub fn recipe_from_unitary(name: &str, u: &ComplexMatrix) -> Result<GateRecipe, LcuError> {
    let d = kak_decompose(u)?;
    Ok(GateRecipe { name: name.to_string(), terms: lcu_terms(&d), unitary_flag: true })
}
