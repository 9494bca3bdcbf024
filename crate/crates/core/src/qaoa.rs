//! p-level QAOA for two-bit constraint satisfaction problems.
//!
//! Spin strings map to computational basis states with bit 0 ↔ z = +1, so
//! index 0 = `00` = (z1, z2) = (+1, +1) and index 3 = `11` = (−1, −1).

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, ExecMode};
use crate::qmath::{ComplexMatrix, StateVector, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QaoaError {
    #[error("angle lists differ in length: {gammas} gammas, {betas} betas")]
    LengthMismatch { gammas: usize, betas: usize },
    #[error("at least one QAOA layer is required")]
    NoLayers,
    #[error("angle {value} outside [0, {upper}]")]
    AngleOutOfRange { value: f64, upper: f64 },
    #[error("non-finite angle or coefficient")]
    NonFinite,
    #[error("grid steps must be positive and finite, got ({delta_gamma}, {delta_beta})")]
    BadStep { delta_gamma: f64, delta_beta: f64 },
    #[error("clause sign must be +1 or -1, got {0}")]
    BadSign(i32),
}

/// Spin term appearing in a clause.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    #[serde(rename = "z1")]
    Z1,
    #[serde(rename = "z2")]
    Z2,
    #[serde(rename = "z1z2")]
    Z1Z2,
}

impl Term {
    pub fn eval(self, z1: f64, z2: f64) -> f64 {
        match self {
            Term::Z1 => z1,
            Term::Z2 => z2,
            Term::Z1Z2 => z1 * z2,
        }
    }
}

/// Clause `½ + ½·sign·term`, satisfied (value 1) or not (value 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub term: Term,
    pub sign: i32,
}

impl Clause {
    pub fn new(term: Term, sign: i32) -> Result<Self, QaoaError> {
        if sign != 1 && sign != -1 {
            return Err(QaoaError::BadSign(sign));
        }
        Ok(Clause { term, sign })
    }
}

/// Objective `C(z) = constant + c1·z1 + c2·z2 + c12·z1·z2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Csp {
    pub constant: f64,
    pub coeff_z1: f64,
    pub coeff_z2: f64,
    pub coeff_z1z2: f64,
    /// Number of clauses when built from clauses, otherwise 0.
    pub clauses: usize,
}

/// Spin strings in basis order 00, 01, 10, 11.
pub const SPIN_STRINGS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];

impl Csp {
    /// Sum of `½ + ½·sign·term` over the clauses.
    pub fn from_clauses(clauses: &[Clause]) -> Result<Self, QaoaError> {
        let mut csp = Csp { constant: 0.0, coeff_z1: 0.0, coeff_z2: 0.0, coeff_z1z2: 0.0, clauses: clauses.len() };
        for c in clauses {
            let c = Clause::new(c.term, c.sign)?;
            let half = 0.5 * f64::from(c.sign);
            csp.constant += 0.5;
            match c.term {
                Term::Z1 => csp.coeff_z1 += half,
                Term::Z2 => csp.coeff_z2 += half,
                Term::Z1Z2 => csp.coeff_z1z2 += half,
            }
        }
        Ok(csp)
    }

    /// Spin polynomial taking the given values on 00, 01, 10, 11.
    pub fn from_table(values: [f64; 4]) -> Result<Self, QaoaError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(QaoaError::NonFinite);
        }
        let proj = |f: &dyn Fn(f64, f64) -> f64| -> f64 {
            SPIN_STRINGS.iter().zip(values).map(|(&(a, b), v)| v * f(a, b)).sum::<f64>() / 4.0
        };
        Ok(Csp {
            constant: proj(&|_, _| 1.0),
            coeff_z1: proj(&|a, _| a),
            coeff_z2: proj(&|_, b| b),
            coeff_z1z2: proj(&|a, b| a * b),
            clauses: 0,
        })
    }

    /// Max2Xor: one clause `½ + ½·z1·z2`.
    pub fn csp1() -> Self {
        Self::from_clauses(&[Clause { term: Term::Z1Z2, sign: 1 }]).expect("valid clause")
    }

    /// Clauses z1, z2 and z1·z2, all with sign +1.
    pub fn csp2() -> Self {
        Self::from_clauses(&[
            Clause { term: Term::Z1, sign: 1 },
            Clause { term: Term::Z2, sign: 1 },
            Clause { term: Term::Z1Z2, sign: 1 },
        ])
        .expect("valid clauses")
    }

    /// Clauses z1, z2 with sign +1 and z1·z2 with sign −1.
    pub fn csp3() -> Self {
        Self::from_clauses(&[
            Clause { term: Term::Z1, sign: 1 },
            Clause { term: Term::Z2, sign: 1 },
            Clause { term: Term::Z1Z2, sign: -1 },
        ])
        .expect("valid clauses")
    }

    /// Numbered example instance (1, 2 or 3).
    pub fn example(k: u32) -> Option<Self> {
        match k {
            1 => Some(Self::csp1()),
            2 => Some(Self::csp2()),
            3 => Some(Self::csp3()),
            _ => None,
        }
    }

    pub fn value(&self, z1: f64, z2: f64) -> f64 {
        self.constant + self.coeff_z1 * z1 + self.coeff_z2 * z2 + self.coeff_z1z2 * z1 * z2
    }

    pub fn shifted(&self, c: f64) -> Self {
        Csp { constant: self.constant + c, ..self.clone() }
    }

    fn is_finite(&self) -> bool {
        [self.constant, self.coeff_z1, self.coeff_z2, self.coeff_z1z2].iter().all(|v| v.is_finite())
    }
}

/// Diagonal of the cost operator in basis order 00, 01, 10, 11.
pub fn build_cost(csp: &Csp) -> [f64; 4] {
    SPIN_STRINGS.map(|(z1, z2)| csp.value(z1, z2))
}

pub fn cost_operator(csp: &Csp) -> ComplexMatrix {
    let d = build_cost(csp).map(|c| C64::new(c, 0.0));
    ComplexMatrix::diag(&d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaoaAngles {
    gammas: Vec<f64>,
    betas: Vec<f64>,
}

impl QaoaAngles {
    pub fn new(gammas: Vec<f64>, betas: Vec<f64>) -> Result<Self, QaoaError> {
        if gammas.len() != betas.len() {
            return Err(QaoaError::LengthMismatch { gammas: gammas.len(), betas: betas.len() });
        }
        if gammas.is_empty() {
            return Err(QaoaError::NoLayers);
        }
        for (&v, upper) in gammas.iter().map(|g| (g, TAU)).chain(betas.iter().map(|b| (b, PI))) {
            if !v.is_finite() {
                return Err(QaoaError::NonFinite);
            }
            if !(0.0..=upper).contains(&v) {
                return Err(QaoaError::AngleOutOfRange { value: v, upper });
            }
        }
        Ok(QaoaAngles { gammas, betas })
    }

    pub fn single(gamma: f64, beta: f64) -> Result<Self, QaoaError> {
        Self::new(vec![gamma], vec![beta])
    }

    pub fn p(&self) -> usize {
        self.gammas.len()
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }
}

/// Applies `e^{-iγC}` with `C` diagonal.
fn apply_cost(psi: &mut [C64; 4], cost: &[f64; 4], gamma: f64) {
    for (a, &c) in psi.iter_mut().zip(cost) {
        *a *= C64::from_polar(1.0, -gamma * c);
    }
}

/// Applies `e^{-iβ(X1+X2)} = e^{-iβX} ⊗ e^{-iβX}`.
fn apply_mixer(psi: &mut [C64; 4], beta: f64) {
    let (s, c) = beta.sin_cos();
    let ms = C64::new(0.0, -s);
    // qubit 1 pairs (0,2), (1,3); qubit 2 pairs (0,1), (2,3)
    for (i, j) in [(0, 2), (1, 3), (0, 1), (2, 3)] {
        let (a, b) = (psi[i], psi[j]);
        psi[i] = a * c + b * ms;
        psi[j] = a * ms + b * c;
    }
}

/// QAOA state for arbitrary real angles, no range checks.
pub fn evolve_raw(cost: &[f64; 4], gammas: &[f64], betas: &[f64]) -> StateVector {
    let mut psi = [C64::new(0.5, 0.0); 4];
    for (&g, &b) in gammas.iter().zip(betas) {
        apply_cost(&mut psi, cost, g);
        apply_mixer(&mut psi, b);
    }
    StateVector::new(psi.to_vec())
}

/// `e^{-iβ_p B} e^{-iγ_p C} ⋯ e^{-iβ_1 B} e^{-iγ_1 C} H⊗H |00⟩`.
pub fn qaoa_state(csp: &Csp, angles: &QaoaAngles) -> StateVector {
    evolve_raw(&build_cost(csp), &angles.gammas, &angles.betas)
}

pub fn expectation(state: &StateVector, cost: &[f64; 4]) -> f64 {
    state.amplitudes().iter().zip(cost).map(|(a, c)| a.norm_sqr() * c).sum()
}

/// p = 1 expectation at a single point.
pub fn expectation_at(cost: &[f64; 4], gamma: f64, beta: f64) -> f64 {
    expectation(&evolve_raw(cost, &[gamma], &[beta]), cost)
}

pub fn solution_distribution(state: &StateVector) -> [f64; 4] {
    let mut p = [0.0; 4];
    for (slot, a) in p.iter_mut().zip(state.amplitudes()) {
        *slot = a.norm_sqr();
    }
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub delta_gamma: f64,
    pub delta_beta: f64,
    /// Include the upper endpoints 2π and π.
    pub closed: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { delta_gamma: TAU / 20.0, delta_beta: PI / 30.0, closed: false }
    }
}

impl GridSpec {
    fn axis(delta: f64, upper: f64, closed: bool) -> Vec<f64> {
        let ratio = upper / delta;
        let nearest = ratio.round();
        let whole = (ratio - nearest).abs() < 1e-9;
        let n = if whole {
            nearest as usize + usize::from(closed)
        } else {
            ratio.floor() as usize + 1
        };
        (0..n).map(|k| k as f64 * delta).collect()
    }

    pub fn axes(&self) -> Result<(Vec<f64>, Vec<f64>), QaoaError> {
        let ok = |d: f64| d.is_finite() && d > 0.0;
        if !ok(self.delta_gamma) || !ok(self.delta_beta) {
            return Err(QaoaError::BadStep { delta_gamma: self.delta_gamma, delta_beta: self.delta_beta });
        }
        Ok((Self::axis(self.delta_gamma, TAU, self.closed), Self::axis(self.delta_beta, PI, self.closed)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
    /// ⟨C⟩ row-major in γ: `values[i * betas.len() + j]`.
    pub values: Vec<f64>,
    pub best_index: (usize, usize),
    pub best_gamma: f64,
    pub best_beta: f64,
    pub best_value: f64,
}

impl GridResult {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.betas.len() + j]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Relative tolerance under which grid values count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// p = 1 grid search. Ties (within [`TIE_TOL`]) go to the lowest γ index,
/// then the lowest β index.
pub fn grid_search(csp: &Csp, spec: &GridSpec, mode: ExecMode) -> Result<GridResult, QaoaError> {
    if !csp.is_finite() {
        return Err(QaoaError::NonFinite);
    }
    let (gammas, betas) = spec.axes()?;
    let cost = build_cost(csp);
    let nb = betas.len();
    let values = par::map_range(mode, gammas.len() * nb, |k| expectation_at(&cost, gammas[k / nb], betas[k % nb]));
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOL * max.abs().max(1.0);
    let k = values.iter().position(|&v| v >= max - tol).unwrap_or(0);
    let (i, j) = (k / nb, k % nb);
    Ok(GridResult {
        best_index: (i, j),
        best_gamma: gammas[i],
        best_beta: betas[j],
        best_value: values[k],
        gammas,
        betas,
        values,
    })
}

/// Bit-string label for a basis index (`0 → "00"`).
pub fn bit_label(index: usize) -> String {
    format!("{}{}", (index >> 1) & 1, index & 1)
}
