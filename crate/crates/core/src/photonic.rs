//! Chip-level model: ququard pair preparation, per-path local operations,
//! 4-to-1 path combining with post-selection, and the four-port variant.
//!
//! Mode index on each photon is `2 * path + rail`, paths a..d for the signal
//! and e..h for the idler.

use crate::calib::{array_settings, realize_array, ArraySettings, M2};
use crate::kak::LcuTerm;
use crate::lcu::{gate_library, recipe_from_unitary, Gate, GateRecipe, LcuError};
use crate::mix_seed;
use crate::qmath::{unitarity_defect, ComplexMatrix, MathError, StateVector, C64, I, ONE, ZERO};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use thiserror::Error;

pub const MODES: usize = 8;
/// Success probability of the pair-generation stage.
pub const SOURCE_SUCCESS: f64 = 0.25;
/// Per-pair factor of the two balanced 4-to-1 combiners.
pub const COMBINER_SUCCESS: f64 = 1.0 / 16.0;

#[derive(Debug, Error)]
pub enum PhotonicError {
    #[error("pump amplitudes not normalized: sum |alpha|^2 = {norm_sqr}")]
    PumpNotNormalized { norm_sqr: f64 },
    #[error("local operation {which} is not unitary (defect {defect:.3e})")]
    NonUnitaryLocalOp { which: String, defect: f64 },
    #[error("post-selected state annihilated by the operator (norm^2 = {norm_sqr:.3e})")]
    Annihilated { norm_sqr: f64 },
    #[error("input state invalid: {0}")]
    Input(#[from] MathError),
    #[error("recipe has {0} terms; the chip holds at most four")]
    TooManyTerms(usize),
    #[error("noise parameters must be finite and non-negative")]
    BadNoise,
    #[error(transparent)]
    Lcu(#[from] LcuError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhotonicState {
    /// Rows are signal modes, columns idler modes.
    pub amplitudes: ComplexMatrix,
    pub success_prob: f64,
}

impl PhotonicState {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of each phase-shifter setting error, radians.
    pub phase_sigma: f64,
    /// Standard deviation of each splitter's deviation from 0.5.
    pub eta_offset_sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn phase_only(phase_sigma: f64, seed: u64) -> Self {
        Self { phase_sigma, eta_offset_sigma: 0.0, seed }
    }

    fn validate(&self) -> Result<(), PhotonicError> {
        let ok = |s: f64| s.is_finite() && s >= 0.0;
        if ok(self.phase_sigma) && ok(self.eta_offset_sigma) {
            Ok(())
        } else {
            Err(PhotonicError::BadNoise)
        }
    }

    /// Independent generator for run `run` of this model.
    pub fn stream(&self, run: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix_seed(self.seed, run))
    }

    fn perturb(&self, rng: &mut ChaCha8Rng) -> ([f64; 6], [f64; 5]) {
        let phase = Normal::new(0.0, self.phase_sigma).expect("validated sigma");
        let eta = Normal::new(0.0, self.eta_offset_sigma).expect("validated sigma");
        let etas = std::array::from_fn(|_| (0.5 + eta.sample(rng)).clamp(1e-3, 1.0 - 1e-3));
        let dth = std::array::from_fn(|_| phase.sample(rng));
        (etas, dth)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MeasBasis {
    Z,
    X,
    Y,
    /// Basis vectors are the columns of this 2x2 unitary.
    Rotation(ComplexMatrix),
}

impl MeasBasis {
    pub fn matrix(&self) -> ComplexMatrix {
        let r = C64::new(FRAC_1_SQRT_2, 0.0);
        match self {
            MeasBasis::Z => ComplexMatrix::identity(2),
            MeasBasis::X => ComplexMatrix::from_rows(&[[r, r], [r, -r]]),
            MeasBasis::Y => ComplexMatrix::from_rows(&[[r, r], [r * I, -r * I]]),
            MeasBasis::Rotation(u) => u.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChipConfig {
    pub pump: [C64; 4],
    pub prep: [StateVector; 2],
    pub a: [ComplexMatrix; 4],
    pub b: [ComplexMatrix; 4],
    pub measurement: [MeasBasis; 2],
    pub noise: Option<NoiseModel>,
    /// Local operations may be non-unitary only when this is false.
    pub unitary_flag: bool,
}

impl ChipConfig {
    /// Loads a recipe, padding it with unpumped identity paths.
    pub fn from_recipe(recipe: &GateRecipe, phi1: StateVector, phi2: StateVector) -> Result<Self, PhotonicError> {
        if recipe.terms.len() > 4 {
            return Err(PhotonicError::TooManyTerms(recipe.terms.len()));
        }
        let t: Vec<LcuTerm> = recipe.padded_terms();
        let cfg = Self {
            pump: std::array::from_fn(|i| t[i].alpha),
            prep: [phi1, phi2],
            a: std::array::from_fn(|i| t[i].a.clone()),
            b: std::array::from_fn(|i| t[i].b.clone()),
            measurement: [MeasBasis::Z, MeasBasis::Z],
            noise: None,
            unitary_flag: recipe.unitary_flag,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Library recipe when its factors can be set on interferometers, the
    /// four-term KAK recipe otherwise.
    pub fn for_gate(gate: &Gate, phi1: StateVector, phi2: StateVector) -> Result<Self, PhotonicError> {
        let lib = gate_library(gate)?;
        let recipe = if lib.has_unitary_factors() { lib } else { recipe_from_unitary(gate.name(), &gate.matrix())? };
        Self::from_recipe(&recipe, phi1, phi2)
    }

    pub fn with_noise(mut self, noise: Option<NoiseModel>) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<(), PhotonicError> {
        let n: f64 = self.pump.iter().map(|a| a.norm_sqr()).sum();
        if (n - 1.0).abs() > 1e-10 {
            return Err(PhotonicError::PumpNotNormalized { norm_sqr: n });
        }
        for st in &self.prep {
            st.ensure_normalized()?;
            if st.dim() != 2 {
                return Err(PhotonicError::Input(MathError::BadLength { expected: 2, got: st.dim() }));
            }
        }
        if self.unitary_flag {
            for (label, ops) in [("A", &self.a), ("B", &self.b)] {
                for (i, op) in ops.iter().enumerate() {
                    let defect = unitarity_defect(op).unwrap_or(f64::INFINITY);
                    if defect > 1e-10 {
                        return Err(PhotonicError::NonUnitaryLocalOp { which: format!("{label}{i}"), defect });
                    }
                }
            }
        }
        if let Some(nm) = &self.noise {
            nm.validate()?;
        }
        Ok(())
    }

    /// `sum_i alpha_i A_i (x) B_i`.
    pub fn operator(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(4, 4);
        for i in 0..4 {
            m = &m + &crate::qmath::tensor_product(&self.a[i], &self.b[i]).scale(self.pump[i]);
        }
        m
    }
}

/// Unitary whose first column is `phi`.
fn state_preparer(phi: &StateVector) -> ComplexMatrix {
    let a = phi.amplitudes();
    ComplexMatrix::from_rows(&[[a[0], -a[1].conj()], [a[1], a[0].conj()]])
}

pub fn prepare_ququard(alphas: &[C64; 4]) -> Result<PhotonicState, PhotonicError> {
    let n: f64 = alphas.iter().map(|a| a.norm_sqr()).sum();
    if (n - 1.0).abs() > 1e-10 {
        return Err(PhotonicError::PumpNotNormalized { norm_sqr: n });
    }
    let mut amp = ComplexMatrix::zeros(MODES, MODES);
    for (i, &a) in alphas.iter().enumerate() {
        amp[(2 * i, 2 * i)] = a;
    }
    Ok(PhotonicState { amplitudes: amp, success_prob: SOURCE_SUCCESS })
}

fn block_diag(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(MODES, MODES);
    for (p, b) in blocks.iter().enumerate() {
        for r in 0..2 {
            for c in 0..2 {
                m[(2 * p + r, 2 * p + c)] = b[(r, c)];
            }
        }
    }
    m
}

/// Applies per-path 2x2 maps to both photons: `S amp T^T`.
pub fn apply_path_maps(st: &PhotonicState, signal: &[ComplexMatrix], idler: &[ComplexMatrix]) -> PhotonicState {
    let s = block_diag(signal);
    let t = block_diag(idler);
    PhotonicState { amplitudes: s.matmul(&st.amplitudes).matmul(&t.transpose()), success_prob: st.success_prob }
}

/// Ideal state preparation and local operations: signal path `i` carries
/// `A_i |phi1>`, idler path `i` carries `B_i |phi2>`.
pub fn apply_prep_and_local_ops(st: &PhotonicState, cfg: &ChipConfig) -> Result<PhotonicState, PhotonicError> {
    cfg.validate()?;
    let w1 = state_preparer(&cfg.prep[0]);
    let w2 = state_preparer(&cfg.prep[1]);
    let s: Vec<ComplexMatrix> = cfg.a.iter().map(|a| a.matmul(&w1)).collect();
    let t: Vec<ComplexMatrix> = cfg.b.iter().map(|b| b.matmul(&w2)).collect();
    Ok(apply_path_maps(st, &s, &t))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChipOutput {
    /// Normalized post-selected two-qubit state.
    pub state: StateVector,
    pub success_prob: f64,
}

/// Balanced 4-to-1 fan-in on each photon and coincidence post-selection.
pub fn combine_paths(st: &PhotonicState) -> Result<ChipOutput, PhotonicError> {
    let mut out = vec![ZERO; 4];
    for i in 0..MODES {
        for j in 0..MODES {
            out[2 * (i % 2) + j % 2] += st.amplitudes[(i, j)] * 0.25;
        }
    }
    finish(out, st.success_prob)
}

fn finish(out: Vec<C64>, prior: f64) -> Result<ChipOutput, PhotonicError> {
    let n: f64 = out.iter().map(|z| z.norm_sqr()).sum();
    if n <= 1e-24 {
        return Err(PhotonicError::Annihilated { norm_sqr: n });
    }
    let state = StateVector::normalized(out)?;
    Ok(ChipOutput { state, success_prob: prior * n })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PortOutcome {
    /// Output port on each photon's fan-in, 0..4.
    pub ports: (usize, usize),
    pub label: &'static str,
    pub state: Option<StateVector>,
    pub probability: f64,
}

const PORT_LABELS: [&str; 4] = ["(1,2)", "(1',2')", "(1'',2'')", "(1''',2''')"];

/// Four-port fan-in network `F = (H (x) H)` on the path index of each photon.
/// Port pairs `(p, p)` reproduce the target state; the stage-1 factor is
/// removed, so for a unitary operator each carries 1/16.
pub fn advanced_combiner(st: &PhotonicState) -> Vec<PortOutcome> {
    let f = |p: usize, i: usize| -> f64 {
        if (p & i).count_ones().is_multiple_of(2) {
            0.5
        } else {
            -0.5
        }
    };
    let boost = st.success_prob / SOURCE_SUCCESS;
    (0..4)
        .map(|p| {
            let mut out = vec![ZERO; 4];
            for i in 0..MODES {
                for j in 0..MODES {
                    out[2 * (i % 2) + j % 2] += st.amplitudes[(i, j)] * (f(p, i / 2) * f(p, j / 2));
                }
            }
            let n: f64 = out.iter().map(|z| z.norm_sqr()).sum();
            let state = if n > 1e-24 { StateVector::normalized(out).ok() } else { None };
            PortOutcome { ports: (p, p), label: PORT_LABELS[p], state, probability: n * boost }
        })
        .collect()
}

/// Realized per-path maps and pump for one noise draw.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub pump: [C64; 4],
    pub signal: [ComplexMatrix; 4],
    pub idler: [ComplexMatrix; 4],
}

fn array_output_map(settings: &ArraySettings, etas: &[f64; 6], noise: &[f64; 5]) -> ComplexMatrix {
    let m: M2 = realize_array(settings, etas, noise);
    // Light enters rail 0; the first column is the realized single-photon state.
    ComplexMatrix::from_rows(&[[m[0][0], -m[1][0].conj()], [m[1][0], m[0][0].conj()]])
}

/// Programs each path's five-shifter array for `A_i |phi1>` (resp. `B_i`)
/// and perturbs phases and splitting ratios. Each array's ideal output
/// phase is compensated in the pump phase of its path.
pub fn realize(cfg: &ChipConfig, inputs: (&StateVector, &StateVector), rng: &mut ChaCha8Rng) -> Result<Realization, PhotonicError> {
    let noise = cfg.noise.unwrap_or(NoiseModel { phase_sigma: 0.0, eta_offset_sigma: 0.0, seed: 0 });
    noise.validate()?;
    let mut pump = cfg.pump;
    let mut signal: [ComplexMatrix; 4] = std::array::from_fn(|_| ComplexMatrix::identity(2));
    let mut idler: [ComplexMatrix; 4] = std::array::from_fn(|_| ComplexMatrix::identity(2));
    for i in 0..4 {
        for (label, op) in [("A", &cfg.a[i]), ("B", &cfg.b[i])] {
            let defect = unitarity_defect(op).unwrap_or(f64::INFINITY);
            if defect > 1e-10 {
                return Err(PhotonicError::NonUnitaryLocalOp { which: format!("{label}{i}"), defect });
            }
        }
        let sa = array_settings(inputs.0, &cfg.a[i]);
        let sb = array_settings(inputs.1, &cfg.b[i]);
        let (ea, na) = noise.perturb(rng);
        let (eb, nb) = noise.perturb(rng);
        signal[i] = array_output_map(&sa, &ea, &na);
        idler[i] = array_output_map(&sb, &eb, &nb);
        pump[i] *= C64::from_polar(1.0, -(sa.phase + sb.phase));
    }
    Ok(Realization { pump, signal, idler })
}

/// Full chip run with `inputs` as the prepared qubits. Without a noise model
/// local operations are applied exactly; with one, each path runs through a
/// perturbed array drawn from substream `run` of the model's seed.
pub fn end_to_end_gate(cfg: &ChipConfig, inputs: (&StateVector, &StateVector), run: u64) -> Result<ChipOutput, PhotonicError> {
    let mut c = cfg.clone();
    c.prep = [inputs.0.clone(), inputs.1.clone()];
    c.validate()?;
    let Some(noise) = cfg.noise else {
        let st = apply_prep_and_local_ops(&prepare_ququard(&c.pump)?, &c)?;
        return combine_paths(&st);
    };
    let mut rng = noise.stream(run);
    let r = realize(&c, inputs, &mut rng)?;
    let st = apply_path_maps(&prepare_ququard(&r.pump)?, &r.signal, &r.idler);
    combine_paths(&st)
}

/// Born probabilities in outcome order 00, 01, 10, 11; the state need not be
/// normalized.
pub fn measure_in_basis(state: &StateVector, basis: &[MeasBasis; 2]) -> [f64; 4] {
    let u = crate::qmath::tensor_product(&basis[0].matrix(), &basis[1].matrix());
    let amps = u.adjoint().apply(state.amplitudes());
    let p: Vec<f64> = amps.iter().map(|z| z.norm_sqr()).collect();
    let total: f64 = p.iter().sum();
    std::array::from_fn(|k| if total > 0.0 { p[k] / total } else { 0.0 })
}

/// The 16 x 16 table of post-selected projector probabilities for the chip,
/// indexed `[input][projector]` over the product tomography basis. Noise is
/// redrawn for every input configuration.
pub fn tomography_table(cfg: &ChipConfig, run: u64) -> Result<Vec<[f64; 16]>, PhotonicError> {
    let (inputs, projectors) = crate::tomography::tomography_bases();
    (0..16)
        .map(|i| {
            let (q1, q2) = crate::tomography::split_index(i);
            let s1 = crate::qmath::gates::tomography_qubit_state(q1);
            let s2 = crate::qmath::gates::tomography_qubit_state(q2);
            let out = end_to_end_gate(cfg, (&s1, &s2), mix_seed(run, i as u64))?;
            debug_assert_eq!(inputs[i].dim(), 4);
            Ok(std::array::from_fn(|j| projectors[j].inner(&out.state).norm_sqr()))
        })
        .collect()
}

pub fn identity_config() -> ChipConfig {
    let id = ComplexMatrix::identity(2);
    ChipConfig {
        pump: [ONE, ZERO, ZERO, ZERO],
        prep: [StateVector::basis(2, 0), StateVector::basis(2, 0)],
        a: std::array::from_fn(|_| id.clone()),
        b: std::array::from_fn(|_| id.clone()),
        measurement: [MeasBasis::Z, MeasBasis::Z],
        noise: None,
        unitary_flag: true,
    }
}
