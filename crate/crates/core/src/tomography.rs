//! State and process tomography over the product basis {|0>, |1>, |+>, |+i>}
//! per qubit, with Poisson maximum-likelihood reconstruction.
//!
//! Process matrices live in the Pauli-product basis `sigma_a (x) sigma_b`,
//! index `4a + b`, with `Tr chi = 1`.

use crate::mix_seed;
use crate::par::{self, ExecMode};
use crate::qmath::{gates, hermitian_eigen, ComplexMatrix, DensityMatrix, StateVector, C64, ONE, ZERO};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_RATE: f64 = 100.0;
pub const DEFAULT_TIME_S: f64 = 10.0;
/// Weight of the trace-preservation penalty.
pub const TP_PENALTY: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TomographyError {
    #[error("dataset incomplete: {0}")]
    Incomplete(String),
    #[error("dataset has no counts")]
    NoCounts,
    #[error("MLE did not converge after {iterations} iterations (deviance {deviance:.6e})")]
    NoConvergence { iterations: usize, deviance: f64 },
    #[error("linear inversion failed: measurement matrix is singular")]
    Singular,
    #[error("distributions must be non-negative, equal length and sum to 1")]
    BadDistribution,
    #[error("need at least 2 resamples")]
    TooFewResamples,
    #[error("all {0} resamples failed")]
    AllResamplesFailed(usize),
}

/// Split a two-qubit basis index `4 q1 + q2`.
pub fn split_index(i: usize) -> (usize, usize) {
    (i / 4, i % 4)
}

/// The 16 product input states and the 16 product projector states, both in
/// index order `4 q1 + q2` over {0, 1, +, +i}.
pub fn tomography_bases() -> (Vec<StateVector>, Vec<StateVector>) {
    let states: Vec<StateVector> = (0..16)
        .map(|i| {
            let (a, b) = split_index(i);
            gates::tomography_qubit_state(a).kron(&gates::tomography_qubit_state(b))
        })
        .collect();
    (states.clone(), states)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessMatrix {
    pub chi: ComplexMatrix,
}

impl ProcessMatrix {
    /// `chi = c c^dagger` with `c_m = Tr(sigma_m^dagger U) / 4`.
    pub fn from_unitary(u: &ComplexMatrix) -> Self {
        let c: Vec<C64> = (0..16).map(|m| gates::pauli_product(m).adjoint().matmul(u).trace() / 4.0).collect();
        let mut chi = ComplexMatrix::zeros(16, 16);
        for m in 0..16 {
            for n in 0..16 {
                chi[(m, n)] = c[m] * c[n].conj();
            }
        }
        Self { chi }
    }

    pub fn trace(&self) -> f64 {
        self.chi.trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.chi).0
    }

    /// `|| sum_mn chi_mn sigma_n sigma_m - I ||_max`.
    pub fn tp_residual(&self) -> f64 {
        let k = pauli_pair_products();
        let r = tp_map(&self.chi, &k);
        (&r - &ComplexMatrix::identity(4)).max_norm()
    }

    /// `rho_out = sum_mn chi_mn sigma_m rho sigma_n`.
    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let p: Vec<ComplexMatrix> = (0..16).map(gates::pauli_product).collect();
        let mut out = ComplexMatrix::zeros(4, 4);
        for m in 0..16 {
            let left = p[m].matmul(rho);
            for (n, pn) in p.iter().enumerate() {
                let c = self.chi[(m, n)];
                if c.norm() > 0.0 {
                    out = &out + &left.matmul(pn).scale(c);
                }
            }
        }
        out
    }
}

/// `w_m = conj(<pi|sigma_m|psi>)`, so that `p = w^dagger chi w`.
fn record_vector(psi: &StateVector, pi: &StateVector) -> Vec<C64> {
    (0..16).map(|m| pi.inner(&psi.apply(&gates::pauli_product(m))).conj()).collect()
}

fn quad_form(chi: &ComplexMatrix, w: &[C64]) -> f64 {
    let mut s = ZERO;
    for m in 0..w.len() {
        let mut row = ZERO;
        for n in 0..w.len() {
            row += chi[(m, n)] * w[n];
        }
        s += w[m].conj() * row;
    }
    s.re
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    /// Distance of the raw value outside [0, 1] when above 1e-8.
    pub clamp_residual: Option<f64>,
}

pub fn predict_probability(chi: &ProcessMatrix, input: usize, projector: usize) -> Prediction {
    let (inputs, projectors) = tomography_bases();
    let p = quad_form(&chi.chi, &record_vector(&inputs[input], &projectors[projector]));
    let clamped = p.clamp(0.0, 1.0);
    let off = (p - clamped).abs();
    Prediction { probability: clamped, clamp_residual: (off > 1e-8).then_some(off) }
}

/// `[input][projector]` table of ideal probabilities for a unitary.
pub fn unitary_table(u: &ComplexMatrix) -> Vec<[f64; 16]> {
    let (inputs, projectors) = tomography_bases();
    inputs
        .iter()
        .map(|psi| {
            let out = psi.apply(u);
            std::array::from_fn(|j| projectors[j].inner(&out).norm_sqr())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub input_index: usize,
    pub projector_index: usize,
    /// Non-negative; expected-count datasets carry fractional values.
    pub counts: f64,
    pub time_s: f64,
    /// Coincidence rate for a unit-probability outcome, counts per second.
    pub rate: f64,
}

impl Record {
    fn scale(&self) -> f64 {
        self.rate * self.time_s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyDataset {
    pub records: Vec<Record>,
}

impl TomographyDataset {
    /// Noise-free counts `p rate time`.
    pub fn expected(table: &[[f64; 16]], rate: f64, time_s: f64) -> Self {
        let records = table
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter().enumerate().map(move |(j, &p)| Record {
                    input_index: i,
                    projector_index: j,
                    counts: p * rate * time_s,
                    time_s,
                    rate,
                })
            })
            .collect();
        Self { records }
    }

    pub fn total_counts(&self) -> f64 {
        self.records.iter().map(|r| r.counts).sum()
    }
}

/// Poisson counts with mean `p rate time` for every entry of `table`.
pub fn sample_counts(table: &[[f64; 16]], rate: f64, time_s: f64, seed: u64) -> TomographyDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = TomographyDataset::expected(table, rate, time_s);
    for r in &mut ds.records {
        r.counts = poisson(r.counts, &mut rng);
    }
    ds
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    if mean > 0.0 {
        Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// `sigma_n sigma_m` for every `(m, n)`, stored at `[m * 16 + n]`.
fn pauli_pair_products() -> Vec<ComplexMatrix> {
    let p: Vec<ComplexMatrix> = (0..16).map(gates::pauli_product).collect();
    let mut out = Vec::with_capacity(256);
    for m in 0..16 {
        for n in 0..16 {
            out.push(p[n].matmul(&p[m]));
        }
    }
    out
}

fn tp_map(chi: &ComplexMatrix, k: &[ComplexMatrix]) -> ComplexMatrix {
    let mut r = ComplexMatrix::zeros(4, 4);
    for m in 0..16 {
        for n in 0..16 {
            let c = chi[(m, n)];
            let km = &k[m * 16 + n];
            for e in 0..16 {
                r[(e / 4, e % 4)] += c * km.as_slice()[e];
            }
        }
    }
    r
}

/// Direct solution of `p_r = w_r^dagger chi w_r` over the complete set of
/// 256 records; not constrained to be physical.
pub fn linear_inversion(table: &[[f64; 16]]) -> Result<ProcessMatrix, TomographyError> {
    if table.len() != 16 {
        return Err(TomographyError::Incomplete(format!("{} inputs", table.len())));
    }
    let (inputs, projectors) = tomography_bases();
    let mut b = DMatrix::<C64>::zeros(256, 256);
    let mut rhs = nalgebra::DVector::<C64>::zeros(256);
    for i in 0..16 {
        for j in 0..16 {
            let r = i * 16 + j;
            let w = record_vector(&inputs[i], &projectors[j]);
            for m in 0..16 {
                for n in 0..16 {
                    b[(r, m * 16 + n)] = w[m].conj() * w[n];
                }
            }
            rhs[r] = C64::new(table[i][j], 0.0);
        }
    }
    let x = b.lu().solve(&rhs).ok_or(TomographyError::Singular)?;
    let mut chi = ComplexMatrix::zeros(16, 16);
    for m in 0..16 {
        for n in 0..16 {
            chi[(m, n)] = x[m * 16 + n];
        }
    }
    let herm = (&chi + &chi.adjoint()).scale(C64::new(0.5, 0.0));
    Ok(ProcessMatrix { chi: herm })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MleOutcome<T> {
    pub estimate: T,
    pub iterations: usize,
    /// Poisson deviance at the optimum.
    pub deviance: f64,
    pub tp_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MleOptions {
    pub max_iter: usize,
    /// Stop when the log-likelihood changes by less than this relative
    /// amount on three consecutive iterations.
    pub rel_tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { max_iter: 2000, rel_tol: 1e-10 }
    }
}

/// Likelihood problem over `rho = T^dagger T / Tr(T^dagger T)` with `T`
/// lower triangular and a real diagonal.
struct Problem {
    d: usize,
    /// Record vectors as columns.
    w: DMatrix<C64>,
    counts: Vec<f64>,
    scale: Vec<f64>,
    /// Saturated log-likelihood offset, so the objective is the deviance.
    offset: f64,
    tp: Option<Vec<ComplexMatrix>>,
}

impl Problem {
    fn new(d: usize, w: Vec<Vec<C64>>, counts: Vec<f64>, scale: Vec<f64>, tp: bool) -> Self {
        let offset = counts.iter().map(|&c| if c > 0.0 { c - c * c.ln() } else { 0.0 }).sum();
        let w = DMatrix::from_fn(d, w.len(), |i, r| w[r][i]);
        Self { d, w, counts, scale, offset, tp: tp.then(pauli_pair_products) }
    }

    fn n_params(&self) -> usize {
        self.d * self.d
    }

    /// Lower-triangular `T`: the diagonal, then real and imaginary parts of
    /// each entry below it.
    fn unpack(&self, x: &[f64]) -> ComplexMatrix {
        let d = self.d;
        let mut t = ComplexMatrix::zeros(d, d);
        let mut k = d;
        for i in 0..d {
            t[(i, i)] = C64::new(x[i], 0.0);
            for j in 0..i {
                t[(i, j)] = C64::new(x[k], x[k + 1]);
                k += 2;
            }
        }
        t
    }

    fn pack(&self, t: &ComplexMatrix) -> Vec<f64> {
        let d = self.d;
        let mut x = vec![0.0; d * d];
        let mut k = d;
        for i in 0..d {
            x[i] = t[(i, i)].re;
            for j in 0..i {
                x[k] = t[(i, j)].re;
                x[k + 1] = t[(i, j)].im;
                k += 2;
            }
        }
        x
    }

    fn rho(&self, t: &ComplexMatrix) -> ComplexMatrix {
        let tt = t.adjoint().matmul(t);
        let tr = tt.trace().re;
        tt.scale(C64::new(1.0 / tr, 0.0))
    }

    /// Objective and gradient with respect to the packed parameters.
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = self.d;
        let t = self.unpack(x);
        let tr: f64 = t.as_slice().iter().map(|z| z.norm_sqr()).sum();
        let rho = self.rho(&t);
        let mut f = -self.offset;
        let tn = t.to_nalgebra();
        let tw = &tn * &self.w;
        let mut weighted = self.w.clone();
        for r in 0..self.w.ncols() {
            let p = (tw.column(r).norm_squared() / tr).max(1e-300);
            let n = self.scale[r];
            let c = self.counts[r];
            f += n * p - if c > 0.0 { c * (n * p).ln() } else { 0.0 };
            weighted.column_mut(r).scale_mut(n - c / p);
        }
        let mut gamma = ComplexMatrix::from_nalgebra(&(weighted * self.w.adjoint()));
        if let Some(k) = &self.tp {
            let resid = &tp_map(&rho, k) - &ComplexMatrix::identity(4);
            f += TP_PENALTY * resid.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>();
            let rc: Vec<C64> = resid.as_slice().iter().map(|z| z.conj()).collect();
            let mut mm = ComplexMatrix::zeros(16, 16);
            for m in 0..16 {
                for n in 0..16 {
                    mm[(m, n)] = k[m * 16 + n].as_slice().iter().zip(&rc).map(|(a, b)| a * b).sum();
                }
            }
            for m in 0..16 {
                for n in 0..16 {
                    gamma[(n, m)] += (mm[(m, n)] + mm[(n, m)].conj()) * TP_PENALTY;
                }
            }
        }
        let g: f64 = (0..d).map(|i| (0..d).map(|j| (gamma[(i, j)] * rho[(j, i)]).re).sum::<f64>()).sum();
        let mut shifted = gamma;
        for i in 0..d {
            shifted[(i, i)] -= C64::new(g, 0.0);
        }
        let h = shifted.matmul(&t.adjoint()).scale(C64::new(2.0 / tr, 0.0));
        let mut grad = vec![0.0; d * d];
        let mut k = d;
        for i in 0..d {
            grad[i] = h[(i, i)].re;
            for j in 0..i {
                grad[k] = h[(j, i)].re;
                grad[k + 1] = -h[(j, i)].im;
                k += 2;
            }
        }
        (f, grad)
    }

    /// Start from the PSD part of `rho0` mixed with a little of the identity.
    fn start(&self, rho0: &ComplexMatrix) -> Vec<f64> {
        let d = self.d;
        let (vals, vecs) = hermitian_eigen(rho0);
        let mut psd = ComplexMatrix::zeros(d, d);
        let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
        for (k, &v) in vals.iter().enumerate() {
            let v = if total > 0.0 { v.max(0.0) / total } else { 1.0 / d as f64 };
            for i in 0..d {
                for j in 0..d {
                    psd[(i, j)] += vecs[(i, k)] * vecs[(j, k)].conj() * v;
                }
            }
        }
        let eps = 1e-5;
        let mut m = psd.scale(C64::new(1.0 - eps, 0.0));
        for i in 0..d {
            m[(i, i)] += C64::new(eps / d as f64, 0.0);
        }
        // rho = T^dagger T with T lower: Cholesky of the index-reversed matrix.
        let rev = DMatrix::from_fn(d, d, |i, j| m[(d - 1 - i, d - 1 - j)]);
        let l = rev.cholesky().map(|c| c.l()).unwrap_or_else(|| DMatrix::identity(d, d));
        let mut t = ComplexMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                // T = J L^dagger J
                t[(i, j)] = l[(d - 1 - j, d - 1 - i)].conj();
            }
        }
        self.pack(&t)
    }
}

struct LbfgsResult {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

/// Limited-memory BFGS with a backtracking Armijo line search. Changes are
/// measured relative to `|f + offset|`, the magnitude of the log-likelihood.
/// Value and gradient at a point.
type Objective<'a> = dyn Fn(&[f64]) -> (f64, Vec<f64>) + 'a;

fn lbfgs(eval: &Objective<'_>, x0: Vec<f64>, offset: f64, opts: &MleOptions) -> LbfgsResult {
    const MEM: usize = 12;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = x0;
    let (mut f, mut g) = eval(&x);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut quiet = 0;
    for it in 1..=opts.max_iter {
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let a = dot(s, &q) / dot(y, s);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let gn = dot(&g, &g).sqrt().max(1e-300);
            q.iter_mut().for_each(|v| *v *= 1e-2 / gn);
        }
        for ((s, y), a) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = dot(y, &q) / dot(y, s);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let (fnew, gnew) = eval(&xn);
            if fnew.is_finite() && fnew <= f + 1e-4 * step * slope {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            let gn = dot(&g, &g).sqrt();
            return LbfgsResult { x, f, iterations: it, converged: gn < 1e-6 * (1.0 + f.abs()) };
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-300 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > MEM {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let change = (f - fnew).abs();
        x = xn;
        f = fnew;
        g = gnew;
        quiet = if change <= opts.rel_tol * (f + offset).abs().max(1.0) { quiet + 1 } else { 0 };
        if quiet >= 3 {
            return LbfgsResult { x, f, iterations: it, converged: true };
        }
    }
    LbfgsResult { x, f, iterations: opts.max_iter, converged: false }
}

fn check_complete(ds: &TomographyDataset) -> Result<(), TomographyError> {
    let mut seen = [[false; 16]; 16];
    for r in &ds.records {
        if r.input_index >= 16 || r.projector_index >= 16 {
            return Err(TomographyError::Incomplete(format!("index ({}, {}) out of range", r.input_index, r.projector_index)));
        }
        seen[r.input_index][r.projector_index] = true;
    }
    for (i, row) in seen.iter().enumerate() {
        let missing = row.iter().filter(|s| !**s).count();
        if missing > 0 {
            return Err(TomographyError::Incomplete(format!("input {i} lacks {missing} projectors")));
        }
    }
    if !(ds.total_counts() > 0.0) {
        return Err(TomographyError::NoCounts);
    }
    Ok(())
}

/// Poisson MLE of a physical process matrix from a full 256-record dataset.
pub fn mle_reconstruct_process(ds: &TomographyDataset, opts: &MleOptions) -> Result<MleOutcome<ProcessMatrix>, TomographyError> {
    check_complete(ds)?;
    let (inputs, projectors) = tomography_bases();
    let w: Vec<Vec<C64>> = ds.records.iter().map(|r| record_vector(&inputs[r.input_index], &projectors[r.projector_index])).collect();
    let counts: Vec<f64> = ds.records.iter().map(|r| r.counts).collect();
    let scale: Vec<f64> = ds.records.iter().map(Record::scale).collect();
    let problem = Problem::new(16, w, counts, scale, true);

    let mut table = vec![[0.0; 16]; 16];
    let mut norm = vec![[0.0; 16]; 16];
    for r in &ds.records {
        table[r.input_index][r.projector_index] += r.counts;
        norm[r.input_index][r.projector_index] += r.scale();
    }
    for i in 0..16 {
        for j in 0..16 {
            table[i][j] /= norm[i][j].max(1e-300);
        }
    }
    let start = linear_inversion(&table).map(|p| p.chi).unwrap_or_else(|_| ComplexMatrix::identity(16));
    let x0 = problem.start(&start);
    debug_assert_eq!(x0.len(), problem.n_params());
    let res = lbfgs(&|x| problem.eval(x), x0, problem.offset, opts);
    if !res.converged {
        return Err(TomographyError::NoConvergence { iterations: res.iterations, deviance: res.f });
    }
    let chi = ProcessMatrix { chi: problem.rho(&problem.unpack(&res.x)) };
    let tp_residual = chi.tp_residual();
    Ok(MleOutcome { estimate: chi, iterations: res.iterations, deviance: res.f, tp_residual })
}

/// Poisson MLE of a two-qubit density matrix from projector records of a
/// single input; `input_index` is ignored.
pub fn mle_reconstruct_state(records: &[Record], opts: &MleOptions) -> Result<MleOutcome<DensityMatrix>, TomographyError> {
    let mut seen = [false; 16];
    for r in records {
        if r.projector_index >= 16 {
            return Err(TomographyError::Incomplete(format!("projector {} out of range", r.projector_index)));
        }
        seen[r.projector_index] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(TomographyError::Incomplete("state tomography needs all 16 projectors".into()));
    }
    if !(records.iter().map(|r| r.counts).sum::<f64>() > 0.0) {
        return Err(TomographyError::NoCounts);
    }
    let (_, projectors) = tomography_bases();
    let w: Vec<Vec<C64>> = records.iter().map(|r| projectors[r.projector_index].amplitudes().to_vec()).collect();
    let counts: Vec<f64> = records.iter().map(|r| r.counts).collect();
    let scale: Vec<f64> = records.iter().map(Record::scale).collect();
    let problem = Problem::new(4, w, counts, scale, false);
    let x0 = problem.start(&ComplexMatrix::identity(4).scale(C64::new(0.25, 0.0)));
    let res = lbfgs(&|x| problem.eval(x), x0, problem.offset, opts);
    if !res.converged {
        return Err(TomographyError::NoConvergence { iterations: res.iterations, deviance: res.f });
    }
    let rho = problem.rho(&problem.unpack(&res.x));
    let dm = DensityMatrix::new(rho).expect("T^dagger T is a valid density matrix");
    Ok(MleOutcome { estimate: dm, iterations: res.iterations, deviance: res.f, tp_residual: 0.0 })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fidelity {
    pub value: f64,
    /// Set when `Tr(a b)` fell outside `[0, 1 + 1e-8]` or had an imaginary
    /// part above 1e-9.
    pub out_of_range: bool,
}

/// `Tr(a b)`.
pub fn process_fidelity(a: &ProcessMatrix, b: &ProcessMatrix) -> Fidelity {
    let t = a.chi.matmul(&b.chi).trace();
    let out_of_range = t.im.abs() > 1e-9 || t.re < -1e-8 || t.re > 1.0 + 1e-8;
    Fidelity { value: t.re, out_of_range }
}

/// Bhattacharyya overlap `sum_i sqrt(p_i q_i)`.
pub fn classical_fidelity(p: &[f64], q: &[f64]) -> Result<f64, TomographyError> {
    let valid = |d: &[f64]| d.iter().all(|v| *v >= 0.0) && (d.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
    if p.len() != q.len() || !valid(p) || !valid(q) {
        return Err(TomographyError::BadDistribution);
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub mean: f64,
    pub std: f64,
    pub resamples: usize,
    pub failures: usize,
}

/// Poisson resampling of every count, MLE per resample, and fidelity
/// statistics against `ideal`. Resample `k` uses seed `mix_seed(seed, k)`.
pub fn monte_carlo_errorbars(
    ds: &TomographyDataset,
    ideal: &ProcessMatrix,
    n_resamples: usize,
    seed: u64,
    opts: &MleOptions,
    mode: ExecMode,
) -> Result<McSummary, TomographyError> {
    if n_resamples < 2 {
        return Err(TomographyError::TooFewResamples);
    }
    check_complete(ds)?;
    let fids = par::map_range(mode, n_resamples, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, k as u64));
        let mut d = ds.clone();
        for r in &mut d.records {
            r.counts = poisson(r.counts, &mut rng);
        }
        mle_reconstruct_process(&d, opts).ok().map(|o| process_fidelity(ideal, &o.estimate).value)
    });
    let ok: Vec<f64> = fids.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(TomographyError::AllResamplesFailed(n_resamples));
    }
    let mean = ok.iter().sum::<f64>() / ok.len() as f64;
    let var = ok.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (ok.len().max(2) - 1) as f64;
    Ok(McSummary { mean, std: var.sqrt(), resamples: n_resamples, failures: n_resamples - ok.len() })
}

/// Identity channel as a process matrix.
pub fn identity_process() -> ProcessMatrix {
    let mut chi = ComplexMatrix::zeros(16, 16);
    chi[(0, 0)] = ONE;
    ProcessMatrix { chi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{haar_unitary, random_state};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn bases() {
        let (inputs, projectors) = tomography_bases();
        assert_eq!(inputs[0], StateVector::basis(4, 0));
        let r = C64::new(FRAC_1_SQRT_2, 0.0);
        let bell = StateVector::new(vec![r, ZERO, ZERO, r]);
        // "++" is index 4*2 + 2: <++|bell> = (1/2)(2/sqrt2).
        assert_abs_diff_eq!(projectors[10].inner(&bell).norm_sqr(), 0.5, epsilon = 1e-12);
        // Gram matrix of the 16 input density matrices is nonsingular.
        let rhos: Vec<ComplexMatrix> = inputs.iter().map(|s| s.projector()).collect();
        let gram = DMatrix::<C64>::from_fn(16, 16, |i, j| rhos[i].adjoint().matmul(&rhos[j]).trace());
        let sv = gram.singular_values();
        assert!(sv.iter().all(|v| *v > 1e-3), "{sv}");
    }

    #[test]
    fn prediction_examples() {
        let id = identity_process();
        assert_abs_diff_eq!(predict_probability(&id, 0, 0).probability, 1.0, epsilon = 1e-12);
        let cnot = ProcessMatrix::from_unitary(&gates::cnot());
        // |10> is input index 4.
        assert_abs_diff_eq!(predict_probability(&cnot, 4, 5).probability, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(predict_probability(&cnot, 8, 10).probability, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn chi_matches_direct_evolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = haar_unitary(4, &mut rng);
        let chi = ProcessMatrix::from_unitary(&u);
        let psi = random_state(4, &mut rng);
        let direct = psi.apply(&u).projector();
        assert!((&chi.apply(&psi.projector()) - &direct).max_norm() < 1e-12);
        assert!(chi.tp_residual() < 1e-12);
        assert_abs_diff_eq!(chi.trace(), 1.0, epsilon = 1e-12);
        let table = unitary_table(&u);
        for (i, row) in table.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                assert_abs_diff_eq!(predict_probability(&chi, i, j).probability, *want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fidelity_examples() {
        let cnot = ProcessMatrix::from_unitary(&gates::cnot());
        let id = identity_process();
        assert_abs_diff_eq!(process_fidelity(&cnot, &cnot).value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(process_fidelity(&cnot, &id).value, 0.25, epsilon = 1e-12);
        let cz = ProcessMatrix::from_unitary(&gates::cz());
        assert_abs_diff_eq!(process_fidelity(&cnot, &cz).value, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn classical_fidelity_examples() {
        let p = [0.5, 0.5, 0.0, 0.0];
        assert_abs_diff_eq!(classical_fidelity(&p, &p).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(classical_fidelity(&p, &[0.0, 0.0, 0.5, 0.5]).unwrap(), 0.0);
        assert_abs_diff_eq!(classical_fidelity(&p, &[0.25; 4]).unwrap(), 2.0 * 0.125f64.sqrt(), epsilon = 1e-15);
        assert!(classical_fidelity(&p, &[1.0]).is_err());
    }

    #[test]
    fn sampling() {
        let mut table = vec![[0.0; 16]; 16];
        table[0][0] = 1.0;
        let ds = sample_counts(&table, 100.0, 10.0, 3);
        assert_eq!(ds.records.len(), 256);
        let c = ds.records[0].counts;
        assert!((800.0..=1200.0).contains(&c));
        assert!(ds.records[1..].iter().all(|r| r.counts == 0.0));
        assert_eq!(sample_counts(&table, 100.0, 10.0, 3), ds);
    }

    #[test]
    fn poisson_mean() {
        let n = 1000;
        let mean: f64 = (0..n)
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                poisson(1000.0, &mut rng)
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1000.0).abs() < 3.0 * (1000.0f64 / n as f64).sqrt());
    }

    fn state_records(rho: &ComplexMatrix) -> Vec<Record> {
        let (_, projectors) = tomography_bases();
        projectors
            .iter()
            .enumerate()
            .map(|(j, pi)| {
                let p = quad_form(rho, pi.amplitudes());
                Record { input_index: 0, projector_index: j, counts: p * 1000.0, time_s: 10.0, rate: 100.0 }
            })
            .collect()
    }

    #[test]
    fn state_mle_examples() {
        let zero = StateVector::basis(4, 0);
        let out = mle_reconstruct_state(&state_records(&zero.projector()), &MleOptions::default()).unwrap();
        let truth = DensityMatrix::from_pure(&zero);
        assert!(out.estimate.trace_distance(&truth) < 1e-6, "{}", out.estimate.trace_distance(&truth));

        let r = C64::new(FRAC_1_SQRT_2, 0.0);
        let bell = StateVector::new(vec![r, ZERO, ZERO, r]);
        let out = mle_reconstruct_state(&state_records(&bell.projector()), &MleOptions::default()).unwrap();
        assert!(crate::qmath::state_fidelity(&bell, &out.estimate).unwrap() >= 0.9999);

        let mixed = ComplexMatrix::identity(4).scale(C64::new(0.25, 0.0));
        let out = mle_reconstruct_state(&state_records(&mixed), &MleOptions::default()).unwrap();
        assert!((out.estimate.matrix() - &mixed).max_norm() < 1e-4);
    }

    #[test]
    fn process_mle_identity() {
        let ds = TomographyDataset::expected(&unitary_table(&ComplexMatrix::identity(4)), 100.0, 10.0);
        let out = mle_reconstruct_process(&ds, &MleOptions::default()).unwrap();
        assert!(out.estimate.chi[(0, 0)].re >= 0.9999, "{} {} {}", out.estimate.chi[(0, 0)], out.iterations, out.deviance);
    }

    #[test]
    fn process_mle_rejects_incomplete() {
        let mut ds = TomographyDataset::expected(&unitary_table(&gates::cnot()), 100.0, 10.0);
        ds.records.retain(|r| r.input_index != 3);
        assert!(matches!(mle_reconstruct_process(&ds, &MleOptions::default()), Err(TomographyError::Incomplete(_))));
        let mut zero = TomographyDataset::expected(&unitary_table(&gates::cnot()), 100.0, 10.0);
        zero.records.iter_mut().for_each(|r| r.counts = 0.0);
        assert!(matches!(mle_reconstruct_process(&zero, &MleOptions::default()), Err(TomographyError::NoCounts)));
        let ideal = ProcessMatrix::from_unitary(&gates::cnot());
        assert!(monte_carlo_errorbars(&zero, &ideal, 4, 0, &MleOptions::default(), ExecMode::Serial).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = haar_unitary(4, &mut rng);
        let ds = sample_counts(&unitary_table(&u), 100.0, 1.0, 9);
        let (inputs, projectors) = tomography_bases();
        let w = ds.records.iter().map(|r| record_vector(&inputs[r.input_index], &projectors[r.projector_index])).collect();
        let p = Problem::new(16, w, ds.records.iter().map(|r| r.counts).collect(), vec![100.0; 256], true);
        let x: Vec<f64> = (0..256).map(|k| ((k * 37 % 101) as f64 / 101.0) - 0.3).collect();
        let (_, g) = p.eval(&x);
        for k in [0, 5, 16, 17, 100, 255] {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let fd = (p.eval(&xp).0 - p.eval(&xm).0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-4 * (1.0 + fd.abs()), "{k}: {fd} vs {}", g[k]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn classical_fidelity_symmetric(a in proptest::collection::vec(0.0f64..1.0, 4), b in proptest::collection::vec(0.0f64..1.0, 4)) {
            let sa: f64 = a.iter().sum();
            let sb: f64 = b.iter().sum();
            prop_assume!(sa > 1e-3 && sb > 1e-3);
            let p: Vec<f64> = a.iter().map(|v| v / sa).collect();
            let q: Vec<f64> = b.iter().map(|v| v / sb).collect();
            let f1 = classical_fidelity(&p, &q).unwrap();
            let f2 = classical_fidelity(&q, &p).unwrap();
            prop_assert!((f1 - f2).abs() < 1e-15);
            prop_assert!((classical_fidelity(&p, &p).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn pure_process_fidelity_closed_form(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = haar_unitary(4, &mut rng);
            let v = haar_unitary(4, &mut rng);
            let f = process_fidelity(&ProcessMatrix::from_unitary(&u), &ProcessMatrix::from_unitary(&v)).value;
            let want = (u.adjoint().matmul(&v).trace() / 4.0).norm_sqr();
            prop_assert!((f - want).abs() < 1e-9);
        }
    }
}
