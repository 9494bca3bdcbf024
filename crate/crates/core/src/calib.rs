//! Hardware model: beam-splitter and phase-shifter transfer matrices, the
//! five-shifter cascaded array, phase-current laws, calibration fits and the
//! imbalanced-MZI pump filter.
//!
//! Currents are in mA, so quadratic phase coefficients carry rad/mA^2.

use crate::par::{self, ExecMode};
use crate::qmath::{ComplexMatrix, StateVector, C64, ONE, ZERO};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("splitting ratio {0} outside (0, 1)")]
    BadEta(f64),
    #[error("need at least {needed} samples with distinct currents, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("scan has no usable contrast (max - min = {contrast:.3e})")]
    Degenerate { contrast: f64 },
    #[error("fit did not converge (rms residual {rms:.3e})")]
    NoConvergence { rms: f64 },
    #[error("calibration failed: best rms residual {best_rms:.3e} over {starts} starts")]
    CalibrationFailed { best_rms: f64, starts: usize, per_start_rms: Vec<f64> },
}

/// 2x2 matrix in row-major order, used on the hot paths of the fits.
pub type M2 = [[C64; 2]; 2];

fn m2_mul(a: &M2, b: &M2) -> M2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

fn bs2(eta: f64) -> M2 {
    let t = C64::new(eta.sqrt(), 0.0);
    let r = C64::new(0.0, (1.0 - eta).sqrt());
    [[t, r], [r, t]]
}

fn ps2(theta: f64) -> M2 {
    [[ONE, ZERO], [ZERO, C64::from_polar(1.0, theta)]]
}

pub fn m2_to_matrix(m: &M2) -> ComplexMatrix {
    ComplexMatrix::from_rows(&[[m[0][0], m[0][1]], [m[1][0], m[1][1]]])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Component {
    /// MMI beam splitter with power splitting ratio `eta`.
    Bs(f64),
    /// Phase shifter on the lower arm.
    Ps(f64),
}

/// `BS[eta] = [sqrt(eta), i sqrt(1-eta); i sqrt(1-eta), sqrt(eta)]`,
/// `PS[theta] = diag(1, e^{i theta})`.
pub fn component_matrix(c: Component) -> Result<ComplexMatrix, CalibError> {
    match c {
        Component::Bs(eta) => {
            if !(eta > 0.0 && eta < 1.0) && eta != 1.0 {
                return Err(CalibError::BadEta(eta));
            }
            Ok(m2_to_matrix(&bs2(eta)))
        }
        Component::Ps(theta) => Ok(m2_to_matrix(&ps2(theta))),
    }
}

/// `BS[eta_b] PS[theta] BS[eta_a]`.
pub fn mzi(theta: f64, eta_a: f64, eta_b: f64) -> M2 {
    m2_mul(&bs2(eta_b), &m2_mul(&ps2(theta), &bs2(eta_a)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShifterModel {
    pub resistance: f64,
    pub phi1: f64,
    pub phi0: f64,
}

/// Five-shifter array: `etas[0..6]` for the beam splitters, and per shifter
/// the quadratic coefficient `phi1` and zero-current offset `dtheta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayModel {
    pub etas: [f64; 6],
    pub phi1: [f64; 5],
    pub dtheta: [f64; 5],
}

impl ArrayModel {
    pub fn nominal(phi1: f64, dtheta: f64) -> Self {
        Self { etas: [0.5; 6], phi1: [phi1; 5], dtheta: [dtheta; 5] }
    }

    pub fn phases(&self, currents: &[f64; 5]) -> [f64; 5] {
        std::array::from_fn(|i| phase_from_current(currents[i], self.phi1[i], self.dtheta[i]))
    }

    /// `|<0|U_array|0>|^2` at the given currents.
    pub fn intensity(&self, currents: &[f64; 5]) -> f64 {
        array_transfer2(&self.etas, &self.phases(currents))[0][0].norm_sqr()
    }

    fn from_params(p: &[f64]) -> Self {
        Self {
            etas: std::array::from_fn(|i| p[i].clamp(1e-6, 1.0 - 1e-6)),
            phi1: std::array::from_fn(|i| p[6 + i]),
            dtheta: std::array::from_fn(|i| p[11 + i].rem_euclid(TAU)),
        }
    }
}

/// `BS[eta5] PS[theta5] BS[eta4] ... PS[theta1] BS[eta0]`.
pub fn array_transfer(etas: &[f64; 6], thetas: &[f64; 5]) -> ComplexMatrix {
    m2_to_matrix(&array_transfer2(etas, thetas))
}

pub fn array_transfer2(etas: &[f64; 6], thetas: &[f64; 5]) -> M2 {
    let mut u = bs2(etas[0]);
    for i in 0..5 {
        u = m2_mul(&ps2(thetas[i]), &u);
        u = m2_mul(&bs2(etas[i + 1]), &u);
    }
    u
}

/// Phase settings of one array: shifters 1-2 prepare a qubit state from
/// light injected in rail 0, shifters 3-5 apply a single-qubit operation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArraySettings {
    pub thetas: [f64; 5],
    /// Phase of the ideal array output relative to `op |state>`; it is
    /// compensated upstream by the pump phase of the path.
    pub phase: f64,
}

/// Settings that make the balanced array output `op |state>` up to a phase.
pub fn array_settings(state: &StateVector, op: &ComplexMatrix) -> ArraySettings {
    let s = state.amplitudes();
    // PS[t2] MZI(t1)|0> = i e^{i t1/2} (-sin(t1/2), cos(t1/2) e^{i t2}).
    let t1 = 2.0 * s[0].norm().min(1.0).asin();
    let t2 = if s[0].norm() > 1e-12 && s[1].norm() > 1e-12 { s[1].arg() - s[0].arg() + PI } else { 0.0 };
    let (t3, t4, t5) = mzi_ps_mzi_angles(op);
    let thetas = [t1, t2, t3, t4, t5];
    let realized = array_transfer2(&[0.5; 6], &thetas);
    let out = [realized[0][0], realized[1][0]];
    let target = op.apply(s);
    let overlap: C64 = target.iter().zip(&out).map(|(t, o)| t.conj() * o).sum();
    ArraySettings { thetas, phase: overlap.arg() }
}

/// Angles `(t3, t4, t5)` with `MZI(t5) PS(t4) MZI(t3)` equal to `u` up to a
/// global phase.
///
/// With `F(t) = [[-sin t, cos t], [cos t, sin t]]`, `MZI(theta)` is
/// `i e^{i theta/2} F(theta/2)`, and `F(a) D(phi) F(b) e^{-i phi/2}` has
/// `x = cos(phi/2) cos(a-b) + i sin(phi/2) cos(a+b)` and
/// `y = -cos(phi/2) sin(a-b) + i sin(phi/2) sin(a+b)` in its first row.
pub fn mzi_ps_mzi_angles(u: &ComplexMatrix) -> (f64, f64, f64) {
    let det = u.determinant();
    let root = det.sqrt();
    let x = u[(0, 0)] / root;
    let y = u[(0, 1)] / root;
    let re = (x.re * x.re + y.re * y.re).sqrt();
    let im = (x.im * x.im + y.im * y.im).sqrt();
    let half_phi = im.atan2(re);
    let p = if re > 1e-14 { (-y.re).atan2(x.re) } else { 0.0 };
    let q = if im > 1e-14 { y.im.atan2(x.im) } else { 0.0 };
    let a = (p + q) / 2.0;
    let b = (q - p) / 2.0;
    (2.0 * b, 2.0 * half_phi, 2.0 * a)
}

/// Ideal-or-perturbed array realization; returns the 2x2 transfer matrix.
pub fn realize_array(settings: &ArraySettings, etas: &[f64; 6], theta_noise: &[f64; 5]) -> M2 {
    let t: [f64; 5] = std::array::from_fn(|i| settings.thetas[i] + theta_noise[i]);
    array_transfer2(etas, &t)
}

pub fn phase_from_current(i_ma: f64, phi1: f64, phi0: f64) -> f64 {
    phi1 * i_ma * i_ma + phi0
}

/// Smallest `I >= 0` with `phi1 I^2 + phi0 = theta`, if any.
pub fn current_for_phase(theta: f64, phi1: f64, phi0: f64) -> Option<f64> {
    let r = (theta - phi0) / phi1;
    (phi1 > 0.0 && r >= 0.0).then(|| r.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IvFit {
    /// Ohms.
    pub resistance: f64,
    /// Volts.
    pub delta_v: f64,
    pub rms: f64,
}

/// Ordinary least squares of `V = R I + dV` over `(mA, V)` samples.
pub fn fit_iv(samples: &[(f64, f64)]) -> Result<IvFit, CalibError> {
    let n = samples.len();
    let mean_i = samples.iter().map(|s| s.0).sum::<f64>() / n.max(1) as f64;
    let mean_v = samples.iter().map(|s| s.1).sum::<f64>() / n.max(1) as f64;
    let sxx: f64 = samples.iter().map(|s| (s.0 - mean_i).powi(2)).sum();
    if n < 2 || sxx <= 1e-18 * (1.0 + mean_i * mean_i) {
        return Err(CalibError::TooFewSamples { needed: 2, got: n });
    }
    let sxy: f64 = samples.iter().map(|s| (s.0 - mean_i) * (s.1 - mean_v)).sum();
    let slope = sxy / sxx;
    let delta_v = mean_v - slope * mean_i;
    let rms = (samples.iter().map(|s| (s.1 - slope * s.0 - delta_v).powi(2)).sum::<f64>() / n as f64).sqrt();
    Ok(IvFit { resistance: slope * 1e3, delta_v, rms })
}

/// Cross-port intensity of a balanced MZI, `|<0|BS PS[theta(I)] BS|0>|^2`.
pub fn simulate_fringe(phi1: f64, phi0: f64, currents: &[f64]) -> Vec<f64> {
    currents.iter().map(|&i| mzi(phase_from_current(i, phi1, phi0), 0.5, 0.5)[0][0].norm_sqr()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShifterFit {
    pub phi1: f64,
    pub phi0: f64,
    pub rms: f64,
}

/// Fits `(phi1, phi0)` to a single-shifter fringe.
///
/// A grid over `phi1` with a closed-form solve for `(cos phi0, sin phi0)`
/// gives a start; Levenberg-Marquardt refines it. `phi0` is reported in
/// `[0, 2 pi)`.
pub fn fit_independent_shifter(scan: &[(f64, f64)]) -> Result<ShifterFit, CalibError> {
    if scan.len() < 4 {
        return Err(CalibError::TooFewSamples { needed: 4, got: scan.len() });
    }
    let (lo, hi) = scan.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(s.1), h.max(s.1)));
    if hi - lo < 1e-3 {
        return Err(CalibError::Degenerate { contrast: hi - lo });
    }
    let i2max = scan.iter().map(|s| s.0 * s.0).fold(0.0, f64::max);
    let min_di = min_current_step(scan);
    // Sampling limit: adjacent samples must differ by less than pi in phase.
    let phi1_max = (PI / (2.0 * i2max.sqrt() * min_di)).min(20.0);
    let step = 0.1 / i2max;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut phi1 = step;
    while phi1 <= phi1_max {
        let (phi0, sse) = best_offset(scan, phi1);
        if sse < best.0 {
            best = (sse, phi1, phi0);
        }
        phi1 += step;
    }
    let resid = |p: &[f64]| -> Vec<f64> {
        scan.iter().map(|&(i, y)| y - 0.5 * (1.0 - phase_from_current(i, p[0], p[1]).cos())).collect()
    };
    let fit = levenberg_marquardt(&resid, vec![best.1, best.2], &LmOptions::default());
    let rms = (fit.cost * 2.0 / scan.len() as f64).sqrt();
    if !(fit.x[0] > 0.0) || rms > 0.05 {
        return Err(CalibError::NoConvergence { rms });
    }
    Ok(ShifterFit { phi1: fit.x[0], phi0: fit.x[1].rem_euclid(TAU), rms })
}

fn min_current_step(scan: &[(f64, f64)]) -> f64 {
    let mut c: Vec<f64> = scan.iter().map(|s| s.0).collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min).max(1e-6)
}

/// For fixed `phi1`, `y - 1/2 = -c cos(u)/2 + s sin(u)/2` is linear in
/// `(c, s) = (cos phi0, sin phi0)`; solve it and project onto the circle.
fn best_offset(scan: &[(f64, f64)], phi1: f64) -> (f64, f64) {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(i, y) in scan {
        let u = phi1 * i * i;
        let (f1, f2) = (-0.5 * u.cos(), 0.5 * u.sin());
        a11 += f1 * f1;
        a12 += f1 * f2;
        a22 += f2 * f2;
        b1 += f1 * (y - 0.5);
        b2 += f2 * (y - 0.5);
    }
    let det = a11 * a22 - a12 * a12;
    let phi0 = if det.abs() > 1e-300 {
        let c = (a22 * b1 - a12 * b2) / det;
        let s = (a11 * b2 - a12 * b1) / det;
        s.atan2(c)
    } else {
        0.0
    };
    let sse = scan.iter().map(|&(i, y)| (y - 0.5 * (1.0 - (phi1 * i * i + phi0).cos())).powi(2)).sum();
    (phi0, sse)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayScanPoint {
    pub currents: [f64; 5],
    pub intensity: f64,
}

/// Full-factorial scan over `levels` in each of the five currents.
pub fn synthetic_array_scan(model: &ArrayModel, levels: &[f64]) -> Vec<ArrayScanPoint> {
    let n = levels.len();
    let total = n.pow(5);
    (0..total)
        .map(|mut k| {
            let mut currents = [0.0; 5];
            for c in currents.iter_mut().rev() {
                *c = levels[k % n];
                k /= n;
            }
            ArrayScanPoint { currents, intensity: model.intensity(&currents) }
        })
        .collect()
}

/// `n` evenly spaced currents from `0` to `max_ma`.
pub fn current_levels(n: usize, max_ma: f64) -> Vec<f64> {
    (0..n).map(|i| max_ma * i as f64 / (n - 1).max(1) as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadedFitOptions {
    /// Random candidates screened before refinement.
    pub candidates: usize,
    /// Best candidates refined with Levenberg-Marquardt (at least 8).
    pub starts: usize,
    pub seed: u64,
    /// Accept when the rms residual is below this.
    pub rms_threshold: f64,
    pub max_iter: usize,
    /// Search range for the quadratic coefficients. With squared currents on
    /// a lattice of spacing `g`, `phi` and `2 pi / g - phi` fit equally well,
    /// so the range must stay below `pi / g` (0.62 for five levels on 0-9 mA).
    pub phi1_range: (f64, f64),
}

impl Default for CascadedFitOptions {
    fn default() -> Self {
        Self { candidates: 256, starts: 8, seed: 0x5eed, rms_threshold: 1e-7, max_iter: 500, phi1_range: (0.01, 0.6) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadedFit {
    pub model: ArrayModel,
    /// Fitted intensity scale `A`.
    pub scale: f64,
    pub rms: f64,
    pub per_start_rms: Vec<f64>,
}

/// Least-squares fit of the 16 array parameters plus the scale `A` to a 5-D
/// scan. `A` is eliminated in closed form for every parameter vector.
///
/// Along a line where only current `k` varies the intensity is
/// `a + b cos(phi1_k I^2 + c)`, so each `phi1_k` is first located by pooling
/// all such lines. The splitting ratios and offsets are then found by a
/// seeded multi-start refinement of all 16 parameters.
pub fn fit_cascaded_array(
    scan: &[ArrayScanPoint],
    opts: &CascadedFitOptions,
    mode: ExecMode,
) -> Result<CascadedFit, CalibError> {
    if scan.len() < 17 {
        return Err(CalibError::TooFewSamples { needed: 17, got: scan.len() });
    }
    let (lo, hi) = scan.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(s.intensity), h.max(s.intensity)));
    if hi - lo < 1e-9 {
        return Err(CalibError::Degenerate { contrast: hi - lo });
    }
    let axes: Vec<usize> = (0..5).collect();
    let phi_est = par::map(mode, &axes, |&k| estimate_axis_phi1(scan, k, opts.phi1_range));

    let resid = |p: &[f64]| -> Vec<f64> {
        let m = ArrayModel::from_params(p);
        let f: Vec<f64> = scan.iter().map(|s| m.intensity(&s.currents)).collect();
        let a = optimal_scale(scan, &f);
        scan.iter().zip(&f).map(|(s, fi)| s.intensity - a * fi).collect()
    };
    let cost = |p: &[f64]| resid(p).iter().map(|r| r * r).sum::<f64>();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut cands: Vec<Vec<f64>> = (0..opts.candidates.max(opts.starts))
        .map(|_| {
            let mut p = Vec::with_capacity(16);
            p.extend((0..6).map(|_| rng.gen_range(0.47..0.53)));
            p.extend(phi_est.iter().map(|e| e.unwrap_or_else(|| rng.gen_range(opts.phi1_range.0..opts.phi1_range.1))));
            p.extend((0..5).map(|_| rng.gen_range(0.0..TAU)));
            p
        })
        .collect();
    let costs = par::map(mode, &cands, |p| cost(p));
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
    let starts: Vec<Vec<f64>> = order.iter().take(opts.starts.max(8)).map(|&i| std::mem::take(&mut cands[i])).collect();

    let lm = LmOptions { max_iter: opts.max_iter, ..LmOptions::default() };
    let fits = par::map(mode, &starts, |p| levenberg_marquardt(&resid, p.clone(), &lm));
    let per_start_rms: Vec<f64> = fits.iter().map(|f| (2.0 * f.cost / scan.len() as f64).sqrt()).collect();
    let best = (0..fits.len()).min_by(|&a, &b| per_start_rms[a].total_cmp(&per_start_rms[b])).expect("at least one start");
    let rms = per_start_rms[best];
    if !(rms <= opts.rms_threshold) {
        return Err(CalibError::CalibrationFailed { best_rms: rms, starts: fits.len(), per_start_rms });
    }
    let model = ArrayModel::from_params(&fits[best].x);
    let f: Vec<f64> = scan.iter().map(|s| model.intensity(&s.currents)).collect();
    Ok(CascadedFit { scale: optimal_scale(scan, &f), model, rms, per_start_rms })
}

/// Pooled line fit for axis `k`; `None` when the scan has no line with at
/// least four distinct currents along that axis.
fn estimate_axis_phi1(scan: &[ArrayScanPoint], k: usize, range: (f64, f64)) -> Option<f64> {
    use std::collections::BTreeMap;
    let mut lines: BTreeMap<[u64; 4], Vec<(f64, f64)>> = BTreeMap::new();
    for s in scan {
        let mut key = [0u64; 4];
        let mut j = 0;
        for (i, c) in s.currents.iter().enumerate() {
            if i != k {
                key[j] = c.to_bits();
                j += 1;
            }
        }
        lines.entry(key).or_default().push((s.currents[k] * s.currents[k], s.intensity));
    }
    let lines: Vec<Vec<(f64, f64)>> = lines.into_values().filter(|l| l.len() >= 4).collect();
    if lines.is_empty() {
        return None;
    }
    let i2max = lines.iter().flatten().map(|p| p.0).fold(0.0, f64::max);
    let sse = |phi: f64| -> f64 { lines.iter().map(|l| sinusoid_sse(l, phi)).sum() };
    let step = 0.05 / i2max.max(1e-12);
    let mut best = (f64::INFINITY, range.0);
    let mut phi = range.0;
    while phi <= range.1 {
        let v = sse(phi);
        if v < best.0 {
            best = (v, phi);
        }
        phi += step;
    }
    // Golden-section polish inside the winning cell.
    let (mut a, mut b) = (best.1 - step, best.1 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if sse(c) < sse(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Some(0.5 * (a + b))
}

/// Residual of the best `a + p cos(phi x) + q sin(phi x)` fit.
fn sinusoid_sse(line: &[(f64, f64)], phi: f64) -> f64 {
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut aty = nalgebra::Vector3::<f64>::zeros();
    let mut yy = 0.0;
    for &(x, y) in line {
        let r = nalgebra::Vector3::new(1.0, (phi * x).cos(), (phi * x).sin());
        ata += r * r.transpose();
        aty += r * y;
        yy += y * y;
    }
    match ata.try_inverse() {
        Some(inv) => (yy - aty.dot(&(inv * aty))).max(0.0),
        None => 0.0,
    }
}

fn optimal_scale(scan: &[ArrayScanPoint], f: &[f64]) -> f64 {
    let num: f64 = scan.iter().zip(f).map(|(s, fi)| s.intensity * fi).sum();
    let den: f64 = f.iter().map(|fi| fi * fi).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when the parameter step norm falls below this.
    pub step_tol: f64,
    /// Forward-difference step for the Jacobian.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 500, step_tol: 1e-10, fd_step: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmResult {
    pub x: Vec<f64>,
    /// Half the sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
}

/// Levenberg-Marquardt with a forward-difference Jacobian and Marquardt
/// diagonal scaling.
pub fn levenberg_marquardt(resid: &dyn Fn(&[f64]) -> Vec<f64>, x0: Vec<f64>, opts: &LmOptions) -> LmResult {
    let n = x0.len();
    let mut x = x0;
    let mut r = resid(&x);
    let mut cost = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
    let mut lambda = 1e-3;
    let mut it = 0;
    while it < opts.max_iter && cost > 0.0 {
        it += 1;
        let m = r.len();
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for j in 0..n {
            let mut xp = x.clone();
            let h = opts.fd_step * (1.0 + x[j].abs());
            xp[j] += h;
            let rp = resid(&xp);
            for i in 0..m {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * rv;
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rn = resid(&xn);
            let cn = 0.5 * rn.iter().map(|v| v * v).sum::<f64>();
            if cn.is_finite() && cn <= cost {
                let small = step.norm() < opts.step_tol;
                x = xn;
                r = rn;
                cost = cn;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                if small {
                    return LmResult { x, cost, iterations: it };
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    LmResult { x, cost, iterations: it }
}

/// Imbalanced-MZI pump filter. The trim phase is chosen so the pump
/// wavelength sits at a transmission minimum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpFilter {
    pub delta_l_um: f64,
    pub n_g: f64,
    pub eta: f64,
    pub theta_trim: f64,
}

pub const PUMP_NM: f64 = 1550.8;
pub const SIGNAL_NM: f64 = 1544.2;
pub const IDLER_NM: f64 = 1557.4;

impl PumpFilter {
    pub fn trimmed(delta_l_um: f64, n_g: f64, eta: f64) -> Self {
        let raw = Self { delta_l_um, n_g, eta, theta_trim: 0.0 }.phase(PUMP_NM);
        Self { delta_l_um, n_g, eta, theta_trim: -raw.rem_euclid(TAU) }
    }

    pub fn phase(&self, lambda_nm: f64) -> f64 {
        TAU * self.n_g * self.delta_l_um * 1e3 / lambda_nm + self.theta_trim
    }

    fn transfer(&self, lambda_nm: f64) -> M2 {
        mzi(self.phase(lambda_nm), self.eta, self.eta)
    }

    /// Top-to-top transmission.
    pub fn transmission(&self, lambda_nm: f64) -> f64 {
        self.transfer(lambda_nm)[0][0].norm_sqr()
    }

    /// Top-to-bottom transmission.
    pub fn cross_transmission(&self, lambda_nm: f64) -> f64 {
        self.transfer(lambda_nm)[1][0].norm_sqr()
    }

    /// Pump rejection `-10 log10 T(pump)`; the peak transmission is 1 for
    /// any splitting ratio.
    pub fn extinction_db(&self) -> f64 {
        -10.0 * self.transmission(PUMP_NM).log10()
    }

    pub fn fsr_nm(&self, lambda_nm: f64) -> f64 {
        lambda_nm * lambda_nm / (self.n_g * self.delta_l_um * 1e3)
    }
}

impl Default for PumpFilter {
    fn default() -> Self {
        Self::trimmed(54.0, 3.37, 0.5)
    }
}

pub fn pump_filter_transmission(lambda_nm: f64, f: &PumpFilter) -> f64 {
    f.transmission(lambda_nm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{global_phase_distance, haar_unitary, random_state, unitarity_defect};
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn component_examples() {
        let bs = component_matrix(Component::Bs(0.5)).unwrap();
        let r = C64::new(FRAC_1_SQRT_2, 0.0);
        let ir = C64::new(0.0, FRAC_1_SQRT_2);
        let want = ComplexMatrix::from_rows(&[[r, ir], [ir, r]]);
        assert!((&bs - &want).max_norm() < 1e-15);
        assert!(unitarity_defect(&bs).unwrap() < 1e-12);
        assert_eq!(component_matrix(Component::Ps(0.0)).unwrap(), ComplexMatrix::identity(2));
        let p = component_matrix(Component::Ps(PI)).unwrap();
        let pp = p.matmul(&p);
        assert!((&pp - &ComplexMatrix::identity(2)).max_norm() < 1e-12);
        assert!(component_matrix(Component::Bs(1.2)).is_err());
        assert!(component_matrix(Component::Bs(0.0)).is_err());
    }

    #[test]
    fn array_matches_direct_product() {
        let b = component_matrix(Component::Bs(0.5)).unwrap();
        let mut want = b.clone();
        for _ in 0..5 {
            want = b.matmul(&want);
        }
        let got = array_transfer(&[0.5; 6], &[0.0; 5]);
        assert!((&got - &want).max_norm() < 1e-14);

        let t = [PI, 0.0, 0.0, 0.0, 0.0];
        let ps = component_matrix(Component::Ps(PI)).unwrap();
        let first_mzi = b.matmul(&ps).matmul(&b);
        // PI inside the first MZI makes it a bar state: diag(1, -1) up to phase.
        assert!(global_phase_distance(&first_mzi, &ComplexMatrix::diag(&[ONE, -ONE])).unwrap() < 1e-12);
        let want = b.matmul(&b).matmul(&b).matmul(&b).matmul(&first_mzi);
        assert!((&array_transfer(&[0.5; 6], &t) - &want).max_norm() < 1e-14);

        // Transparent splitters leave a diagonal phase network.
        let u = array_transfer(&[1.0; 6], &[0.3, 0.1, -0.7, 2.0, 0.5]);
        assert!(u[(0, 1)].norm() < 1e-15 && u[(1, 0)].norm() < 1e-15);
        assert!((u[(1, 1)] - C64::from_polar(1.0, 2.2)).norm() < 1e-12);
    }

    #[test]
    fn settings_reproduce_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let op = haar_unitary(2, &mut rng);
            let st = random_state(2, &mut rng);
            let (t3, t4, t5) = mzi_ps_mzi_angles(&op);
            let m = m2_mul(&mzi(t5, 0.5, 0.5), &m2_mul(&ps2(t4), &mzi(t3, 0.5, 0.5)));
            assert!(global_phase_distance(&m2_to_matrix(&m), &op).unwrap() < 1e-10);
            let s = array_settings(&st, &op);
            let u = array_transfer2(&[0.5; 6], &s.thetas);
            let want = op.apply(st.amplitudes());
            let ph = C64::from_polar(1.0, s.phase);
            assert!((u[0][0] - ph * want[0]).norm() < 1e-10 && (u[1][0] - ph * want[1]).norm() < 1e-10);
        }
        // Diagonal, antidiagonal and basis-state edge cases.
        for op in [ComplexMatrix::identity(2), crate::qmath::gates::pauli_x(), crate::qmath::gates::pauli_z()] {
            let (t3, t4, t5) = mzi_ps_mzi_angles(&op);
            let m = m2_mul(&mzi(t5, 0.5, 0.5), &m2_mul(&ps2(t4), &mzi(t3, 0.5, 0.5)));
            assert!(global_phase_distance(&m2_to_matrix(&m), &op).unwrap() < 1e-10);
        }
    }

    #[test]
    fn array_is_unitary_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let etas: [f64; 6] = std::array::from_fn(|_| rng.gen_range(0.01..0.99));
            let th: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-10.0..10.0));
            assert!(unitarity_defect(&array_transfer(&etas, &th)).unwrap() < 1e-10);
        }
    }

    #[test]
    fn iv_examples() {
        let line: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 0.8 * k as f64)).collect();
        let f = fit_iv(&line).unwrap();
        assert!((f.resistance - 800.0).abs() < 1e-9 && f.delta_v.abs() < 1e-9);
        let f = fit_iv(&[(0.0, 0.0), (1.0, 0.58)]).unwrap();
        assert!((f.resistance - 580.0).abs() < 1e-9);
        assert!(fit_iv(&[(1.0, 0.5), (1.0, 0.6)]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0, 1e-3).unwrap();
        let noisy: Vec<(f64, f64)> =
            (0..50).map(|k| (k as f64 * 0.18, 0.8 * k as f64 * 0.18 + noise.sample(&mut rng))).collect();
        let f = fit_iv(&noisy).unwrap();
        assert!((f.resistance - 800.0).abs() / 800.0 < 0.01);
    }

    #[test]
    fn phase_current_law() {
        assert_eq!(phase_from_current(0.0, 0.1123, 0.3814), 0.3814);
        assert_eq!(phase_from_current(1.0, 1.0, 0.0), 1.0);
        let i = current_for_phase(PI, 0.1123, 0.3814).unwrap();
        assert!((i - ((PI - 0.3814) / 0.1123).sqrt()).abs() < 1e-15);
        assert!((phase_from_current(i, 0.1123, 0.3814) - PI).abs() < 1e-12);
    }

    #[test]
    fn fringe_conventions() {
        // phi1 = 0 fixes theta = phi0.
        assert!(simulate_fringe(0.0, 0.0, &[1.0])[0] < 1e-30);
        assert!((simulate_fringe(0.0, PI, &[1.0])[0] - 1.0).abs() < 1e-15);
        let currents: Vec<f64> = (0..=180).map(|k| k as f64 * 0.05).collect();
        let y = simulate_fringe(0.1123, 0.3814, &currents);
        assert!(y.iter().all(|v| (0.0..=1.0).contains(v)));
        // Local period near the scan center: 2 phi1 I dI = 2 pi.
        let ic = 4.5;
        let d = TAU / (2.0 * 0.1123 * ic);
        let a = simulate_fringe(0.1123, 0.3814, &[ic - d / 2.0])[0];
        let b = simulate_fringe(0.1123, 0.3814, &[ic + d / 2.0])[0];
        assert!((a - b).abs() < 0.15, "{a} {b}");
    }

    fn nominal_scan() -> Vec<(f64, f64)> {
        let currents: Vec<f64> = (0..=180).map(|k| k as f64 * 0.05).collect();
        let y = simulate_fringe(0.1123, 0.3814, &currents);
        currents.into_iter().zip(y).collect()
    }

    #[test]
    fn shifter_fit_recovers_noiseless() {
        let f = fit_independent_shifter(&nominal_scan()).unwrap();
        assert!((f.phi1 - 0.1123).abs() < 1e-6 && (f.phi0 - 0.3814).abs() < 1e-6, "{f:?}");
    }

    #[test]
    fn shifter_fit_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let scan: Vec<(f64, f64)> = nominal_scan().into_iter().map(|(i, y)| (i, y * (1.0 + noise.sample(&mut rng)))).collect();
        let f = fit_independent_shifter(&scan).unwrap();
        assert!((f.phi1 - 0.1123).abs() / 0.1123 < 0.02, "{f:?}");
    }

    #[test]
    fn shifter_fit_rejects_flat_scan() {
        let flat: Vec<(f64, f64)> = (0..100).map(|k| (k as f64 * 0.05, 0.4)).collect();
        assert!(matches!(fit_independent_shifter(&flat), Err(CalibError::Degenerate { .. })));
    }

    #[test]
    fn cascaded_fit_rejects_blocked_input() {
        let scan: Vec<ArrayScanPoint> =
            synthetic_array_scan(&ArrayModel::nominal(0.11, 0.38), &current_levels(3, 9.0))
                .into_iter()
                .map(|p| ArrayScanPoint { intensity: 0.0, ..p })
                .collect();
        assert!(fit_cascaded_array(&scan, &CascadedFitOptions::default(), ExecMode::Serial).is_err());
    }

    #[test]
    fn pump_filter_passbands() {
        let f = PumpFilter::default();
        assert!(f.transmission(PUMP_NM) <= 1e-6);
        assert!(f.transmission(SIGNAL_NM) >= 0.99);
        assert!(f.transmission(IDLER_NM) >= 0.99);
        assert!((f.fsr_nm(PUMP_NM) - 13.2).abs() < 0.05);
        for k in 0..=200 {
            let l = 1540.0 + 0.1 * k as f64;
            assert!((f.transmission(l) + f.cross_transmission(l) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pump_filter_extinction_band() {
        // (2 eta - 1)^2 <= 10^-2.8 bounds the 28 dB band.
        let half_width = 0.5 * 10f64.powf(-1.4);
        for eta in [0.5 - 0.99 * half_width, 0.5, 0.5 + 0.99 * half_width] {
            assert!(PumpFilter::trimmed(54.0, 3.37, eta).extinction_db() >= 28.0);
        }
        let off = PumpFilter::trimmed(54.0, 3.37, 0.47).extinction_db();
        assert!(off.is_finite() && off < 28.0 && (off - 24.4).abs() < 0.1, "{off}");
    }

    #[test]
    fn lm_fits_exponential() {
        let xs: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let resid = |p: &[f64]| -> Vec<f64> { xs.iter().map(|x| 2.0 * (-1.3 * x).exp() - p[0] * (-p[1] * x).exp()).collect() };
        let r = levenberg_marquardt(&resid, vec![1.0, 1.0], &LmOptions::default());
        assert!((r.x[0] - 2.0).abs() < 1e-8 && (r.x[1] - 1.3).abs() < 1e-8);
    }
}
