//! Command execution. `run` is pure: it returns the record and the contents
//! of every output file, and [`emit_outputs`] writes them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use lcusim_core::calib::{
    current_levels, fit_cascaded_array, fit_independent_shifter, fit_iv, simulate_fringe, synthetic_array_scan,
    ArrayModel, CascadedFitOptions, PumpFilter, IDLER_NM, PUMP_NM, SIGNAL_NM,
};
use lcusim_core::kak::{kak_decompose, lcu_terms, reconstruct_from_terms, KakDecomposition};
use lcusim_core::lcu::{gate_library, simulate_deterministic, simulate_probabilistic, Gate, LcuCircuitSpec};
use lcusim_core::par::{self, ExecMode};
use lcusim_core::photonic::{end_to_end_gate, tomography_table, ChipConfig, NoiseModel, PhotonicError};
use lcusim_core::qaoa::{self, bit_label, build_cost, grid_search, Csp, GridSpec, QaoaAngles};
use lcusim_core::qmath::{global_phase_distance, haar_special_unitary, ComplexMatrix, StateVector, C64};
use lcusim_core::szegedy::{self, SpectralEvolution, TransitionMatrix, TwoNodeGraph};
use lcusim_core::tomography::{
    classical_fidelity, linear_inversion, mle_reconstruct_process, monte_carlo_errorbars, process_fidelity,
    sample_counts, MleOptions, ProcessMatrix, TomographyDataset,
};
use lcusim_core::mix_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::*;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    fn num(e: impl std::fmt::Display) -> Self {
        RunError::Numerical(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config_hash: String,
    pub seed: u64,
    /// Derived seeds by task path.
    pub task_seeds: BTreeMap<String, u64>,
    pub metrics: BTreeMap<String, Value>,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub record: ResultRecord,
    pub files: Vec<OutputFile>,
}

pub const RECORD_FILE: &str = "result.json";

/// Float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    format!("{:x}", Sha256::digest(canonical.as_bytes()))
}

/// Seed for a named task, independent of which other tasks exist.
pub fn task_seed(master: u64, path: &str) -> u64 {
    let d = Sha256::digest(path.as_bytes());
    let mut word = [0u8; 8];
    word.copy_from_slice(&d[..8]);
    mix_seed(master, u64::from_le_bytes(word))
}

struct Ctx {
    hash: String,
    seed: u64,
    mode: ExecMode,
    seeds: BTreeMap<String, u64>,
    metrics: BTreeMap<String, Value>,
    files: Vec<OutputFile>,
}

impl Ctx {
    fn seed(&mut self, path: &str) -> u64 {
        let s = task_seed(self.seed, path);
        self.seeds.insert(path.to_string(), s);
        s
    }

    fn metric(&mut self, key: &str, v: Value) {
        self.metrics.insert(key.to_string(), v);
    }

    fn csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = Vec<String>>) {
        let mut s = format!("# config_hash={}\n{header}\n", self.hash);
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        self.files.push(OutputFile { name: name.to_string(), contents: s });
    }

    fn json(&mut self, name: &str, mut v: Value) {
        if let Value::Object(m) = &mut v {
            m.insert("config_hash".into(), Value::String(self.hash.clone()));
        }
        let mut s = serde_json::to_string_pretty(&v).expect("json serializes");
        s.push('\n');
        self.files.push(OutputFile { name: name.to_string(), contents: s });
    }

    fn text(&mut self, name: &str, body: String) {
        self.files.push(OutputFile { name: name.to_string(), contents: format!("{body}config_hash {}\n", self.hash) });
    }
}

pub fn run(cfg: &ExperimentConfig, mode: ExecMode) -> Result<RunOutput, RunError> {
    let mut cx = Ctx {
        hash: config_hash(cfg),
        seed: cfg.seed,
        mode,
        seeds: BTreeMap::new(),
        metrics: BTreeMap::new(),
        files: Vec::new(),
    };
    match &cfg.parameters {
        Parameters::Decompose(p) => run_decompose(&mut cx, p)?,
        Parameters::Gate(p) => run_gate(&mut cx, p)?,
        Parameters::Qpt(p) => run_qpt(&mut cx, p)?,
        Parameters::Qaoa(p) => run_qaoa(&mut cx, p)?,
        Parameters::Szegedy(p) => run_szegedy(&mut cx, p)?,
        Parameters::Calibrate(p) => run_calibrate(&mut cx, p)?,
    }
    let mut names: Vec<String> = cx.files.iter().map(|f| f.name.clone()).collect();
    names.push(RECORD_FILE.to_string());
    let record = ResultRecord {
        tool: "lcusim".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cfg.command,
        config_hash: cx.hash,
        seed: cfg.seed,
        task_seeds: cx.seeds,
        metrics: cx.metrics,
        files: names,
    };
    Ok(RunOutput { record, files: cx.files })
}

/// Writes every file plus the record into `dir`.
pub fn emit_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut record = serde_json::to_string_pretty(&out.record).expect("record serializes");
    record.push('\n');
    let all = out.files.iter().map(|f| (f.name.as_str(), f.contents.as_str())).chain([(RECORD_FILE, record.as_str())]);
    let mut written = Vec::new();
    for (name, contents) in all {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

fn complex_json(z: C64) -> Value {
    json!([z.re, z.im])
}

fn matrix_json(m: &ComplexMatrix) -> Value {
    Value::Array((0..m.rows()).map(|i| Value::Array(m.row(i).iter().map(|z| complex_json(*z)).collect())).collect())
}

fn decomposition_json(u: &ComplexMatrix, d: &KakDecomposition) -> Value {
    let terms = lcu_terms(d);
    let recon = reconstruct_from_terms(&terms);
    let err = global_phase_distance(u, &recon).unwrap_or(f64::INFINITY);
    let norm: f64 = terms.iter().map(|t| t.alpha.norm_sqr()).sum();
    json!({
        "k": [d.k1, d.k2, d.k3],
        "global_phase": d.global_phase,
        "terms": terms.iter().map(|t| json!({
            "alpha": complex_json(t.alpha),
            "a": matrix_json(&t.a),
            "b": matrix_json(&t.b),
        })).collect::<Vec<_>>(),
        "reconstruction_error": err,
        "alpha_norm_sqr": norm,
    })
}

fn run_decompose(cx: &mut Ctx, p: &DecomposeParams) -> Result<(), RunError> {
    let single = |cx: &mut Ctx, name: &str, u: &ComplexMatrix| -> Result<(), RunError> {
        let d = kak_decompose(u).map_err(RunError::num)?;
        let mut v = decomposition_json(u, &d);
        v["target"] = Value::String(name.to_string());
        cx.metric("reconstruction_error", v["reconstruction_error"].clone());
        cx.metric("k", v["k"].clone());
        cx.json("decomposition.json", v);
        Ok(())
    };
    match &p.target {
        DecomposeTarget::Gate(g) => single(cx, g.name(), &g.matrix()),
        DecomposeTarget::Unitary(u) => single(cx, "unitary", u),
        DecomposeTarget::Random(n) => {
            let seeds: Vec<u64> = (0..*n).map(|k| cx.seed(&format!("decompose/haar/{k}"))).collect();
            let rows = par::map(cx.mode, &seeds, |&s| {
                let u = haar_special_unitary(4, &mut ChaCha8Rng::seed_from_u64(s));
                kak_decompose(&u).map(|d| {
                    let terms = lcu_terms(&d);
                    let err = global_phase_distance(&u, &reconstruct_from_terms(&terms)).unwrap_or(f64::INFINITY);
                    let norm: f64 = terms.iter().map(|t| t.alpha.norm_sqr()).sum();
                    (d.ks(), err, norm)
                })
            });
            let rows: Vec<_> = rows.into_iter().collect::<Result<_, _>>().map_err(RunError::num)?;
            let max_err = rows.iter().map(|r| r.1).fold(0.0, f64::max);
            let max_norm = rows.iter().map(|r| (r.2 - 1.0).abs()).fold(0.0, f64::max);
            cx.metric("count", json!(n));
            cx.metric("max_reconstruction_error", json!(max_err));
            cx.metric("max_alpha_norm_error", json!(max_norm));
            let lines = rows.iter().enumerate().map(|(k, (ks, e, nrm))| {
                vec![k.to_string(), fmt_f64(ks[0]), fmt_f64(ks[1]), fmt_f64(ks[2]), fmt_f64(*e), fmt_f64(nrm - 1.0)]
            });
            cx.csv("decompose.csv", "index,k1,k2,k3,reconstruction_error,alpha_norm_error", lines.collect::<Vec<_>>());
            Ok(())
        }
    }
}

fn noise_model(cx: &mut Ctx, n: &Noise, path: &str) -> Option<NoiseModel> {
    (!n.is_off()).then(|| NoiseModel { phase_sigma: n.phase_sigma, eta_offset_sigma: n.eta_sigma, seed: cx.seed(path) })
}

fn basis_qubit(bit: usize) -> StateVector {
    StateVector::basis(2, bit)
}

/// Post-selected output for a computational-basis input; `None` when the
/// gate annihilates it.
fn gate_output(p: &GateParams, cfg: Option<&ChipConfig>, input: usize) -> Result<(Option<StateVector>, f64), RunError> {
    let (q1, q2) = (basis_qubit(input >> 1), basis_qubit(input & 1));
    let psi = q1.kron(&q2);
    match p.backend {
        Backend::Photonic => match end_to_end_gate(cfg.expect("photonic config"), (&q1, &q2), input as u64) {
            Ok(o) => Ok((Some(o.state), o.success_prob)),
            Err(PhotonicError::Annihilated { .. }) => Ok((None, 0.0)),
            Err(e) => Err(RunError::num(e)),
        },
        Backend::Probabilistic => {
            let recipe = gate_library(&p.gate).map_err(RunError::num)?;
            let spec = LcuCircuitSpec::from_recipe(&recipe).map_err(RunError::num)?;
            let branches = simulate_probabilistic(&spec, &psi).map_err(RunError::num)?;
            let b = branches.into_iter().find(|b| b.outcome == 0).expect("success branch");
            Ok((b.state, b.probability))
        }
        Backend::Deterministic => {
            let d = kak_decompose(&p.gate.matrix()).map_err(RunError::num)?;
            let branches = simulate_deterministic(&d, &psi).map_err(RunError::num)?;
            let total: f64 = branches.iter().map(|b| b.probability).sum();
            let state = branches.into_iter().find_map(|b| b.state);
            Ok((state, total))
        }
    }
}

fn run_gate(cx: &mut Ctx, p: &GateParams) -> Result<(), RunError> {
    let chip = match p.backend {
        Backend::Photonic => {
            let noise = noise_model(cx, &p.noise, "gate/noise");
            Some(ChipConfig::for_gate(&p.gate, basis_qubit(0), basis_qubit(0)).map_err(RunError::num)?.with_noise(noise))
        }
        _ => None,
    };
    let u = p.gate.matrix();
    let mut rows = Vec::new();
    let mut successes = Vec::new();
    let mut fids = Vec::new();
    for input in 0..4 {
        let (state, success) = gate_output(p, chip.as_ref(), input)?;
        let probs = state.as_ref().map(|s| s.probabilities()).unwrap_or_else(|| vec![0.0; 4]);
        let ideal = StateVector::new(u.apply(StateVector::basis(4, input).amplitudes()));
        let n = ideal.norm_sqr();
        if n > 1e-12 && state.is_some() {
            let q: Vec<f64> = ideal.probabilities().iter().map(|x| x / n).collect();
            let total: f64 = probs.iter().sum();
            let pn: Vec<f64> = probs.iter().map(|x| x / total).collect();
            fids.push(classical_fidelity(&pn, &q).map_err(RunError::num)?);
        }
        successes.push(success);
        for (out, pr) in probs.iter().enumerate() {
            rows.push(vec![bit_label(input), bit_label(out), fmt_f64(*pr)]);
        }
    }
    cx.csv("truth_table.csv", "input,output,probability", rows);
    let mean = if fids.is_empty() { f64::NAN } else { fids.iter().sum::<f64>() / fids.len() as f64 };
    cx.metric("gate", json!(p.gate.name()));
    cx.metric("success_probability", json!(successes));
    cx.metric("classical_fidelity_mean", if mean.is_nan() { Value::Null } else { json!(mean) });
    Ok(())
}

fn run_qpt(cx: &mut Ctx, p: &QptParams) -> Result<(), RunError> {
    let noise = noise_model(cx, &p.noise, "qpt/noise");
    let chip = ChipConfig::for_gate(&p.gate, basis_qubit(0), basis_qubit(0)).map_err(RunError::num)?.with_noise(noise);
    let table = tomography_table(&chip, 0).map_err(RunError::num)?;
    let ds = match p.counts {
        CountModel::Expected => TomographyDataset::expected(&table, p.rate, p.time_s),
        CountModel::Poisson => {
            let s = cx.seed("qpt/counts");
            sample_counts(&table, p.rate, p.time_s, s)
        }
    };
    let opts = MleOptions { max_iter: p.max_iter, ..MleOptions::default() };
    let mle = mle_reconstruct_process(&ds, &opts).map_err(RunError::num)?;
    let ideal = ProcessMatrix::from_unitary(&p.gate.matrix());
    let fid = process_fidelity(&ideal, &mle.estimate);
    let mut freq = vec![[0.0; 16]; 16];
    for r in &ds.records {
        freq[r.input_index][r.projector_index] = r.counts / (r.rate * r.time_s);
    }
    let lin = linear_inversion(&freq).map_err(RunError::num)?;
    let lin_fid = process_fidelity(&ideal, &lin).value;
    cx.metric("gate", json!(p.gate.name()));
    cx.metric("process_fidelity", json!(fid.value));
    cx.metric("linear_inversion_fidelity", json!(lin_fid));
    cx.metric("mle_iterations", json!(mle.iterations));
    cx.metric("tp_residual", json!(mle.tp_residual));
    let mut body = format!("process_fidelity {}\nlinear_inversion_fidelity {}\n", fmt_f64(fid.value), fmt_f64(lin_fid));
    if p.resamples >= 2 {
        let s = cx.seed("qpt/mc");
        let mc = monte_carlo_errorbars(&ds, &ideal, p.resamples, s, &opts, cx.mode).map_err(RunError::num)?;
        let _ = writeln!(body, "mc_mean {}\nmc_std {}\nmc_failures {}", fmt_f64(mc.mean), fmt_f64(mc.std), mc.failures);
        cx.metric("monte_carlo", serde_json::to_value(mc).expect("summary serializes"));
    }
    let chi = &mle.estimate.chi;
    let part = |f: fn(&C64) -> f64| -> Value {
        Value::Array((0..16).map(|i| Value::Array(chi.row(i).iter().map(|z| json!(f(z))).collect())).collect())
    };
    cx.json("chi.json", json!({"gate": p.gate.name(), "basis": "pauli 4a+b", "real": part(|z| z.re), "imag": part(|z| z.im)}));
    cx.text("fidelity.txt", body);
    let rows = ds.records.iter().map(|r| vec![r.input_index.to_string(), r.projector_index.to_string(), fmt_f64(r.counts)]);
    cx.csv("counts.csv", "input,projector,counts", rows.collect::<Vec<_>>());
    Ok(())
}

fn run_qaoa(cx: &mut Ctx, p: &QaoaParams) -> Result<(), RunError> {
    let csp = match &p.csp {
        CspSpec::Example(k) => Csp::example(*k).expect("validated"),
        CspSpec::Clauses(c) => Csp::from_clauses(c).map_err(RunError::num)?,
    };
    let spec = GridSpec { delta_gamma: p.delta_gamma, delta_beta: p.delta_beta, closed: p.closed };
    let grid = grid_search(&csp, &spec, cx.mode).map_err(RunError::num)?;
    let state = qaoa::qaoa_state(&csp, &QaoaAngles::single(grid.best_gamma, grid.best_beta).map_err(RunError::num)?);
    let dist = qaoa::solution_distribution(&state);
    let top = dist.iter().copied().fold(0.0, f64::max);
    let argmax: Vec<String> = (0..4).filter(|&i| dist[i] >= top - 1e-9).map(bit_label).collect();
    let nb = grid.betas.len();
    let rows = (0..grid.len()).map(|k| vec![fmt_f64(grid.gammas[k / nb]), fmt_f64(grid.betas[k % nb]), fmt_f64(grid.values[k])]);
    cx.csv("grid.csv", "gamma,beta,expC", rows.collect::<Vec<_>>());
    cx.csv("distribution.csv", "string,probability", (0..4).map(|i| vec![bit_label(i), fmt_f64(dist[i])]).collect::<Vec<_>>());
    cx.metric("cells", json!(grid.len()));
    cx.metric("cost_table", json!(build_cost(&csp)));
    cx.metric("best_index", json!([grid.best_index.0, grid.best_index.1]));
    cx.metric("best_gamma", json!(grid.best_gamma));
    cx.metric("best_beta", json!(grid.best_beta));
    cx.metric("best_expectation", json!(grid.best_value));
    cx.metric("distribution", json!(dist));
    cx.metric("argmax_strings", json!(argmax));
    Ok(())
}

fn initial_state(n: usize, init: InitialState) -> StateVector {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut amps = vec![C64::new(0.0, 0.0); n * n];
    match init {
        InitialState::Zero => amps[0] = C64::new(1.0, 0.0),
        InitialState::Plus => {
            amps[0] = C64::new(h, 0.0);
            amps[1] = C64::new(h, 0.0);
        }
        InitialState::PlusI => {
            amps[0] = C64::new(h, 0.0);
            amps[1] = C64::new(0.0, h);
        }
    }
    StateVector::new(amps)
}

struct WalkResult {
    name: String,
    rows: Vec<Vec<String>>,
    nodes: usize,
    summary: Value,
}

fn walk_case(case: &WalkCase, index: usize, p: &SzegedyParams) -> Result<WalkResult, RunError> {
    let (u, dense, name, eig) = match &case.graph {
        WalkGraph::TwoNode { alpha, beta } => {
            let g = TwoNodeGraph::new(*alpha, *beta).map_err(RunError::num)?;
            let circuit = szegedy::two_node_circuit(&g).map_err(RunError::num)?;
            let eig: Vec<Value> = szegedy::usz_eigenvalues(&g).iter().map(|z| complex_json(*z)).collect();
            (circuit.matrix, szegedy::build_usz(&g.transition()), format!("a{alpha}_b{beta}"), Some(eig))
        }
        WalkGraph::Matrix(rows) => {
            let t = TransitionMatrix::from_rows(rows).map_err(RunError::num)?;
            let u = szegedy::build_usz(&t);
            (u.clone(), u, format!("m{index}"), None)
        }
    };
    let n = (u.rows() as f64).sqrt().round() as usize;
    let psi0 = initial_state(n, case.initial);
    let trace = szegedy::evolve(&u, &psi0, p.steps).map_err(RunError::num)?;
    let theory = SpectralEvolution::new(&dense, &psi0).map_err(RunError::num)?;
    let mut rows = Vec::with_capacity(trace.len());
    let mut fsum = 0.0;
    for s in &trace {
        let th = theory.state(s.step);
        let q: Vec<f64> = th.amplitudes().chunks(n).map(|c| c.iter().map(|a| a.norm_sqr()).sum()).collect();
        let qs: f64 = q.iter().sum();
        let ps: f64 = s.node_probabilities.iter().sum();
        let pn: Vec<f64> = s.node_probabilities.iter().map(|x| x / ps).collect();
        let qn: Vec<f64> = q.iter().map(|x| x / qs).collect();
        let f = classical_fidelity(&pn, &qn).map_err(RunError::num)?;
        fsum += f;
        let mut row = vec![s.step.to_string()];
        row.extend(s.node_probabilities.iter().map(|x| fmt_f64(*x)));
        row.push(fmt_f64(f));
        rows.push(row);
    }
    let period = szegedy::detect_period(&u, p.n_max, p.tol);
    let mut summary = json!({
        "initial": case.initial.name(),
        "period": period,
        "mean_fidelity_vs_theory": fsum / trace.len() as f64,
    });
    if let WalkGraph::TwoNode { alpha, beta } = case.graph {
        summary["alpha"] = json!(alpha);
        summary["beta"] = json!(beta);
    }
    if let Some(e) = eig {
        summary["eigenvalues"] = Value::Array(e);
    }
    Ok(WalkResult { name: format!("trace_{name}_{}", case.initial.slug()), rows, nodes: n, summary })
}

fn run_szegedy(cx: &mut Ctx, p: &SzegedyParams) -> Result<(), RunError> {
    let indexed: Vec<(usize, &WalkCase)> = p.cases.iter().enumerate().collect();
    let results = par::map(cx.mode, &indexed, |&(k, c)| walk_case(c, k, p));
    let mut used = std::collections::BTreeSet::new();
    let mut summaries = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        let r = r?;
        let mut name = format!("{}.csv", r.name);
        if !used.insert(name.clone()) {
            name = format!("{}_{k}.csv", r.name);
            used.insert(name.clone());
        }
        let header: Vec<String> = std::iter::once("step".to_string())
            .chain((1..=r.nodes).map(|i| format!("p_node{i}")))
            .chain(std::iter::once("fidelity_vs_theory".to_string()))
            .collect();
        cx.csv(&name, &header.join(","), r.rows);
        let mut s = r.summary;
        s["file"] = json!(name);
        summaries.push(s);
    }
    cx.metric("cases", Value::Array(summaries));
    Ok(())
}

fn run_calibrate(cx: &mut Ctx, p: &CalibrateParams) -> Result<(), RunError> {
    let noise_seed = cx.seed("calibrate/noise");
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let sigma = Normal::new(0.0, p.intensity_noise).map_err(RunError::num)?;
    let mut noisy = |x: f64| if p.intensity_noise > 0.0 { x + sigma.sample(&mut rng) } else { x };

    let currents = current_levels(p.fringe_points, p.max_current_ma);
    let iv: Vec<(f64, f64)> = currents.iter().map(|&i| (i, p.resistance_ohm * i * 1e-3 + p.delta_v)).collect();
    let iv_fit = fit_iv(&iv).map_err(RunError::num)?;
    cx.csv("iv.csv", "I,V", iv.iter().map(|(i, v)| vec![fmt_f64(*i), fmt_f64(*v)]).collect::<Vec<_>>());

    let fringe: Vec<(f64, f64)> =
        currents.iter().copied().zip(simulate_fringe(p.phi1, p.phi0, &currents)).map(|(i, y)| (i, noisy(y))).collect();
    let shifter = fit_independent_shifter(&fringe).map_err(RunError::num)?;
    cx.csv("fringe.csv", "I,intensity", fringe.iter().map(|(i, y)| vec![fmt_f64(*i), fmt_f64(*y)]).collect::<Vec<_>>());

    let truth = ArrayModel { etas: p.array_etas, phi1: [p.array_phi1; 5], dtheta: [p.array_dtheta; 5] };
    let mut scan = synthetic_array_scan(&truth, &current_levels(p.levels, p.max_current_ma));
    for s in &mut scan {
        s.intensity = noisy(s.intensity);
    }
    cx.csv(
        "array_scan.csv",
        "I1,I2,I3,I4,I5,intensity",
        scan.iter().map(|s| s.currents.iter().chain([&s.intensity]).map(|x| fmt_f64(*x)).collect()).collect::<Vec<_>>(),
    );
    let opts = CascadedFitOptions { candidates: p.candidates, starts: p.starts, seed: cx.seed("calibrate/cascaded"), ..Default::default() };
    let opts = if p.intensity_noise > 0.0 { CascadedFitOptions { rms_threshold: 3.0 * p.intensity_noise, ..opts } } else { opts };
    let fit = fit_cascaded_array(&scan, &opts, cx.mode).map_err(RunError::num)?;
    let mut hrng = ChaCha8Rng::seed_from_u64(cx.seed("calibrate/heldout"));
    let held_out = (0..500)
        .map(|_| {
            let c: [f64; 5] = std::array::from_fn(|_| rand::Rng::gen_range(&mut hrng, 0.0..p.max_current_ma));
            (truth.intensity(&c) - fit.scale * fit.model.intensity(&c)).abs()
        })
        .fold(0.0, f64::max);

    let filter = PumpFilter::trimmed(54.0, 3.37, p.filter_eta);
    let lambdas: Vec<f64> = (0..=1100).map(|k| 1540.0 + 0.02 * k as f64).collect();
    cx.csv(
        "pump_filter.csv",
        "lambda_nm,transmission",
        lambdas.iter().map(|&l| vec![fmt_f64(l), fmt_f64(filter.transmission(l))]).collect::<Vec<_>>(),
    );

    cx.metric("iv_resistance_ohm", json!(iv_fit.resistance));
    cx.metric("shifter_phi1", json!(shifter.phi1));
    cx.metric("shifter_phi0", json!(shifter.phi0));
    cx.metric("array_rms", json!(fit.rms));
    cx.metric("array_held_out_error", json!(held_out));
    cx.metric("pump_extinction_db", json!(filter.extinction_db()));
    cx.json(
        "calibration.json",
        json!({
            "iv": iv_fit,
            "shifter": shifter,
            "array": {"model": fit.model, "scale": fit.scale, "rms": fit.rms, "per_start_rms": fit.per_start_rms, "held_out_error": held_out},
            "pump_filter": {
                "eta": p.filter_eta,
                "extinction_db": filter.extinction_db(),
                "signal_transmission": filter.transmission(SIGNAL_NM),
                "idler_transmission": filter.transmission(IDLER_NM),
                "pump_transmission": filter.transmission(PUMP_NM),
                "fsr_nm": filter.fsr_nm(PUMP_NM),
            },
        }),
    );
    Ok(())
}

/// Gate chosen by name, for callers that build configs in code.
pub fn gate_by_name(name: &str) -> Option<Gate> {
    Gate::parse(name, None).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str, c: Command) -> ExperimentConfig {
        validate_config(text, Some(c)).unwrap()
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn task_seeds_are_stable_and_distinct() {
        assert_eq!(task_seed(1, "a"), task_seed(1, "a"));
        assert_ne!(task_seed(1, "a"), task_seed(1, "b"));
        assert_ne!(task_seed(1, "a"), task_seed(2, "a"));
    }

    #[test]
    fn hash_depends_on_seed() {
        let a = cfg(r#"{"seed": 1, "parameters": {"csp": 1}}"#, Command::Qaoa);
        let b = cfg(r#"{"seed": 2, "parameters": {"csp": 1}}"#, Command::Qaoa);
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn swap_truth_table() {
        let out = run(&cfg(r#"{"parameters": {"gate": "SWAP"}}"#, Command::Gate), ExecMode::Serial).unwrap();
        let tt = &out.files[0].contents;
        for (i, o) in [("01", "10"), ("10", "01"), ("00", "00"), ("11", "11")] {
            let line = tt.lines().find(|l| l.starts_with(&format!("{i},{o},"))).unwrap();
            let p: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert!((p - 1.0).abs() < 1e-9, "{line}");
        }
        let s = out.record.metrics["success_probability"].as_array().unwrap();
        assert!(s.iter().all(|x| (x.as_f64().unwrap() - 1.0 / 64.0).abs() < 1e-10));
    }

    #[test]
    fn es_annihilates_rows() {
        let out = run(&cfg(r#"{"parameters": {"gate": "ES"}}"#, Command::Gate), ExecMode::Serial).unwrap();
        let s = out.record.metrics["success_probability"].as_array().unwrap();
        assert_eq!(s[0].as_f64().unwrap(), 0.0);
        assert_eq!(s[3].as_f64().unwrap(), 0.0);
    }

    #[test]
    fn backends_agree() {
        for b in ["probabilistic", "deterministic"] {
            let text = format!(r#"{{"parameters": {{"gate": "CNOT", "backend": "{b}"}}}}"#);
            let out = run(&cfg(&text, Command::Gate), ExecMode::Serial).unwrap();
            let f = out.record.metrics["classical_fidelity_mean"].as_f64().unwrap();
            assert!((f - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn qaoa_csp2_marks_00() {
        let out = run(&cfg(r#"{"parameters": {"csp": 2}}"#, Command::Qaoa), ExecMode::Serial).unwrap();
        assert_eq!(out.record.metrics["argmax_strings"], json!(["00"]));
        let grid = out.files.iter().find(|f| f.name == "grid.csv").unwrap();
        assert_eq!(grid.contents.lines().count(), 602);
    }

    #[test]
    fn szegedy_half_weights_period_four() {
        let text = r#"{"parameters": {"cases": [{"alpha": 0.5, "beta": 0.5}], "steps": 20}}"#;
        let out = run(&cfg(text, Command::Szegedy), ExecMode::Serial).unwrap();
        assert_eq!(out.record.metrics["cases"][0]["period"], json!(4));
        assert_eq!(out.files[0].name, "trace_a0.5_b0.5_00.csv");
        assert_eq!(out.files[0].contents.lines().nth(1), Some("step,p_node1,p_node2,fidelity_vs_theory"));
    }

    #[test]
    fn decompose_named_gate() {
        let out = run(&cfg(r#"{"parameters": {"gate": "ISWAP"}}"#, Command::Decompose), ExecMode::Serial).unwrap();
        assert!(out.record.metrics["reconstruction_error"].as_f64().unwrap() < 1e-8);
    }

    #[test]
    fn record_roundtrips() {
        let out = run(&cfg(r#"{"parameters": {"random": 3}}"#, Command::Decompose), ExecMode::Serial).unwrap();
        let s = serde_json::to_string(&out.record).unwrap();
        let back: ResultRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back, out.record);
    }
}
