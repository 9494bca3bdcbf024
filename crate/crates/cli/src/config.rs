//! Experiment configuration: strict JSON parsing and schema validation.
//!
//! Every violation is collected before returning, so a config with three
//! problems yields three issues.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::PathBuf;

use lcusim_core::lcu::Gate;
use lcusim_core::qaoa::{Clause, Term};
use lcusim_core::qmath::{unitarity_defect, ComplexMatrix, C64};
use serde::de::{self, Deserializer, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Decompose,
    Gate,
    Qpt,
    Qaoa,
    Szegedy,
    Calibrate,
}

impl Command {
    pub const ALL: [Command; 6] =
        [Command::Decompose, Command::Gate, Command::Qpt, Command::Qaoa, Command::Szegedy, Command::Calibrate];

    pub fn name(self) -> &'static str {
        match self {
            Command::Decompose => "decompose",
            Command::Gate => "gate",
            Command::Qpt => "qpt",
            Command::Qaoa => "qaoa",
            Command::Szegedy => "szegedy",
            Command::Calibrate => "calibrate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<Issue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} config error(s)", self.0.len())?;
        for i in &self.0 {
            write!(f, "\n  {i}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
    pub parameters: Parameters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Parameters {
    Decompose(DecomposeParams),
    Gate(GateParams),
    Qpt(QptParams),
    Qaoa(QaoaParams),
    Szegedy(SzegedyParams),
    Calibrate(CalibrateParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DecomposeTarget {
    Gate(Gate),
    Unitary(ComplexMatrix),
    /// Seeded Haar-random SU(4) batch.
    Random(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposeParams {
    pub target: DecomposeTarget,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Photonic,
    Probabilistic,
    Deterministic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub phase_sigma: f64,
    pub eta_sigma: f64,
}

impl Noise {
    pub fn is_off(&self) -> bool {
        self.phase_sigma == 0.0 && self.eta_sigma == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub gate: Gate,
    pub backend: Backend,
    pub noise: Noise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountModel {
    Expected,
    Poisson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QptParams {
    pub gate: Gate,
    pub rate: f64,
    pub time_s: f64,
    pub counts: CountModel,
    pub noise: Noise,
    pub resamples: usize,
    pub max_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CspSpec {
    Example(u32),
    Clauses(Vec<Clause>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaoaParams {
    pub csp: CspSpec,
    pub delta_gamma: f64,
    pub delta_beta: f64,
    pub closed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitialState {
    /// `|0⟩|0⟩`
    Zero,
    /// `|0⟩(|0⟩ + |1⟩)/√2`
    Plus,
    /// `|0⟩(|0⟩ + i|1⟩)/√2`
    PlusI,
}

impl InitialState {
    pub const ALL: [InitialState; 3] = [InitialState::Zero, InitialState::Plus, InitialState::PlusI];

    pub fn name(self) -> &'static str {
        match self {
            InitialState::Zero => "00",
            InitialState::Plus => "0+",
            InitialState::PlusI => "0+i",
        }
    }

    /// Safe in file names.
    pub fn slug(self) -> &'static str {
        match self {
            InitialState::Zero => "00",
            InitialState::Plus => "0p",
            InitialState::PlusI => "0pi",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|i| i.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum WalkGraph {
    TwoNode { alpha: f64, beta: f64 },
    /// Row-major column-stochastic matrix.
    Matrix(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkCase {
    pub graph: WalkGraph,
    pub initial: InitialState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SzegedyParams {
    pub cases: Vec<WalkCase>,
    pub steps: usize,
    pub n_max: usize,
    pub tol: f64,
}

/// The seven weight pairs of the experiment table, each with the three
/// initial states.
pub fn default_walk_cases() -> Vec<WalkCase> {
    let pairs = [(0.1, 0.9), (0.3, 0.7), (0.25, 0.25), (0.5, 0.5), (0.43, 0.43), (0.45, 0.45), (0.47, 0.47)];
    pairs
        .iter()
        .flat_map(|&(alpha, beta)| {
            InitialState::ALL.map(|initial| WalkCase { graph: WalkGraph::TwoNode { alpha, beta }, initial })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrateParams {
    pub phi1: f64,
    pub phi0: f64,
    pub resistance_ohm: f64,
    pub delta_v: f64,
    pub fringe_points: usize,
    pub max_current_ma: f64,
    pub array_phi1: f64,
    pub array_dtheta: f64,
    pub array_etas: [f64; 6],
    pub levels: usize,
    pub intensity_noise: f64,
    pub candidates: usize,
    pub starts: usize,
    pub filter_eta: f64,
}

// ---- strict JSON ----

/// JSON value that records duplicate object keys instead of keeping the last.
struct Strict {
    value: Value,
    dups: Vec<String>,
}

fn join(prefix: &str, rest: &str) -> String {
    if rest.is_empty() {
        prefix.to_string()
    } else if prefix.is_empty() || rest.starts_with('[') {
        format!("{prefix}{rest}")
    } else {
        format!("{prefix}.{rest}")
    }
}

impl<'de> Deserialize<'de> for Strict {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(StrictVisitor)
    }
}

struct StrictVisitor;

impl StrictVisitor {
    fn leaf(value: Value) -> Strict {
        Strict { value, dups: Vec::new() }
    }
}

impl<'de> Visitor<'de> for StrictVisitor {
    type Value = Strict;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a JSON value")
    }

    fn visit_bool<E: de::Error>(self, v: bool) -> Result<Strict, E> {
        Ok(Self::leaf(Value::Bool(v)))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Strict, E> {
        Ok(Self::leaf(Value::from(v)))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Strict, E> {
        Ok(Self::leaf(Value::from(v)))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Strict, E> {
        Ok(Self::leaf(Value::from(v)))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Strict, E> {
        Ok(Self::leaf(Value::String(v.to_string())))
    }

    fn visit_unit<E: de::Error>(self) -> Result<Strict, E> {
        Ok(Self::leaf(Value::Null))
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Strict, A::Error> {
        let mut items = Vec::new();
        let mut dups = Vec::new();
        while let Some(Strict { value, dups: inner }) = seq.next_element()? {
            let prefix = format!("[{}]", items.len());
            dups.extend(inner.iter().map(|d| join(&prefix, d)));
            items.push(value);
        }
        Ok(Strict { value: Value::Array(items), dups })
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Strict, A::Error> {
        let mut obj = Map::new();
        let mut dups = Vec::new();
        while let Some(key) = map.next_key::<String>()? {
            let Strict { value, dups: inner } = map.next_value()?;
            dups.extend(inner.iter().map(|d| join(&key, d)));
            if obj.contains_key(&key) {
                dups.push(key.clone());
            }
            obj.insert(key, value);
        }
        Ok(Strict { value: Value::Object(obj), dups })
    }
}

/// Parses JSON text, rejecting duplicate keys at any depth.
pub fn parse_strict(text: &str) -> Result<Value, ConfigErrors> {
    let mut de = serde_json::Deserializer::from_str(text);
    let parsed = Strict::deserialize(&mut de).and_then(|s| de.end().map(|_| s));
    match parsed {
        Err(e) => Err(ConfigErrors(vec![Issue { path: String::new(), message: format!("malformed JSON: {e}") }])),
        Ok(s) if !s.dups.is_empty() => Err(ConfigErrors(
            s.dups.into_iter().map(|path| Issue { path, message: "duplicate key".into() }).collect(),
        )),
        Ok(s) => Ok(s.value),
    }
}

// ---- schema walking ----

#[derive(Default)]
struct Ctx {
    issues: Vec<Issue>,
}

impl Ctx {
    fn err(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue { path: path.into(), message: message.into() });
    }
}

struct Obj<'a> {
    map: Option<&'a Map<String, Value>>,
    path: String,
    known: Vec<&'static str>,
}

fn describe(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

impl<'a> Obj<'a> {
    fn new(cx: &mut Ctx, v: Option<&'a Value>, path: &str) -> Self {
        let map = match v {
            None => None,
            Some(Value::Object(m)) => Some(m),
            Some(other) => {
                cx.err(path, format!("expected an object, got {}", describe(other)));
                None
            }
        };
        Obj { map, path: path.to_string(), known: Vec::new() }
    }

    fn sub(&self, key: &str) -> String {
        join(&self.path, key)
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.known.push(key);
        self.map.and_then(|m| m.get(key))
    }

    fn has(&self, key: &str) -> bool {
        self.map.is_some_and(|m| m.contains_key(key))
    }

    fn f64(&mut self, cx: &mut Ctx, key: &'static str, default: f64, check: impl Fn(f64) -> Option<String>) -> f64 {
        let path = self.sub(key);
        match self.get(key) {
            None => default,
            Some(v) => match v.as_f64() {
                None => {
                    cx.err(path, format!("expected a number, got {}", describe(v)));
                    default
                }
                Some(x) => {
                    if let Some(msg) = check(x) {
                        cx.err(path, msg);
                    }
                    x
                }
            },
        }
    }

    fn uint(&mut self, cx: &mut Ctx, key: &'static str, default: u64, lo: u64, hi: u64) -> u64 {
        let path = self.sub(key);
        match self.get(key) {
            None => default,
            Some(v) => match v.as_u64() {
                None => {
                    cx.err(path, format!("expected a non-negative integer, got {}", describe(v)));
                    default
                }
                Some(x) if x < lo || x > hi => {
                    cx.err(path, format!("{x} outside [{lo}, {hi}]"));
                    default
                }
                Some(x) => x,
            },
        }
    }

    fn bool(&mut self, cx: &mut Ctx, key: &'static str, default: bool) -> bool {
        let path = self.sub(key);
        match self.get(key) {
            None => default,
            Some(Value::Bool(b)) => *b,
            Some(v) => {
                cx.err(path, format!("expected a boolean, got {}", describe(v)));
                default
            }
        }
    }

    fn string(&mut self, cx: &mut Ctx, key: &'static str) -> Option<&'a str> {
        let path = self.sub(key);
        match self.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(v) => {
                cx.err(path, format!("expected a string, got {}", describe(v)));
                None
            }
        }
    }

    fn choice<T: Copy>(&mut self, cx: &mut Ctx, key: &'static str, default: T, options: &[(&str, T)]) -> T {
        let path = self.sub(key);
        match self.string(cx, key) {
            None => default,
            Some(s) => match options.iter().find(|(n, _)| *n == s) {
                Some((_, t)) => *t,
                None => {
                    let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                    cx.err(path, format!("unknown value {s:?}; expected one of {names:?}"));
                    default
                }
            },
        }
    }

    fn finish(self, cx: &mut Ctx) {
        if let Some(m) = self.map {
            for k in m.keys() {
                if !self.known.contains(&k.as_str()) {
                    cx.err(join(&self.path, k), "unknown field");
                }
            }
        }
    }
}

fn non_negative(x: f64) -> Option<String> {
    (!(x >= 0.0 && x.is_finite())).then(|| format!("{x} must be finite and >= 0"))
}

fn positive(x: f64) -> Option<String> {
    (!(x > 0.0 && x.is_finite())).then(|| format!("{x} must be finite and > 0"))
}

fn unit_interval(x: f64) -> Option<String> {
    (!(0.0..=1.0).contains(&x)).then(|| format!("{x} outside [0, 1]"))
}

fn open_unit_interval(x: f64) -> Option<String> {
    (!(x > 0.0 && x < 1.0)).then(|| format!("{x} outside (0, 1)"))
}

/// `[[a, b], [c, d]]` where each entry is a number or `[re, im]`.
fn complex_matrix(cx: &mut Ctx, v: &Value, path: &str, n: usize) -> Option<ComplexMatrix> {
    let Some(rows) = v.as_array().filter(|r| r.len() == n) else {
        cx.err(path, format!("expected {n} rows"));
        return None;
    };
    let mut data = Vec::with_capacity(n * n);
    for (i, row) in rows.iter().enumerate() {
        let Some(cols) = row.as_array().filter(|c| c.len() == n) else {
            cx.err(format!("{path}[{i}]"), format!("expected {n} entries"));
            return None;
        };
        for (j, e) in cols.iter().enumerate() {
            let z = match e {
                Value::Number(x) => x.as_f64().map(|re| C64::new(re, 0.0)),
                Value::Array(p) if p.len() == 2 => match (p[0].as_f64(), p[1].as_f64()) {
                    (Some(re), Some(im)) => Some(C64::new(re, im)),
                    _ => None,
                },
                _ => None,
            };
            match z {
                Some(z) if z.re.is_finite() && z.im.is_finite() => data.push(z),
                _ => {
                    cx.err(format!("{path}[{i}][{j}]"), "expected a number or [re, im]");
                    return None;
                }
            }
        }
    }
    ComplexMatrix::from_vec(n, n, data).ok()
}

fn unitary(cx: &mut Ctx, v: &Value, path: &str, n: usize) -> Option<ComplexMatrix> {
    let m = complex_matrix(cx, v, path, n)?;
    match unitarity_defect(&m) {
        Ok(d) if d <= 1e-9 => Some(m),
        Ok(d) => {
            cx.err(path, format!("matrix is not unitary (defect {d:.3e})"));
            None
        }
        Err(e) => {
            cx.err(path, e.to_string());
            None
        }
    }
}

fn gate_field(cx: &mut Ctx, o: &mut Obj, required: bool) -> Option<Gate> {
    let gate_path = o.sub("gate");
    let target_path = o.sub("target");
    let name = o.string(cx, "gate");
    let target = o.get("target").and_then(|v| unitary(cx, v, &target_path, 2));
    match name {
        None => {
            if required {
                cx.err(gate_path, "missing required field");
            }
            None
        }
        Some(n) if n.eq_ignore_ascii_case("CU") && target.is_none() && !o.has("target") => {
            cx.err(target_path, "CU needs a 2x2 unitary target");
            None
        }
        Some(n) => match Gate::parse(n, target.clone()) {
            Ok(g) => {
                if target.is_some() && !matches!(g, Gate::Cu(_)) {
                    cx.err(target_path, "target is only used with gate CU");
                }
                Some(g)
            }
            Err(_) if n.eq_ignore_ascii_case("CU") => None,
            Err(_) => {
                cx.err(gate_path, format!("unknown gate {n:?}"));
                None
            }
        },
    }
}

fn noise_fields(cx: &mut Ctx, o: &mut Obj) -> Noise {
    Noise {
        phase_sigma: o.f64(cx, "phase_sigma", 0.0, non_negative),
        eta_sigma: o.f64(cx, "eta_sigma", 0.0, non_negative),
    }
}

fn decompose_params(cx: &mut Ctx, o: &mut Obj) -> Option<Parameters> {
    let upath = o.sub("unitary");
    let gate = gate_field(cx, o, false);
    let u = o.get("unitary").and_then(|v| unitary(cx, v, &upath, 4));
    let random = o.has("random").then(|| o.uint(cx, "random", 1, 1, 100_000) as usize);
    if !o.has("random") {
        o.known.push("random");
    }
    let given = [o.has("gate"), o.has("unitary"), o.has("random")].iter().filter(|b| **b).count();
    if given != 1 {
        cx.err(o.path.clone(), "exactly one of gate, unitary or random is required");
        return None;
    }
    let target = match (gate, u, random) {
        (Some(g), _, _) => DecomposeTarget::Gate(g),
        (_, Some(u), _) => DecomposeTarget::Unitary(u),
        (_, _, Some(n)) => DecomposeTarget::Random(n),
        _ => return None,
    };
    if let DecomposeTarget::Gate(g) = &target {
        if !g.is_unitary() {
            cx.err(o.sub("gate"), format!("{} is not unitary and has no KAK decomposition", g.name()));
        }
    }
    Some(Parameters::Decompose(DecomposeParams { target }))
}

fn gate_params(cx: &mut Ctx, o: &mut Obj) -> Option<Parameters> {
    let gate = gate_field(cx, o, true);
    let backend = o.choice(
        cx,
        "backend",
        Backend::Photonic,
        &[("photonic", Backend::Photonic), ("probabilistic", Backend::Probabilistic), ("deterministic", Backend::Deterministic)],
    );
    let noise = noise_fields(cx, o);
    if backend != Backend::Photonic && !noise.is_off() {
        cx.err(o.sub("backend"), "noise is only modelled on the photonic backend");
    }
    let gate = gate?;
    if backend == Backend::Deterministic && !gate.is_unitary() {
        cx.err(o.sub("backend"), format!("deterministic circuit needs a unitary gate, {} is not", gate.name()));
    }
    Some(Parameters::Gate(GateParams { gate, backend, noise }))
}

fn qpt_params(cx: &mut Ctx, o: &mut Obj) -> Option<Parameters> {
    let gate = gate_field(cx, o, true);
    let rate = o.f64(cx, "rate", 100.0, positive);
    let time_s = o.f64(cx, "time_s", 10.0, positive);
    let counts = o.choice(cx, "counts", CountModel::Expected, &[("expected", CountModel::Expected), ("poisson", CountModel::Poisson)]);
    let noise = noise_fields(cx, o);
    let resamples = o.uint(cx, "resamples", 0, 0, 10_000) as usize;
    if resamples == 1 {
        cx.err(o.sub("resamples"), "use 0 (off) or at least 2");
    }
    let max_iter = o.uint(cx, "max_iter", 2000, 1, 1_000_000) as usize;
    let gate = gate?;
    if !gate.is_unitary() {
        cx.err(o.sub("gate"), format!("process tomography needs a unitary gate, {} annihilates some inputs", gate.name()));
    }
    Some(Parameters::Qpt(QptParams { gate, rate, time_s, counts, noise, resamples, max_iter }))
}

fn clause_list(cx: &mut Ctx, v: &Value, path: &str) -> Option<Vec<Clause>> {
    let Some(items) = v.as_array().filter(|a| !a.is_empty()) else {
        cx.err(path, "expected a non-empty array of clauses");
        return None;
    };
    let mut out = Vec::new();
    for (k, item) in items.iter().enumerate() {
        let p = format!("{path}[{k}]");
        let mut c = Obj::new(cx, Some(item), &p);
        let term = c.choice(cx, "terms", None, &[("z1", Some(Term::Z1)), ("z2", Some(Term::Z2)), ("z1z2", Some(Term::Z1Z2))]);
        if !c.has("terms") {
            cx.err(c.sub("terms"), "missing required field");
        }
        let sign_path = c.sub("sign");
        let sign = match c.get("sign").map(|s| s.as_i64()) {
            None => {
                cx.err(sign_path, "missing required field");
                None
            }
            Some(Some(s)) if s == 1 || s == -1 => Some(s as i32),
            Some(_) => {
                cx.err(sign_path, "sign must be +1 or -1");
                None
            }
        };
        c.finish(cx);
        if let (Some(term), Some(sign)) = (term, sign) {
            out.push(Clause { term, sign });
        }
    }
    (out.len() == items.len()).then_some(out)
}

fn qaoa_params(cx: &mut Ctx, o: &mut Obj) -> Option<Parameters> {
    let cpath = o.sub("clauses");
    let csp_n = o.has("csp").then(|| o.uint(cx, "csp", 1, 1, 3) as u32);
    if !o.has("csp") {
        o.known.push("csp");
    }
    let clauses = o.get("clauses").and_then(|v| clause_list(cx, v, &cpath));
    let delta_gamma = o.f64(cx, "delta_gamma", TAU / 20.0, positive);
    let delta_beta = o.f64(cx, "delta_beta", PI / 30.0, positive);
    let closed = o.bool(cx, "closed", false);
    let csp = match (o.has("csp"), o.has("clauses")) {
        (true, false) => CspSpec::Example(csp_n?),
        (false, true) => CspSpec::Clauses(clauses?),
        _ => {
            cx.err(o.path.clone(), "exactly one of csp or clauses is required");
            return None;
        }
    };
    Some(Parameters::Qaoa(QaoaParams { csp, delta_gamma, delta_beta, closed }))
}

fn walk_case(cx: &mut Ctx, v: &Value, path: &str) -> Option<WalkCase> {
    let mut c = Obj::new(cx, Some(v), path);
    let initial = c.string(cx, "initial").map(|s| (s, InitialState::parse(s)));
    let initial = match initial {
        None => InitialState::Zero,
        Some((_, Some(i))) => i,
        Some((s, None)) => {
            cx.err(c.sub("initial"), format!("unknown initial state {s:?}; expected \"00\", \"0+\" or \"0+i\""));
            InitialState::Zero
        }
    };
    let graph = if c.has("matrix") {
        let mpath = c.sub("matrix");
        let rows = c.get("matrix").and_then(|m| m.as_array());
        let parsed: Option<Vec<Vec<f64>>> =
            rows.map(|rs| rs.iter().map(|r| r.as_array().and_then(|xs| xs.iter().map(|x| x.as_f64()).collect())).collect()).unwrap_or(None);
        match parsed {
            Some(m) if m.len() >= 2 => match lcusim_core::szegedy::TransitionMatrix::from_rows(&m) {
                Ok(_) => Some(WalkGraph::Matrix(m)),
                Err(e) => {
                    cx.err(mpath, e.to_string());
                    None
                }
            },
            _ => {
                cx.err(mpath, "expected a square array of numbers with at least 2 rows");
                None
            }
        }
    } else {
        let alpha = c.f64(cx, "alpha", f64::NAN, unit_interval);
        let beta = c.f64(cx, "beta", f64::NAN, unit_interval);
        for (k, x) in [("alpha", alpha), ("beta", beta)] {
            if x.is_nan() && !c.has(k) {
                cx.err(c.sub(k), "missing required field");
            }
        }
        (alpha.is_finite() && beta.is_finite()).then_some(WalkGraph::TwoNode { alpha, beta })
    };
    c.finish(cx);
    Some(WalkCase { graph: graph?, initial })
}

fn szegedy_params(cx: &mut Ctx, o: &mut Obj) -> Option<Parameters> {
    let cpath = o.sub("cases");
    let cases = match o.get("cases") {
        None => Some(default_walk_cases()),
        Some(Value::Array(items)) if !items.is_empty() => {
            let parsed: Vec<Option<WalkCase>> =
                items.iter().enumerate().map(|(k, v)| walk_case(cx, v, &format!("{cpath}[{k}]"))).collect();
            parsed.into_iter().collect()
        }
        Some(_) => {
            cx.err(cpath, "expected a non-empty array of cases");
            None
        }
    };
    let steps = o.uint(cx, "steps", 200, 1, 1_000_000) as usize;
    let n_max = o.uint(cx, "n_max", 256, 1, 1_000_000) as usize;
    let tol = o.f64(cx, "tol", 1e-6, positive);
    Some(Parameters::Szegedy(SzegedyParams { cases: cases?, steps, n_max, tol }))
}

fn calibrate_params(cx: &mut Ctx, o: &mut Obj) -> Option<Parameters> {
    let epath = o.sub("array_etas");
    let etas = match o.get("array_etas") {
        None => [0.5; 6],
        Some(v) => {
            let xs: Option<Vec<f64>> = v.as_array().and_then(|a| a.iter().map(|x| x.as_f64()).collect());
            match xs {
                Some(xs) if xs.len() == 6 && xs.iter().all(|x| open_unit_interval(*x).is_none()) => {
                    std::array::from_fn(|i| xs[i])
                }
                _ => {
                    cx.err(epath, "expected 6 splitting ratios in (0, 1)");
                    [0.5; 6]
                }
            }
        }
    };
    let p = CalibrateParams {
        phi1: o.f64(cx, "phi1", 0.1123, positive),
        phi0: o.f64(cx, "phi0", 0.3814, |x| (!x.is_finite()).then(|| "must be finite".into())),
        resistance_ohm: o.f64(cx, "resistance_ohm", 550.0, positive),
        delta_v: o.f64(cx, "delta_v", 0.05, |x| (!x.is_finite()).then(|| "must be finite".into())),
        fringe_points: o.uint(cx, "fringe_points", 60, 8, 100_000) as usize,
        max_current_ma: o.f64(cx, "max_current_ma", 9.0, positive),
        array_phi1: o.f64(cx, "array_phi1", 0.11, positive),
        array_dtheta: o.f64(cx, "array_dtheta", 0.38, |x| (!x.is_finite()).then(|| "must be finite".into())),
        array_etas: etas,
        levels: o.uint(cx, "levels", 5, 3, 9) as usize,
        intensity_noise: o.f64(cx, "intensity_noise", 0.0, non_negative),
        candidates: o.uint(cx, "candidates", 256, 8, 1_000_000) as usize,
        starts: o.uint(cx, "starts", 8, 8, 10_000) as usize,
        filter_eta: o.f64(cx, "filter_eta", 0.5, open_unit_interval),
    };
    Some(Parameters::Calibrate(p))
}

/// Validates raw config text. `expected` is the command named on the command
/// line; a `command` field in the file must agree with it.
pub fn validate_config(text: &str, expected: Option<Command>) -> Result<ExperimentConfig, ConfigErrors> {
    let root = parse_strict(text)?;
    let mut cx = Ctx::default();
    let mut top = Obj::new(&mut cx, Some(&root), "");
    if top.map.is_none() {
        return Err(ConfigErrors(cx.issues));
    }
    let named = match top.string(&mut cx, "command") {
        None => None,
        Some(s) => match Command::parse(s) {
            Some(c) => Some(c),
            None => {
                cx.err("command", format!("unknown command {s:?}"));
                None
            }
        },
    };
    let command = match (named, expected) {
        (Some(a), Some(b)) if a != b => {
            cx.err("command", format!("config is for {:?} but {:?} was requested", a.name(), b.name()));
            b
        }
        (Some(c), _) | (None, Some(c)) => c,
        (None, None) => {
            if top.has("command") {
                return Err(ConfigErrors(cx.issues));
            }
            cx.err("command", "missing required field");
            return Err(ConfigErrors(cx.issues));
        }
    };
    let seed = top.uint(&mut cx, "seed", 0, 0, u64::MAX);
    let output_dir = top.string(&mut cx, "output_dir").map(PathBuf::from);
    let pv = top.get("parameters");
    let empty = Value::Object(Map::new());
    let mut p = Obj::new(&mut cx, Some(pv.unwrap_or(&empty)), "parameters");
    let parameters = if p.map.is_some() {
        let parsed = match command {
            Command::Decompose => decompose_params(&mut cx, &mut p),
            Command::Gate => gate_params(&mut cx, &mut p),
            Command::Qpt => qpt_params(&mut cx, &mut p),
            Command::Qaoa => qaoa_params(&mut cx, &mut p),
            Command::Szegedy => szegedy_params(&mut cx, &mut p),
            Command::Calibrate => calibrate_params(&mut cx, &mut p),
        };
        p.finish(&mut cx);
        parsed
    } else {
        None
    };
    top.finish(&mut cx);
    match parameters {
        Some(parameters) if cx.issues.is_empty() => Ok(ExperimentConfig { command, seed, output_dir, parameters }),
        _ => {
            if cx.issues.is_empty() {
                cx.err("parameters", "invalid parameters");
            }
            Err(ConfigErrors(cx.issues))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn issues(text: &str, cmd: Option<Command>) -> Vec<Issue> {
        validate_config(text, cmd).unwrap_err().0
    }

    #[test]
    fn minimal_qpt() {
        let c = validate_config(r#"{"command": "qpt", "parameters": {"gate": "CNOT"}}"#, None).unwrap();
        assert_eq!(c.command, Command::Qpt);
        let Parameters::Qpt(p) = c.parameters else { panic!() };
        assert_eq!(p.gate, Gate::Cnot);
        assert_eq!((p.rate, p.time_s), (100.0, 10.0));
    }

    #[test]
    fn alpha_out_of_range_names_field() {
        let is = issues(r#"{"parameters": {"cases": [{"alpha": 1.5, "beta": 0.5}]}}"#, Some(Command::Szegedy));
        assert_eq!(is.len(), 1);
        assert_eq!(is[0].path, "parameters.cases[0].alpha");
    }

    #[test]
    fn duplicate_keys_rejected() {
        let is = issues(r#"{"seed": 1, "parameters": {"csp": 1, "csp": 2}, "seed": 2}"#, Some(Command::Qaoa));
        let paths: Vec<&str> = is.iter().map(|i| i.path.as_str()).collect();
        assert!(paths.contains(&"seed") && paths.contains(&"parameters.csp"), "{is:?}");
    }

    #[test]
    fn all_errors_at_once() {
        let is = issues(
            r#"{"command": "qpt", "bogus": 1, "parameters": {"gate": "NOPE", "rate": -1, "time_s": "x", "extra": true}}"#,
            None,
        );
        let paths: Vec<&str> = is.iter().map(|i| i.path.as_str()).collect();
        for want in ["bogus", "parameters.gate", "parameters.rate", "parameters.time_s", "parameters.extra"] {
            assert!(paths.contains(&want), "{want} missing from {is:?}");
        }
    }

    #[test]
    fn command_mismatch() {
        let is = issues(r#"{"command": "qaoa", "parameters": {"csp": 1}}"#, Some(Command::Gate));
        assert!(is.iter().any(|i| i.path == "command"));
    }

    #[test]
    fn malformed_json() {
        let is = issues("{", Some(Command::Qaoa));
        assert!(is[0].message.starts_with("malformed JSON"));
    }

    #[test]
    fn clause_config() {
        let c = validate_config(r#"{"parameters": {"clauses": [{"terms": "z1z2", "sign": 1}]}}"#, Some(Command::Qaoa)).unwrap();
        let Parameters::Qaoa(p) = c.parameters else { panic!() };
        assert_eq!(p.csp, CspSpec::Clauses(vec![Clause { term: Term::Z1Z2, sign: 1 }]));
        let is = issues(r#"{"parameters": {"clauses": [{"terms": "z3", "sign": 2}]}}"#, Some(Command::Qaoa));
        assert_eq!(is.len(), 2);
    }

    #[test]
    fn cu_target() {
        let ok = r#"{"parameters": {"gate": "CU", "target": [[0, 1], [1, 0]]}}"#;
        let c = validate_config(ok, Some(Command::Gate)).unwrap();
        let Parameters::Gate(p) = c.parameters else { panic!() };
        assert!(matches!(p.gate, Gate::Cu(_)));
        let bad = r#"{"parameters": {"gate": "CU", "target": [[1, 1], [1, 0]]}}"#;
        assert!(issues(bad, Some(Command::Gate))[0].message.contains("not unitary"));
        assert!(!issues(r#"{"parameters": {"gate": "CU"}}"#, Some(Command::Gate)).is_empty());
    }

    #[test]
    fn incompatible_choices() {
        assert!(!issues(r#"{"parameters": {"gate": "EF", "backend": "deterministic"}}"#, Some(Command::Gate)).is_empty());
        assert!(!issues(r#"{"parameters": {"gate": "CZ", "backend": "probabilistic", "phase_sigma": 0.1}}"#, Some(Command::Gate)).is_empty());
        assert!(!issues(r#"{"parameters": {"gate": "ES"}}"#, Some(Command::Qpt)).is_empty());
        assert!(!issues(r#"{"parameters": {"gate": "CZ", "random": 3}}"#, Some(Command::Decompose)).is_empty());
    }

    #[test]
    fn default_walk_table() {
        let c = validate_config("{}", Some(Command::Szegedy)).unwrap();
        let Parameters::Szegedy(p) = c.parameters else { panic!() };
        assert_eq!(p.cases.len(), 21);
        assert_eq!(p.steps, 200);
    }

    #[test]
    fn explicit_matrix_must_be_stochastic() {
        let is = issues(r#"{"parameters": {"cases": [{"matrix": [[0.5, 0.5], [0.6, 0.5]]}]}}"#, Some(Command::Szegedy));
        assert_eq!(is[0].path, "parameters.cases[0].matrix");
    }

    #[test]
    fn config_roundtrips_through_serde() {
        let c = validate_config(r#"{"seed": 9, "parameters": {"csp": 3}}"#, Some(Command::Qaoa)).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
