//! Experiment configuration: a flat `section.key = value` text format or
//! JSON, deserialised into [`ExperimentConfig`] and validated as a whole
//! before any computation starts.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fp::{calibrate_drift, generate_drift, DiscreteMeasure, DriftField};
use crate::grid::Grid;
use crate::hamiltonian::{make_pair, ConjugatePair, NumericPair, PairParams, PairTag};
use crate::hjb::HjbOptions;
use crate::levy::{Atom, DensityProfile, LevyMeasureSpec};
use crate::mfg::{make_coupling, Coupling, CouplingSpec, MfgOptions, Mollifier, UpdateRule};
use crate::operator::{assemble_operator, DiscreteOperator};
use crate::sde::{Dynamics, McOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    pub d: usize,
    pub n: usize,
    #[serde(alias = "T")]
    pub horizon: f64,
    pub n_t: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self { d: 1, n: 128, horizon: 0.25, n_t: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevyKind {
    FractionalLaplacian,
    Stable,
    TemperedStable,
    Uniform,
    Gaussian,
    Atomic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevyBlock {
    pub kind: LevyKind,
    pub two_sigma: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    /// Forces `c_minus = c_plus` for stable kinds.
    pub symmetric: bool,
    pub lambda: f64,
    /// Support and rate of the uniform profile; centre, width and mass of
    /// the Gaussian profile.
    pub lo: f64,
    pub hi: f64,
    pub rate: f64,
    pub center: f64,
    pub width: f64,
    pub mass: f64,
    /// Flat list `location, mass, location, mass, …`.
    pub atoms: Vec<f64>,
}

impl Default for LevyBlock {
    fn default() -> Self {
        Self {
            kind: LevyKind::FractionalLaplacian,
            two_sigma: 0.2,
            c_plus: 1.0,
            c_minus: 1.0,
            symmetric: true,
            lambda: 1.0,
            lo: -0.1,
            hi: 0.1,
            rate: 1.0,
            center: 0.0,
            width: 0.05,
            mass: 1.0,
            atoms: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HamiltonianBlock {
    /// `a`–`f` or `numeric`.
    pub tag: String,
    pub kappa: Option<f64>,
    pub epsilon: Option<f64>,
    pub q: Option<f64>,
    /// Base pair of the shift combinator (tag `f`): `a`–`e` with the same
    /// parameters.
    pub base: Option<String>,
    /// CSV file with `zeta,cost` rows for the numeric pair.
    pub table: Option<String>,
}

impl Default for HamiltonianBlock {
    fn default() -> Self {
        Self { tag: "d".into(), kappa: None, epsilon: None, q: Some(2.8), base: None, table: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingBlock {
    pub width: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub terminal_amplitude: f64,
    pub terminal_offset: f64,
}

impl Default for CouplingBlock {
    fn default() -> Self {
        Self { width: 0.05, amplitude: 1.0, offset: 0.0, terminal_amplitude: 1.0, terminal_offset: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Gaussian,
    Uniform,
    Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialBlock {
    pub kind: InitialKind,
    pub center: f64,
    pub width: f64,
}

impl Default for InitialBlock {
    fn default() -> Self {
        Self { kind: InitialKind::Gaussian, center: 0.5, width: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    Constant,
    Spectral,
    Calibrated,
}

/// Drift used by the stand-alone FP, dual and SDE commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftBlock {
    pub kind: DriftKind,
    pub value: f64,
    /// Spectral envelope exponent, or the target exponent when calibrated.
    pub beta: f64,
    pub lo: f64,
    pub amplitude: f64,
}

impl Default for DriftBlock {
    fn default() -> Self {
        Self { kind: DriftKind::Constant, value: 1.0, beta: 0.9, lo: 0.5, amplitude: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseBlock {
    pub alpha: f64,
    /// Defaults to the Hölder exponent of the configured pair.
    pub gamma: Option<f64>,
    /// Overrides the symmetry read off the Lévy block.
    pub symmetric: Option<bool>,
    pub beta: Option<f64>,
}

impl Default for DiagnoseBlock {
    fn default() -> Self {
        Self { alpha: 1.0, gamma: None, symmetric: None, beta: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(alias = "tau")]
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub theta: f64,
    pub rule: UpdateRule,
    pub multistart: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-9, max_iters: 500, theta: 0.9, rule: UpdateRule::Damped, multistart: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McBlock {
    pub n_paths: usize,
    pub seed: u64,
    pub threads: usize,
    pub dynamics: Dynamics,
}

impl Default for McBlock {
    fn default() -> Self {
        Self { n_paths: 100_000, seed: 20240611, threads: 1, dynamics: Dynamics::TimeChange }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: String,
    pub formats: Vec<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: "out".into(), formats: vec!["csv".into(), "json".into()] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridBlock,
    pub levy: LevyBlock,
    pub hamiltonian: HamiltonianBlock,
    pub coupling: CouplingBlock,
    pub initial: InitialBlock,
    pub drift: DriftBlock,
    pub diagnose: DiagnoseBlock,
    pub solver: SolverBlock,
    pub mc: McBlock,
    pub output: OutputBlock,
}

fn scalar(raw: &str) -> Value {
    let s = raw.trim();
    if let Some(inner) = s.strip_prefix('"').and_then(|t| t.strip_suffix('"')) {
        return Value::String(inner.to_string());
    }
    if let Some(inner) = s.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
        if inner.trim().is_empty() {
            return Value::Array(Vec::new());
        }
        return Value::Array(inner.split(',').map(scalar).collect());
    }
    match s {
        "true" => return Value::Bool(true),
        "false" => return Value::Bool(false),
        "none" | "null" => return Value::Null,
        _ => {}
    }
    if let Ok(i) = s.parse::<i64>() {
        return Value::from(i);
    }
    if let Ok(x) = s.parse::<f64>() {
        if let Some(n) = serde_json::Number::from_f64(x) {
            return Value::Number(n);
        }
    }
    Value::String(s.to_string())
}

/// Parse the flat `section.key = value` format into a JSON object.
pub fn parse_flat(text: &str) -> Result<Value> {
    let mut root = Map::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let path: Vec<&str> = key.trim().split('.').map(str::trim).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("line {}: malformed key `{}`", lineno + 1, key.trim())));
        }
        let mut node = &mut root;
        for part in &path[..path.len() - 1] {
            let entry = node.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
            node = entry
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("line {}: `{part}` is both a value and a section", lineno + 1)))?;
        }
        let leaf = path[path.len() - 1].to_string();
        if node.insert(leaf, scalar(value)).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{}`", lineno + 1, key.trim())));
        }
    }
    Ok(Value::Object(root))
}

fn parse_pair_tag(tag: &str) -> Result<PairTag> {
    Ok(match tag.to_ascii_lowercase().as_str() {
        "a" | "linear" => PairTag::A,
        "b" | "capped_linear" => PairTag::B,
        "c" | "smoothed" => PairTag::C,
        "d" | "power" => PairTag::D,
        "e" | "entropic" => PairTag::E,
        "f" | "shifted" => PairTag::F,
        other => return Err(Error::Config(format!("hamiltonian.tag: unknown pair `{other}`"))),
    })
}

impl ExperimentConfig {
    /// Parse JSON (text starting with `{`) or the flat format, then validate.
    pub fn parse(text: &str) -> Result<Self> {
        let value = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(format!("json: {e}")))?
        } else {
            parse_flat(text)?
        };
        let cfg: Self = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical JSON used for hashing and for echoing into outputs.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Every downstream constraint, checked by building each object once.
    pub fn validate(&self) -> Result<()> {
        if self.grid.d != 1 {
            return Err(Error::Config(format!("grid.d: only d = 1 is supported, got {}", self.grid.d)));
        }
        let grid = self.grid()?;
        self.operator(&grid)?;
        self.pair()?;
        self.coupling(&grid)?;
        self.initial_measure(&grid)?;
        let s = &self.solver;
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            return Err(Error::Config(format!("solver.damping: must lie in (0, 1], got {}", s.damping)));
        }
        if !(s.tol > 0.0 && s.tol.is_finite()) {
            return Err(Error::Config(format!("solver.tol: must be positive, got {}", s.tol)));
        }
        if s.max_iters == 0 {
            return Err(Error::Config("solver.max_iters: must be positive".into()));
        }
        if !(s.theta > 0.0 && s.theta <= 1.0) {
            return Err(Error::Config(format!("solver.theta: CFL target must lie in (0, 1], got {}", s.theta)));
        }
        if self.mc.n_paths < 2 {
            return Err(Error::Config("mc.n_paths: need at least two paths".into()));
        }
        if self.drift.kind == DriftKind::Constant && !(self.drift.value >= 0.0 && self.drift.value.is_finite()) {
            return Err(Error::Config(format!("drift.value: must be nonnegative, got {}", self.drift.value)));
        }
        if self.drift.kind == DriftKind::Calibrated && !(self.drift.beta > 0.0 && self.drift.beta < 1.0) {
            return Err(Error::Config(format!("drift.beta: target exponent must lie in (0, 1), got {}", self.drift.beta)));
        }
        if self.drift.kind == DriftKind::Spectral {
            self.drift(&grid)?;
        }
        if !(self.diagnose.alpha > 0.0 && self.diagnose.alpha <= 1.0) {
            return Err(Error::Config(format!("diagnose.alpha: must lie in (0, 1], got {}", self.diagnose.alpha)));
        }
        for f in &self.output.formats {
            if f != "csv" && f != "json" {
                return Err(Error::Config(format!("output.formats: unknown format `{f}`")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.n, self.grid.horizon, self.grid.n_t).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn levy_spec(&self) -> Result<LevyMeasureSpec> {
        let l = &self.levy;
        let c_minus = if l.symmetric { l.c_plus } else { l.c_minus };
        let spec = match l.kind {
            LevyKind::FractionalLaplacian => LevyMeasureSpec::fractional_laplacian(l.two_sigma)
                .map_err(|e| Error::Config(format!("levy: {e}")))?,
            LevyKind::Stable => LevyMeasureSpec::Stable { two_sigma: l.two_sigma, c_plus: l.c_plus, c_minus },
            LevyKind::TemperedStable => {
                LevyMeasureSpec::TemperedStable { two_sigma: l.two_sigma, c_plus: l.c_plus, c_minus, lambda: l.lambda }
            }
            LevyKind::Uniform => LevyMeasureSpec::BoundedDensity {
                density: DensityProfile::Uniform { lo: l.lo, hi: l.hi, rate: l.rate },
                order: l.two_sigma,
            },
            LevyKind::Gaussian => LevyMeasureSpec::BoundedDensity {
                density: DensityProfile::Gaussian { center: l.center, width: l.width, mass: l.mass },
                order: l.two_sigma,
            },
            LevyKind::Atomic => {
                if l.atoms.is_empty() || l.atoms.len() % 2 != 0 {
                    return Err(Error::Config("levy.atoms: expected a flat list of (location, mass) pairs".into()));
                }
                LevyMeasureSpec::Atomic {
                    atoms: l.atoms.chunks(2).map(|c| Atom { location: c[0], mass: c[1] }).collect(),
                    order: l.two_sigma,
                }
            }
        };
        spec.validate().map_err(|e| Error::Config(format!("levy: {e}")))?;
        Ok(spec)
    }

    pub fn operator(&self, grid: &Grid) -> Result<DiscreteOperator> {
        assemble_operator(&self.levy_spec()?, grid).map_err(|e| Error::Config(format!("levy: {e}")))
    }

    pub fn pair(&self) -> Result<ConjugatePair> {
        let h = &self.hamiltonian;
        if h.tag == "numeric" {
            let path = h
                .table
                .as_ref()
                .ok_or_else(|| Error::Config("hamiltonian.table: required for the numeric pair".into()))?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("hamiltonian.table: cannot read {path}: {e}")))?;
            return NumericPair::from_csv(&text)
                .map(ConjugatePair::Numeric)
                .map_err(|e| Error::Config(format!("hamiltonian.table: {e}")));
        }
        let base = match &h.base {
            Some(b) => {
                let params = PairParams { kappa: h.kappa, epsilon: h.epsilon, q: h.q, base: None };
                let pair = make_pair(parse_pair_tag(b)?, &params)
                    .map_err(|e| Error::Config(format!("hamiltonian.base: {e}")))?;
                Some(Box::new(pair))
            }
            None => None,
        };
        let params = PairParams { kappa: h.kappa, epsilon: h.epsilon, q: h.q, base };
        make_pair(parse_pair_tag(&h.tag)?, &params).map_err(|e| Error::Config(format!("hamiltonian: {e}")))
    }

    pub fn coupling(&self, grid: &Grid) -> Result<Coupling> {
        let c = &self.coupling;
        make_coupling(
            CouplingSpec {
                mollifier: Mollifier::Gaussian { width: c.width },
                amplitude: c.amplitude,
                offset: c.offset,
                terminal_amplitude: c.terminal_amplitude,
                terminal_offset: c.terminal_offset,
            },
            grid,
        )
        .map_err(|e| Error::Config(format!("coupling: {e}")))
    }

    pub fn initial_measure(&self, grid: &Grid) -> Result<DiscreteMeasure> {
        let i = &self.initial;
        match i.kind {
            InitialKind::Gaussian => {
                DiscreteMeasure::gaussian(grid, i.center, i.width).map_err(|e| Error::Config(format!("initial: {e}")))
            }
            InitialKind::Uniform => Ok(DiscreteMeasure::uniform(grid.n())),
            InitialKind::Point => Ok(DiscreteMeasure::point_mass(grid.n(), grid.nearest_index(i.center))),
        }
    }

    /// Drift for the stand-alone FP, dual and SDE commands; random kinds draw
    /// from `mc.seed`.
    pub fn drift(&self, grid: &Grid) -> Result<DriftField> {
        let d = &self.drift;
        let built = match d.kind {
            DriftKind::Constant => DriftField::constant(grid, d.value),
            DriftKind::Spectral => generate_drift(grid, d.beta, d.lo, d.amplitude, self.mc.seed),
            DriftKind::Calibrated => {
                calibrate_drift(grid, d.beta, d.lo, d.amplitude, self.mc.seed, 0.005).map(|c| c.drift)
            }
        };
        built.map_err(|e| Error::Config(format!("drift: {e}")))
    }

    pub fn hjb_options(&self) -> HjbOptions {
        HjbOptions { theta: self.solver.theta, ..HjbOptions::default() }
    }

    pub fn mfg_options(&self) -> MfgOptions {
        MfgOptions {
            damping: self.solver.damping,
            tol: self.solver.tol,
            max_iters: self.solver.max_iters,
            rule: self.solver.rule,
            hjb: self.hjb_options(),
        }
    }

    pub fn mc_options(&self) -> McOptions {
        McOptions { n_paths: self.mc.n_paths, seed: self.mc.seed, threads: self.mc.threads.max(1), dynamics: self.mc.dynamics }
    }
}

/// Configuration shipped with the tool; `verify-all` runs on it.
pub const DEFAULT_CONFIG: &str = "\
# levy-mfg default experiment
grid.d = 1
grid.n = 128
grid.horizon = 0.25
grid.n_t = 50

levy.kind = fractional_laplacian
levy.two_sigma = 0.2

hamiltonian.tag = d
hamiltonian.q = 2.8

coupling.width = 0.05
coupling.amplitude = 1.0
coupling.offset = 0.0
coupling.terminal_amplitude = 1.0
coupling.terminal_offset = 0.0

initial.kind = gaussian
initial.center = 0.5
initial.width = 0.1

solver.damping = 0.5
solver.tol = 1e-9
solver.max_iters = 500
solver.theta = 0.9
solver.multistart = 4

mc.n_paths = 100000
mc.seed = 20240611
mc.threads = 1

output.directory = out
output.formats = [csv, json]
";
