//! Experiment configuration: a line-oriented `key = value` file with
//! `[section]` headers, overridden by `section.key=value` flags.
//!
//! Parsing normalizes every value, so [`render`] of a parsed map is a fixed
//! point of `parse ∘ render`. Validation reports every violation at once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use hitlab_core::gaussian_oracle::{PairMesh, SpaceTimePoint};
use hitlab_core::hitting_lab::{Experiment, InflationRule, Rectangle};
use hitlab_core::kernels::NoiseParams;
use hitlab_core::potential_theory::{interval_cloud, parse_points, CapacityOptions, CompactTarget};
use hitlab_core::spde_solver::{Drift, ModelSpec, Scheme, Sigma};
use hitlab_core::spectral_noise::TorusGrid;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

impl ConfigError {
    pub fn violations(&self) -> &[String] {
        match self {
            ConfigError::Invalid(v) => v,
            ConfigError::Read { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Command {
    Oracle,
    Simulate,
    Holder,
    Capacity,
    Hausdorff,
    Hit,
    BallExponent,
    Polarity,
    RangeDim,
    Sandwich,
    ValidateKernels,
}

impl Command {
    pub const ALL: [Command; 11] = [
        Command::Oracle,
        Command::Simulate,
        Command::Holder,
        Command::Capacity,
        Command::Hausdorff,
        Command::Hit,
        Command::BallExponent,
        Command::Polarity,
        Command::RangeDim,
        Command::Sandwich,
        Command::ValidateKernels,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Oracle => "oracle",
            Command::Simulate => "simulate",
            Command::Holder => "holder",
            Command::Capacity => "capacity",
            Command::Hausdorff => "hausdorff",
            Command::Hit => "hit",
            Command::BallExponent => "ball-exponent",
            Command::Polarity => "polarity",
            Command::RangeDim => "range-dim",
            Command::Sandwich => "sandwich",
            Command::ValidateKernels => "validate-kernels",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    fn needs_model(self) -> bool {
        !matches!(self, Command::Capacity | Command::Hausdorff | Command::ValidateKernels)
    }

    fn needs_solver(self) -> bool {
        self.needs_model() && self != Command::Oracle
    }

    fn needs_rect(self) -> bool {
        matches!(self, Command::Hit | Command::BallExponent | Command::Polarity | Command::RangeDim | Command::Sandwich)
    }

    fn needs_target(self) -> bool {
        matches!(self, Command::Capacity | Command::Hausdorff | Command::Hit | Command::Sandwich)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
    Both,
}

impl OutputFormat {
    pub fn json(self) -> bool {
        self != OutputFormat::Csv
    }
    pub fn csv(self) -> bool {
        self != OutputFormat::Json
    }
}

/// A normalized configuration value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(u64),
    Float(f64),
    Ints(Vec<u64>),
    Floats(Vec<f64>),
    Pairs(Vec<(f64, f64)>),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |xs: Vec<String>, sep: &str| xs.join(sep);
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Ints(v) => f.write_str(&join(v.iter().map(|x| x.to_string()).collect(), ", ")),
            Value::Floats(v) => f.write_str(&join(v.iter().map(|x| format!("{x:?}")).collect(), ", ")),
            Value::Pairs(v) => f.write_str(&join(v.iter().map(|(a, b)| format!("{a:?}, {b:?}")).collect(), "; ")),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Int,
    Float,
    Ints,
    Floats,
    Pairs,
    Text,
    Choice(&'static [&'static str]),
}

const COMMAND_NAMES: &[&str] = &[
    "oracle",
    "simulate",
    "holder",
    "capacity",
    "hausdorff",
    "hit",
    "ball-exponent",
    "polarity",
    "range-dim",
    "sandwich",
    "validate-kernels",
];

const KEYS: &[(&str, Kind)] = &[
    ("run.command", Kind::Choice(COMMAND_NAMES)),
    ("run.master_seed", Kind::Int),
    ("run.output_dir", Kind::Text),
    ("run.output", Kind::Choice(&["json", "csv", "both"])),
    ("run.replicas", Kind::Int),
    ("model.k", Kind::Int),
    ("model.beta", Kind::Float),
    ("model.d", Kind::Int),
    ("model.sigma", Kind::Text),
    ("model.drift", Kind::Text),
    ("model.horizon", Kind::Float),
    ("grid.length", Kind::Float),
    ("grid.points", Kind::Int),
    ("grid.dt", Kind::Float),
    ("grid.scheme", Kind::Choice(&["auto", "stepped", "spectral", "aggregated"])),
    ("rect.time", Kind::Floats),
    ("rect.space", Kind::Pairs),
    ("record.time_stride", Kind::Int),
    ("record.space_stride", Kind::Int),
    ("record.times", Kind::Floats),
    ("target.kind", Kind::Choice(&["point", "ball", "cloud", "interval"])),
    ("target.center", Kind::Floats),
    ("target.radius", Kind::Float),
    ("target.file", Kind::Text),
    ("target.cell_radius", Kind::Float),
    ("target.interval", Kind::Floats),
    ("target.cells", Kind::Int),
    ("experiment.eps", Kind::Floats),
    ("experiment.alpha", Kind::Float),
    ("experiment.dims", Kind::Ints),
    ("experiment.center", Kind::Floats),
    ("experiment.cover_scales", Kind::Floats),
    ("experiment.scales", Kind::Floats),
    ("experiment.time_thin", Kind::Int),
    ("experiment.space_thin", Kind::Int),
    ("experiment.inflation", Kind::Text),
    ("experiment.n0", Kind::Float),
    ("experiment.gap_tol", Kind::Float),
    ("experiment.max_iter", Kind::Int),
    ("experiment.ball_resolution", Kind::Int),
    ("experiment.min_exponent", Kind::Float),
    ("experiment.tolerance", Kind::Float),
    ("oracle.p_time", Kind::Float),
    ("oracle.p_space", Kind::Floats),
    ("oracle.q_time", Kind::Float),
    ("oracle.q_space", Kind::Floats),
    ("oracle.levels", Kind::Int),
    ("oracle.decades", Kind::Float),
    ("holder.time", Kind::Float),
    ("holder.time_lags", Kind::Floats),
    ("holder.space_lags", Kind::Ints),
    ("simulate.dump_noise_steps", Kind::Ints),
    ("simulate.dump_fields", Kind::Choice(&["true", "false"])),
];

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind)
}

fn parse_float(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("'{}' is not a finite number", s.trim())),
    }
}

fn parse_int(s: &str) -> Result<u64, String> {
    s.trim().parse::<u64>().map_err(|_| format!("'{}' is not a non-negative integer", s.trim()))
}

fn split_list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect()
}

fn parse_value(key: &str, raw: &str) -> Result<Value, String> {
    let kind = kind_of(key).ok_or_else(|| format!("unknown key '{key}'"))?;
    let raw = raw.trim();
    let wrap = |e: String| format!("{key}: {e}");
    if raw.is_empty() {
        return Err(format!("{key}: empty value"));
    }
    match kind {
        Kind::Int => parse_int(raw).map(Value::Int).map_err(wrap),
        Kind::Float => parse_float(raw).map(Value::Float).map_err(wrap),
        Kind::Ints => {
            split_list(raw).into_iter().map(parse_int).collect::<Result<_, _>>().map(Value::Ints).map_err(wrap)
        }
        Kind::Floats => {
            split_list(raw).into_iter().map(parse_float).collect::<Result<_, _>>().map(Value::Floats).map_err(wrap)
        }
        Kind::Pairs => raw
            .split(';')
            .map(|p| {
                let xs: Vec<f64> = split_list(p).into_iter().map(parse_float).collect::<Result<_, _>>()?;
                match xs[..] {
                    [a, b] => Ok((a, b)),
                    _ => Err(format!("'{}' is not a pair 'a, b'", p.trim())),
                }
            })
            .collect::<Result<_, _>>()
            .map(Value::Pairs)
            .map_err(wrap),
        Kind::Text => Ok(Value::Text(raw.to_string())),
        Kind::Choice(options) => {
            if options.contains(&raw) {
                Ok(Value::Text(raw.to_string()))
            } else {
                Err(format!("{key}: '{raw}' is not one of {}", options.join(", ")))
            }
        }
    }
}

pub type ValueMap = BTreeMap<String, Value>;

/// Parse config text into normalized values, collecting every violation.
pub fn parse_text(text: &str) -> Result<ValueMap, ConfigError> {
    let mut map = ValueMap::new();
    let mut errors = vec![];
    let mut section: Option<String> = None;
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = no + 1;
        if let Some(rest) = line.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) if !name.trim().is_empty() => section = Some(name.trim().to_string()),
                _ => errors.push(format!("line {at}: malformed section header '{line}'")),
            }
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errors.push(format!("line {at}: expected 'key = value', got '{line}'"));
            continue;
        };
        let k = k.trim();
        let key = match (&section, k.contains('.')) {
            (_, true) => k.to_string(),
            (Some(s), false) => format!("{s}.{k}"),
            (None, false) => {
                errors.push(format!("line {at}: key '{k}' outside any section"));
                continue;
            }
        };
        if map.contains_key(&key) {
            errors.push(format!("line {at}: duplicate key '{key}'"));
            continue;
        }
        match parse_value(&key, v) {
            Ok(val) => {
                map.insert(key, val);
            }
            Err(e) => errors.push(format!("line {at}: {e}")),
        }
    }
    if errors.is_empty() {
        Ok(map)
    } else {
        Err(ConfigError::Invalid(errors))
    }
}

/// Apply `section.key=value` overrides on top of `map`.
pub fn apply_overrides(map: &mut ValueMap, overrides: &[String]) -> Result<(), ConfigError> {
    let mut errors = vec![];
    for o in overrides {
        let Some((k, v)) = o.split_once('=') else {
            errors.push(format!("override '{o}' is not 'section.key=value'"));
            continue;
        };
        match parse_value(k.trim(), v) {
            Ok(val) => {
                map.insert(k.trim().to_string(), val);
            }
            Err(e) => errors.push(format!("override: {e}")),
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(errors))
    }
}

/// Canonical text: sections and keys in sorted order, normalized values.
pub fn render(map: &ValueMap) -> String {
    let mut out = String::new();
    let mut current = "";
    for (key, value) in map {
        let (section, name) = key.split_once('.').expect("keys are dotted");
        if section != current {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("[{section}]\n"));
            current = section;
        }
        out.push_str(&format!("{name} = {value}\n"));
    }
    out
}

/// Insert a fresh master seed when none is set; returns the generated seed.
pub fn ensure_seed(map: &mut ValueMap) -> Option<u64> {
    if map.contains_key("run.master_seed") {
        return None;
    }
    let nanos =
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0);
    // splitmix64 finalizer over time and pid
    let mut z = nanos ^ ((std::process::id() as u64) << 32);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    let seed = (z ^ (z >> 31)) >> 11;
    map.insert("run.master_seed".into(), Value::Int(seed));
    Some(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderSpec {
    pub time: f64,
    pub time_lags: Vec<f64>,
    pub space_lags: Vec<usize>,
}

/// A validated experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: Command,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub output: OutputFormat,
    pub replicas: u64,
    pub noise: Option<NoiseParams>,
    pub model: Option<ModelSpec>,
    pub grid: Option<TorusGrid>,
    pub scheme: Scheme,
    pub rect: Option<Rectangle>,
    pub time_stride: u64,
    pub space_stride: usize,
    pub record_times: Vec<f64>,
    pub target: Option<CompactTarget>,
    pub eps: Vec<f64>,
    pub alpha: Option<f64>,
    pub dims: Vec<usize>,
    pub center: Option<Vec<f64>>,
    pub cover_scales: Vec<f64>,
    pub scales: Vec<f64>,
    pub time_thin: usize,
    pub space_thin: usize,
    pub inflation: InflationRule,
    pub n0: Option<f64>,
    pub capacity: CapacityOptions,
    pub min_exponent: Option<f64>,
    pub tolerance: Option<f64>,
    pub oracle_p: Option<SpaceTimePoint>,
    pub oracle_q: Option<SpaceTimePoint>,
    pub pair_mesh: PairMesh,
    pub holder: Option<HolderSpec>,
    pub dump_noise_steps: Vec<u64>,
    pub dump_fields: bool,
    values: ValueMap,
}

pub const DEFAULT_REPLICAS: u64 = 1000;
pub const DEFAULT_OUTPUT_DIR: &str = "hitlab-out";

struct Reader<'a> {
    map: &'a ValueMap,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn int(&self, key: &str) -> Option<u64> {
        match self.map.get(key) {
            Some(Value::Int(v)) => Some(*v),
            _ => None,
        }
    }
    fn float(&self, key: &str) -> Option<f64> {
        match self.map.get(key) {
            Some(Value::Float(v)) => Some(*v),
            _ => None,
        }
    }
    fn floats(&self, key: &str) -> Option<Vec<f64>> {
        match self.map.get(key) {
            Some(Value::Floats(v)) => Some(v.clone()),
            _ => None,
        }
    }
    fn ints(&self, key: &str) -> Option<Vec<u64>> {
        match self.map.get(key) {
            Some(Value::Ints(v)) => Some(v.clone()),
            _ => None,
        }
    }
    fn pairs(&self, key: &str) -> Option<Vec<(f64, f64)>> {
        match self.map.get(key) {
            Some(Value::Pairs(v)) => Some(v.clone()),
            _ => None,
        }
    }
    fn text(&self, key: &str) -> Option<&'a str> {
        match self.map.get(key) {
            Some(Value::Text(v)) => Some(v.as_str()),
            _ => None,
        }
    }
    fn require<T>(&mut self, key: &str, v: Option<T>, command: Command) -> Option<T> {
        if v.is_none() {
            self.errors.push(format!("{key} is required for '{command}'"));
        }
        v
    }
    fn check<T>(&mut self, r: hitlab_core::Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(e.to_string());
                None
            }
        }
    }
    fn fail(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }
}

fn parse_sigma(s: &str) -> Result<Sigma, String> {
    let (name, args) = s.split_once(':').unwrap_or((s, ""));
    let nums: Result<Vec<f64>, String> = split_list(args).into_iter().map(parse_float).collect();
    let nums = nums.map_err(|e| format!("model.sigma: {e}"))?;
    match (name.trim(), nums.as_slice()) {
        ("zero", []) => Ok(Sigma::Zero),
        ("identity", []) => Ok(Sigma::Identity),
        ("scaled", [s]) => Ok(Sigma::ScaledIdentity { scale: *s }),
        ("tanh", [s, m]) => Ok(Sigma::TanhMixing { scale: *s, mix: *m }),
        _ => Err(format!("model.sigma: '{s}' is not one of zero, identity, scaled:S, tanh:S,M")),
    }
}

fn parse_drift(s: &str) -> Result<Drift, String> {
    let (name, args) = s.split_once(':').unwrap_or((s, ""));
    let nums: Result<Vec<f64>, String> = split_list(args).into_iter().map(parse_float).collect();
    let nums = nums.map_err(|e| format!("model.drift: {e}"))?;
    match (name.trim(), nums.as_slice()) {
        ("zero", []) => Ok(Drift::Zero),
        ("constant", v) if !v.is_empty() => Ok(Drift::Constant { value: v.to_vec() }),
        ("linear", [r]) => Ok(Drift::Linear { rate: *r }),
        ("bounded", [a]) => Ok(Drift::BoundedSmooth { amplitude: *a }),
        _ => Err(format!("model.drift: '{s}' is not one of zero, constant:V1,..,Vd, linear:R, bounded:A")),
    }
}

fn parse_inflation(s: &str) -> Result<InflationRule, String> {
    match s {
        "fitted" => Ok(InflationRule::Fitted),
        "half_gap" => Ok(InflationRule::HalfGap),
        v => match parse_float(v) {
            Ok(x) if x >= 0.0 => Ok(InflationRule::Fixed { value: x }),
            _ => Err(format!("experiment.inflation: '{v}' is not fitted, half_gap or a number ≥ 0")),
        },
    }
}

/// Default torus for `k` axes: side length and points per axis.
pub fn default_torus(k: usize) -> (f64, usize) {
    match k {
        1 => (8.0, 512),
        2 => (4.0, 128),
        _ => (2.0, 32),
    }
}

impl ExperimentConfig {
    /// Validate a value map against the command's requirements and every
    /// module invariant.
    pub fn from_values(map: ValueMap) -> Result<Self, ConfigError> {
        let mut r = Reader { map: &map, errors: vec![] };
        let command = match r.text("run.command").and_then(Command::from_name) {
            Some(c) => c,
            None => return Err(ConfigError::Invalid(vec!["run.command is required".into()])),
        };
        let master_seed = r.int("run.master_seed").unwrap_or(0);
        if !map.contains_key("run.master_seed") {
            r.fail("run.master_seed is missing");
        }
        let output_dir = PathBuf::from(r.text("run.output_dir").unwrap_or(DEFAULT_OUTPUT_DIR));
        let output = match r.text("run.output") {
            Some("json") => OutputFormat::Json,
            Some("csv") => OutputFormat::Csv,
            _ => OutputFormat::Both,
        };
        let replicas = r.int("run.replicas").unwrap_or(DEFAULT_REPLICAS);
        if replicas == 0 {
            r.fail("run.replicas must be positive");
        }

        // model
        let k = r.int("model.k").map(|v| v as usize);
        let beta = r.float("model.beta");
        let dims: Vec<usize> = r.ints("experiment.dims").unwrap_or_default().into_iter().map(|v| v as usize).collect();
        let d = r.int("model.d").map(|v| v as usize).or_else(|| dims.iter().copied().max()).unwrap_or(1);
        let sigma = match parse_sigma(r.text("model.sigma").unwrap_or("identity")) {
            Ok(s) => Some(s),
            Err(e) => {
                r.fail(e);
                None
            }
        };
        let drift = match parse_drift(r.text("model.drift").unwrap_or("zero")) {
            Ok(s) => Some(s),
            Err(e) => {
                r.fail(e);
                None
            }
        };
        let mut params = None;
        if command.needs_model() {
            let k = r.require("model.k", k, command);
            let beta = r.require("model.beta", beta, command);
            if let (Some(k), Some(beta)) = (k, beta) {
                let p = NoiseParams { k, beta, d };
                params = r.check(p.validate().map(|_| p));
            }
        }
        for &dd in &dims {
            if let Some(p) = params {
                if dd == 0 {
                    r.fail("experiment.dims must be positive");
                } else if dd > p.d {
                    r.fail(format!("experiment.dims entry {dd} exceeds model.d = {}", p.d));
                }
            }
        }

        // rectangle
        let mut rect = None;
        if let Some(t) = r.floats("rect.time") {
            if t.len() != 2 {
                r.fail("rect.time must be 'start, end'");
            } else {
                let space = r.pairs("rect.space").unwrap_or_default();
                rect = r.check(Rectangle::new((t[0], t[1]), space));
            }
        } else if map.contains_key("rect.space") {
            r.fail("rect.space given without rect.time");
        }
        if command.needs_rect() {
            r.require("rect.time", rect.as_ref(), command);
        }
        if let (Some(rc), Some(p)) = (&rect, params) {
            if rc.k() != p.k {
                r.fail(format!("rect.space has {} axes, expected k = {}", rc.k(), p.k));
            }
        }

        // record and holder windows
        let record_times = r.floats("record.times").unwrap_or_default();
        if command == Command::Simulate && record_times.is_empty() {
            r.fail("record.times is required for 'simulate'");
        }
        if record_times.iter().any(|t| *t <= 0.0) {
            r.fail("record.times must be positive");
        }
        let mut holder = None;
        if command == Command::Holder {
            let time = r.float("holder.time");
            let time = r.require("holder.time", time, command);
            let lags = r.floats("holder.time_lags");
            let lags = r.require("holder.time_lags", lags, command);
            let space = r.ints("holder.space_lags");
            let space = r.require("holder.space_lags", space, command);
            if let (Some(time), Some(time_lags), Some(space)) = (time, lags, space) {
                if time_lags.len() < 4 || space.len() < 4 {
                    r.fail("holder fits need at least 4 temporal and 4 spatial lags");
                }
                if time_lags.iter().any(|h| !(*h > 0.0 && *h < time)) {
                    r.fail("holder.time_lags must lie in (0, holder.time)");
                }
                if space.contains(&0) {
                    r.fail("holder.space_lags must be positive");
                }
                holder =
                    Some(HolderSpec { time, time_lags, space_lags: space.into_iter().map(|v| v as usize).collect() });
            }
        }

        // model horizon and solver grid
        let horizon = r.float("model.horizon").or_else(|| match command {
            Command::Simulate => record_times.iter().copied().reduce(f64::max),
            Command::Holder => holder.as_ref().map(|h| h.time),
            _ => rect.as_ref().map(|rc| rc.time.1),
        });
        let mut model = None;
        let mut grid = None;
        if let (Some(p), Some(sigma), Some(drift)) = (params, sigma, drift) {
            if command.needs_solver() {
                match horizon {
                    Some(h) if h > 0.0 => {
                        let m = ModelSpec { params: p, sigma, drift, horizon: h };
                        model = r.check(m.validate().map(|_| m));
                    }
                    Some(_) => r.fail("model.horizon must be positive"),
                    None => r.fail(format!("model.horizon is required for '{command}'")),
                }
                let (l0, m0) = default_torus(p.k);
                let length = r.float("grid.length").unwrap_or(l0);
                let points = r.int("grid.points").map(|v| v as usize).unwrap_or(m0);
                let dt = r.float("grid.dt").unwrap_or_else(|| {
                    let h = length / points as f64;
                    h * h / 4.0
                });
                grid = r.check(TorusGrid::new(p.k, length, points, dt));
            }
        }
        let scheme = match r.text("grid.scheme") {
            Some("stepped") => Scheme::Stepped,
            Some("spectral") => Scheme::Spectral,
            Some("aggregated") => Scheme::Aggregated,
            _ => Scheme::Auto,
        };
        if let (Some(m), Some(g)) = (&model, &grid) {
            let steps = (m.horizon / g.dt).round();
            if (steps * g.dt - m.horizon).abs() > 1e-9 * m.horizon.max(1.0) {
                r.fail(format!("model.horizon = {} is not a multiple of grid.dt = {}", m.horizon, g.dt));
            }
            for t in &record_times {
                if *t > m.horizon * (1.0 + 1e-12) {
                    r.fail(format!("record time {t} exceeds the horizon {}", m.horizon));
                }
            }
        }

        let time_stride = r.int("record.time_stride").unwrap_or(1);
        let space_stride = r.int("record.space_stride").unwrap_or(1) as usize;
        if time_stride == 0 || space_stride == 0 {
            r.fail("record strides must be positive");
        }

        // target
        let target = if command.needs_target() || map.keys().any(|k| k.starts_with("target.")) {
            build_target(&mut r, command)
        } else {
            None
        };
        if let (Some(t), Some(p)) = (&target, params) {
            if matches!(command, Command::Hit | Command::Sandwich) && t.dimension() != p.d {
                r.fail(format!("target lives in R^{} but model.d = {}", t.dimension(), p.d));
            }
        }

        // experiment parameters
        let eps = r.floats("experiment.eps").unwrap_or_default();
        if eps.iter().any(|e| *e <= 0.0) {
            r.fail("experiment.eps entries must be positive");
        }
        if matches!(command, Command::BallExponent | Command::Polarity | Command::Sandwich) && eps.len() < 2 {
            r.fail(format!("experiment.eps needs at least two radii for '{command}'"));
        }
        let alpha = r.float("experiment.alpha");
        if matches!(command, Command::Capacity | Command::Hausdorff) {
            r.require("experiment.alpha", alpha, command);
        }
        if command == Command::Polarity && dims.is_empty() {
            r.fail("experiment.dims is required for 'polarity'");
        }
        let center = r.floats("experiment.center");
        if let (Some(c), Some(p)) = (&center, params) {
            if matches!(command, Command::BallExponent | Command::Polarity) && c.len() != p.d {
                r.fail(format!("experiment.center has {} coordinates, expected d = {}", c.len(), p.d));
            }
        }
        let cover_scales = r.floats("experiment.cover_scales").unwrap_or_default();
        if matches!(command, Command::Hausdorff | Command::Sandwich) && cover_scales.is_empty() {
            r.fail(format!("experiment.cover_scales is required for '{command}'"));
        }
        if cover_scales.iter().any(|e| *e <= 0.0) {
            r.fail("experiment.cover_scales entries must be positive");
        }
        let scales = r.floats("experiment.scales").unwrap_or_default();
        if command == Command::RangeDim {
            if scales.len() < 4 {
                r.fail("experiment.scales needs at least 4 box sizes for 'range-dim'");
            } else if scales.iter().any(|s| *s <= 0.0) {
                r.fail("experiment.scales entries must be positive");
            } else {
                let (lo, hi) = scales.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
                if (hi / lo).log10() < 1.5 - 1e-9 {
                    r.fail("experiment.scales must span at least 1.5 decades");
                }
            }
        }
        let time_thin = r.int("experiment.time_thin").unwrap_or(4) as usize;
        let space_thin = r.int("experiment.space_thin").unwrap_or(2) as usize;
        if time_thin == 0 || space_thin == 0 {
            r.fail("experiment thinning factors must be positive");
        }
        let inflation = match parse_inflation(r.text("experiment.inflation").unwrap_or("fitted")) {
            Ok(i) => i,
            Err(e) => {
                r.fail(e);
                InflationRule::Fitted
            }
        };
        let n0 = r.float("experiment.n0");
        if n0.is_some_and(|v| v <= 0.0) {
            r.fail("experiment.n0 must be positive");
        }
        let mut capacity = CapacityOptions::default();
        if let Some(v) = r.float("experiment.gap_tol") {
            capacity.gap_tol = v;
        }
        if let Some(v) = r.int("experiment.max_iter") {
            capacity.max_iter = v as usize;
        }
        if let Some(v) = r.int("experiment.ball_resolution") {
            capacity.ball_resolution = v as usize;
        }
        if !(capacity.gap_tol > 0.0) || capacity.max_iter == 0 || capacity.ball_resolution == 0 {
            r.fail("capacity options must be positive");
        }
        let min_exponent = r.float("experiment.min_exponent");
        let tolerance = r.float("experiment.tolerance");
        if tolerance.is_some_and(|v| v <= 0.0) {
            r.fail("experiment.tolerance must be positive");
        }

        // oracle points
        let point = |r: &mut Reader, which: &str| -> Option<SpaceTimePoint> {
            let t = r.float(&format!("oracle.{which}_time"))?;
            let x = r.floats(&format!("oracle.{which}_space")).unwrap_or_default();
            if t <= 0.0 {
                r.fail(format!("oracle.{which}_time must be positive"));
            }
            if let Some(p) = params {
                if x.len() != p.k {
                    r.fail(format!("oracle.{which}_space has {} coordinates, expected k = {}", x.len(), p.k));
                }
            }
            Some(SpaceTimePoint::new(t, x))
        };
        let oracle_p = point(&mut r, "p");
        let oracle_q = point(&mut r, "q");
        if command == Command::Oracle && oracle_p.is_none() {
            r.fail("oracle.p_time is required for 'oracle'");
        }
        let mut pair_mesh = PairMesh::default();
        if let Some(v) = r.int("oracle.levels") {
            pair_mesh.levels = v as usize;
        }
        if let Some(v) = r.float("oracle.decades") {
            pair_mesh.decades = v;
        }

        let dump_noise_steps = r.ints("simulate.dump_noise_steps").unwrap_or_default();
        let dump_fields = r.text("simulate.dump_fields") == Some("true");

        // the hitting experiment as a whole
        if let (Some(m), Some(g), Some(rc)) = (&model, &grid, &rect) {
            let exp = Experiment {
                model: m.clone(),
                grid: *g,
                rect: rc.clone(),
                time_stride,
                space_stride,
                master_seed,
                replicas: replicas.max(1),
                scheme,
            };
            if command.needs_rect() {
                r.check(exp.validate());
            }
        }

        if r.errors.is_empty() {
            let values = map.clone();
            Ok(Self {
                command,
                master_seed,
                output_dir,
                output,
                replicas,
                noise: params,
                model,
                grid,
                scheme,
                rect,
                time_stride,
                space_stride,
                record_times,
                target,
                eps,
                alpha,
                dims,
                center,
                cover_scales,
                scales,
                time_thin,
                space_thin,
                inflation,
                n0,
                capacity,
                min_exponent,
                tolerance,
                oracle_p,
                oracle_q,
                pair_mesh,
                holder,
                dump_noise_steps,
                dump_fields,
                values,
            })
        } else {
            Err(ConfigError::Invalid(r.errors))
        }
    }

    pub fn values(&self) -> &ValueMap {
        &self.values
    }

    /// Canonical text of the configuration, seed included.
    pub fn to_text(&self) -> String {
        render(&self.values)
    }

    pub fn params(&self) -> Option<NoiseParams> {
        self.noise
    }

    /// The hitting experiment, for commands that need one.
    pub fn experiment(&self) -> Option<Experiment> {
        Some(Experiment {
            model: self.model.clone()?,
            grid: self.grid?,
            rect: self.rect.clone()?,
            time_stride: self.time_stride,
            space_stride: self.space_stride,
            master_seed: self.master_seed,
            replicas: self.replicas,
            scheme: self.scheme,
        })
    }
}

fn build_target(r: &mut Reader, command: Command) -> Option<CompactTarget> {
    let kind = r.text("target.kind");
    let kind = r.require("target.kind", kind, command)?;
    let target = match kind {
        "point" => {
            let c = r.floats("target.center");
            CompactTarget::Point { at: r.require("target.center", c, command)? }
        }
        "ball" => {
            let c = r.floats("target.center");
            let c = r.require("target.center", c, command);
            let rad = r.float("target.radius");
            let rad = r.require("target.radius", rad, command);
            CompactTarget::Ball { center: c?, radius: rad? }
        }
        "interval" => {
            let iv = r.floats("target.interval");
            let iv = r.require("target.interval", iv, command)?;
            let cells = r.int("target.cells").unwrap_or(256) as usize;
            if iv.len() != 2 || !(iv[0] < iv[1]) || cells == 0 {
                r.fail("target.interval must be 'a, b' with a < b and target.cells positive");
                return None;
            }
            interval_cloud(iv[0], iv[1], cells)
        }
        _ => {
            let file = r.text("target.file");
            let file = r.require("target.file", file, command)?;
            let text = match std::fs::read_to_string(file) {
                Ok(t) => t,
                Err(e) => {
                    r.fail(format!("target.file '{file}': {e}"));
                    return None;
                }
            };
            let (points, _) = match parse_points(&text, None) {
                Ok(p) => p,
                Err(e) => {
                    r.fail(format!("target.file '{file}': {e}"));
                    return None;
                }
            };
            let cr = r.float("target.cell_radius");
            let cell_radius = r.require("target.cell_radius", cr, command)?;
            CompactTarget::Cloud { points, cell_radius }
        }
    };
    r.check(target.validate().map(|_| target.clone()))
}

/// Where a configuration comes from: an optional file, then overrides in order.
#[derive(Debug, Clone, Default)]
pub struct Sources {
    pub command: Option<String>,
    pub file: Option<PathBuf>,
    pub overrides: Vec<String>,
}

/// Read, override, seed and validate. Returns the generated seed, if any.
pub fn load(src: &Sources) -> Result<(ExperimentConfig, Option<u64>), ConfigError> {
    let mut map = match &src.file {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.clone(), source: e })?;
            parse_text(&text)?
        }
        None => ValueMap::new(),
    };
    let mut overrides = src.overrides.clone();
    if let Some(c) = &src.command {
        overrides.insert(0, format!("run.command={c}"));
    }
    apply_overrides(&mut map, &overrides)?;
    let generated = ensure_seed(&mut map);
    Ok((ExperimentConfig::from_values(map)?, generated))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_values(parse_text(text)?)
    }

    const BASE: &str =
        "[run]\ncommand = oracle\nmaster_seed = 7\n[model]\nk = 1\nbeta = 0.5\n[oracle]\np_time = 1\np_space = 0\n";

    #[test]
    fn accepts_a_minimal_oracle_config() {
        let cfg = load(BASE).unwrap();
        assert_eq!(cfg.command, Command::Oracle);
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.params().unwrap().beta, 0.5);
    }

    #[test]
    fn beta_outside_range_quotes_the_constraint() {
        let err = load(&BASE.replace("beta = 0.5", "beta = 1.5")).unwrap_err();
        let msg = err.violations().join("\n");
        assert!(msg.contains("0<β<(2∧k)"), "{msg}");
        assert!(msg.contains("min(2, k) = 1"), "{msg}");
    }

    #[test]
    fn beta_inside_range_for_k3_is_accepted() {
        let text = BASE
            .replace("k = 1", "k = 3")
            .replace("beta = 0.5", "beta = 1.5")
            .replace("p_space = 0", "p_space = 0, 0, 0");
        load(&text).unwrap();
    }

    #[test]
    fn every_violation_is_reported() {
        let text = "[run]\ncommand = hit\nmaster_seed = 1\n[model]\nk = 1\nbeta = 1.5\nbogus = 3\n[rect]\ntime = 0.5, 0.5\nspace = 0, 1\n";
        let err = parse_text(text).unwrap_err();
        assert_eq!(err.violations().len(), 1);
        let err = load(&text.replace("bogus = 3\n", "")).unwrap_err();
        let v = err.violations();
        assert!(v.iter().any(|m| m.contains("0<β<(2∧k)")), "{v:?}");
        assert!(v.iter().any(|m| m.contains("time interval") || m.contains("rectangle")), "{v:?}");
        assert!(v.iter().any(|m| m.contains("target.kind")), "{v:?}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_text("[model]\nkk = 1\n").unwrap_err();
        assert!(err.violations()[0].contains("unknown key 'model.kk'"));
        let mut map = ValueMap::new();
        assert!(apply_overrides(&mut map, &["grid.bogus=1".into()]).is_err());
    }

    #[test]
    fn render_is_a_fixed_point() {
        let text = "[model]\nbeta=.50\nk=1 # comment\n[rect]\ntime=0.1,0.2\nspace = 0,1 ;2, 3\n[run]\ncommand=hit\n";
        let once = render(&parse_text(text).unwrap());
        let twice = render(&parse_text(&once).unwrap());
        assert_eq!(once, twice);
        assert!(once.contains("space = 0.0, 1.0; 2.0, 3.0"));
    }

    #[test]
    fn missing_seed_is_generated_and_embedded() {
        let mut map = parse_text(&BASE.replace("master_seed = 7\n", "")).unwrap();
        let seed = ensure_seed(&mut map).unwrap();
        let cfg = ExperimentConfig::from_values(map).unwrap();
        assert_eq!(cfg.master_seed, seed);
        assert!(cfg.to_text().contains(&format!("master_seed = {seed}")));
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut map = parse_text(BASE).unwrap();
        apply_overrides(&mut map, &["model.beta=0.25".into(), "run.replicas=10".into()]).unwrap();
        let cfg = ExperimentConfig::from_values(map).unwrap();
        assert_eq!(cfg.params().unwrap().beta, 0.25);
        assert_eq!(cfg.replicas, 10);
    }
}
