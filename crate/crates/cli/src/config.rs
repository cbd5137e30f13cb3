//! Run configuration: shipped defaults, overlaid by a user file, overlaid by
//! command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use bridgevol::stochastic::Ticks;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::fail::Failure;

/// Defaults compiled into the binary.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

/// Tick count written as a positive integer or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickCount(pub Ticks);

impl Serialize for TickCount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Ticks::Finite(k) => s.serialize_u64(k as u64),
            Ticks::Continuous => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for TickCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(k) if k >= 1 => Ok(TickCount(Ticks::Finite(k as usize))),
            Raw::Int(k) => Err(serde::de::Error::custom(format!(
                "tick count must be at least 1, got {k}"
            ))),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for TickCount {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(TickCount(Ticks::Continuous));
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(TickCount(Ticks::Finite(k))),
            _ => Err(format!("tick count must be a positive integer or \"inf\", got {s:?}")),
        }
    }
}

impl fmt::Display for TickCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Estimator names used in configs and CSV headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Most-efficient diagram.
    Me,
    /// Garman–Klass.
    Gk,
    /// Parkinson.
    Park,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Me => "me",
            Estimator::Gk => "gk",
            Estimator::Park => "park",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "me" => Ok(Estimator::Me),
            "gk" => Ok(Estimator::Gk),
            "park" => Ok(Estimator::Park),
            other => Err(format!("unknown estimator {other:?} (expected me, gk or park)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_terms: usize,
    pub points_per_panel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Curves {
    pub kappa: Vec<f64>,
    pub monotone_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePanel {
    pub kappa: f64,
    pub n: usize,
    pub ticks: TickCount,
    pub estimators: Vec<Estimator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Estimate {
    pub kappa: f64,
    pub estimator: Estimator,
    pub input: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1 {
    pub ticks: Vec<TickCount>,
    pub m: usize,
    pub n: usize,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramDump {
    pub kappa: f64,
    pub estimator: Estimator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Simulate {
    pub n: usize,
    pub ticks: TickCount,
    pub sigma: f64,
    pub horizon: f64,
    pub start_price: f64,
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub seed: u64,
    pub grid: usize,
    pub out: PathBuf,
    pub threads: usize,
    pub numerics: Numerics,
    pub curves: Curves,
    pub sample_panel: SamplePanel,
    pub estimate: Estimate,
    pub table1: Table1,
    pub diagram_dump: DiagramDump,
    pub simulate: Simulate,
}

/// Values given on the command line; `None` leaves the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub kappa: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    pub ticks: Option<Vec<TickCount>>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub grid: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub estimator: Option<Vec<Estimator>>,
    pub input: Option<PathBuf>,
}

/// Commands, as far as configuration is concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    VarianceCurve,
    BiasCurve,
    SamplePanel,
    Estimate,
    Table1,
    DiagramDump,
    Simulate,
}

/// Recursively overlays `top` onto `base`.
fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Reads a TOML config, or the `config` object of a JSON sidecar.
fn read_user_file(path: &Path) -> Result<toml::Value, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let inner = json
            .get("config")
            .cloned()
            .ok_or_else(|| Failure::config(format!("{}: sidecar has no \"config\" object", path.display())))?;
        return toml::Value::try_from(inner).map_err(|e| Failure::config(format!("{}: {e}", path.display())));
    }
    text.parse::<toml::Table>()
        .map(toml::Value::Table)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Defaults, then `file`, then `flags`.
    pub fn resolve(file: Option<&Path>, flags: &Overrides, section: Section) -> Result<RunConfig, Failure> {
        let mut doc: toml::Value = toml::Value::Table(DEFAULT_CONFIG.parse().expect("shipped config parses"));
        if let Some(path) = file {
            merge(&mut doc, read_user_file(path)?);
        }
        let mut cfg: RunConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| Failure::config(format!("invalid configuration: {}", e.message())))?;
        cfg.apply(flags, section)?;
        cfg.validate(section)?;
        Ok(cfg)
    }

    fn apply(&mut self, f: &Overrides, section: Section) -> Result<(), Failure> {
        if let Some(v) = f.lambda {
            self.lambda = v;
        }
        if let Some(v) = f.gamma {
            self.gamma = v;
        }
        if let Some(v) = f.grid {
            self.grid = v;
        }
        if let Some(v) = f.seed {
            self.seed = v;
        }
        if let Some(v) = &f.out {
            self.out = v.clone();
        }
        if let Some(v) = f.threads {
            self.threads = v;
        }
        let one = |name: &str, v: &[f64]| -> Result<f64, Failure> {
            match v {
                [x] => Ok(*x),
                _ => Err(Failure::config(format!(
                    "--{name} takes a single value for this command"
                ))),
            }
        };
        let one_tick = |v: &[TickCount]| -> Result<TickCount, Failure> {
            match v {
                [x] => Ok(*x),
                _ => Err(Failure::config("--K takes a single value for this command")),
            }
        };
        let one_est = |v: &[Estimator]| -> Result<Estimator, Failure> {
            match v {
                [x] => Ok(*x),
                _ => Err(Failure::config("--estimator takes a single value for this command")),
            }
        };
        let unused = |name: &str, given: bool| -> Result<(), Failure> {
            if given {
                Err(Failure::config(format!("--{name} does not apply to this command")))
            } else {
                Ok(())
            }
        };
        match section {
            Section::VarianceCurve | Section::BiasCurve => {
                if let Some(v) = &f.kappa {
                    self.curves.kappa = v.clone();
                }
                unused("K", f.ticks.is_some())?;
                unused("M", f.m.is_some())?;
                unused("N", f.n.is_some())?;
                unused("input", f.input.is_some())?;
                unused("estimator", f.estimator.is_some())?;
            }
            Section::SamplePanel => {
                if let Some(v) = &f.kappa {
                    self.sample_panel.kappa = one("kappa", v)?;
                }
                if let Some(v) = &f.ticks {
                    self.sample_panel.ticks = one_tick(v)?;
                }
                if let Some(v) = f.n {
                    self.sample_panel.n = v;
                }
                if let Some(v) = &f.estimator {
                    self.sample_panel.estimators = v.clone();
                }
                unused("M", f.m.is_some())?;
                unused("input", f.input.is_some())?;
            }
            Section::Estimate => {
                if let Some(v) = &f.kappa {
                    self.estimate.kappa = one("kappa", v)?;
                }
                if let Some(v) = &f.estimator {
                    self.estimate.estimator = one_est(v)?;
                }
                if let Some(v) = &f.input {
                    self.estimate.input = v.clone();
                }
                unused("K", f.ticks.is_some())?;
                unused("M", f.m.is_some())?;
                unused("N", f.n.is_some())?;
            }
            Section::Table1 => {
                if let Some(v) = &f.ticks {
                    self.table1.ticks = v.clone();
                }
                if let Some(v) = f.m {
                    self.table1.m = v;
                }
                if let Some(v) = f.n {
                    self.table1.n = v;
                }
                unused("kappa", f.kappa.is_some())?;
                unused("input", f.input.is_some())?;
                unused("estimator", f.estimator.is_some())?;
            }
            Section::DiagramDump => {
                if let Some(v) = &f.kappa {
                    self.diagram_dump.kappa = one("kappa", v)?;
                }
                if let Some(v) = &f.estimator {
                    self.diagram_dump.estimator = one_est(v)?;
                }
                unused("K", f.ticks.is_some())?;
                unused("M", f.m.is_some())?;
                unused("N", f.n.is_some())?;
                unused("input", f.input.is_some())?;
            }
            Section::Simulate => {
                if let Some(v) = &f.ticks {
                    self.simulate.ticks = one_tick(v)?;
                }
                if let Some(v) = f.n {
                    self.simulate.n = v;
                }
                unused("kappa", f.kappa.is_some())?;
                unused("M", f.m.is_some())?;
                unused("input", f.input.is_some())?;
                unused("estimator", f.estimator.is_some())?;
            }
        }
        Ok(())
    }

    fn validate(&self, section: Section) -> Result<(), Failure> {
        let kappa_ok = |k: f64| (0.0..=1.0).contains(&k);
        let bad = |msg: String| Err(Failure::config(msg));
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !self.gamma.is_finite() {
            return bad(format!("gamma must be finite, got {}", self.gamma));
        }
        if self.grid < 2 {
            return bad(format!("grid must be at least 2, got {}", self.grid));
        }
        let n = &self.numerics;
        if !(n.abs_tol > 0.0) || !(n.rel_tol > 0.0) || n.max_terms == 0 || n.points_per_panel == 0 {
            return bad("numerics: tolerances, max_terms and points_per_panel must be positive".into());
        }
        match section {
            Section::VarianceCurve | Section::BiasCurve => {
                if self.curves.kappa.is_empty() {
                    return bad("kappa grid is empty".into());
                }
                if let Some(k) = self.curves.kappa.iter().find(|&&k| !kappa_ok(k)) {
                    return bad(format!("kappa grid value {k} outside [0, 1]"));
                }
            }
            Section::SamplePanel => {
                let p = &self.sample_panel;
                if !kappa_ok(p.kappa) {
                    return bad(format!("kappa {} outside [0, 1]", p.kappa));
                }
                if p.n == 0 {
                    return bad("sample panel size N must be at least 1".into());
                }
                if p.estimators.is_empty() {
                    return bad("no estimators selected".into());
                }
            }
            Section::Estimate => {
                if !kappa_ok(self.estimate.kappa) {
                    return bad(format!("kappa {} outside [0, 1]", self.estimate.kappa));
                }
                if self.estimate.input.as_os_str().is_empty() {
                    return bad("estimate needs an input file (--input or estimate.input)".into());
                }
            }
            Section::Table1 => {
                if self.table1.ticks.is_empty() {
                    return bad("table1 tick list is empty".into());
                }
            }
            Section::DiagramDump => {
                if !kappa_ok(self.diagram_dump.kappa) {
                    return bad(format!("kappa {} outside [0, 1]", self.diagram_dump.kappa));
                }
            }
            Section::Simulate => {
                let s = &self.simulate;
                if s.n == 0 {
                    return bad("simulate needs at least one interval".into());
                }
                if !(s.sigma > 0.0) || !(s.horizon > 0.0) || !(s.start_price > 0.0) {
                    return bad("sigma, horizon and start_price must be positive".into());
                }
            }
        }
        Ok(())
    }
}
