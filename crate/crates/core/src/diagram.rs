//! Domain geometry, diagrams and their moments.
//!
//! A diagram `ψ(θ, φ)` is the angular factor of a homogeneous estimator
//! `ê_λ = R^λ ψ(Θ, Φ)`. Its mean and second moment are
//! `ℳ = ∫∫ ψ g_λ cos θ dθ dφ` and `𝒩 = ∫∫ ψ² g_{2λ} cos θ dθ dφ` over `S_κ`.
//! The most efficient unbiased diagram is `(g_λ / g_{2λ}) / ℰ_λ` with
//! `ℰ_λ = ∫∫ g_λ² / g_{2λ} cos θ dθ dφ`, and its variance is `1/ℰ_λ − 1`.
//!
//! Everything is integrated with [`SkappaRule`], a tensor Gauss–Legendre
//! rule in `(φ, s)` where `s ∈ [0, 1]` is the position of `θ` inside its
//! `φ`-slice, graded towards all four edges.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::estimators::{Design, EfficiencyReport};
use crate::quad::composite_rule;
use crate::specialfn::SeriesPolicy;
use crate::stochastic::OhlcSample;
use crate::weights::{weight, CacheKey, WeightCache, WeightField};
use crate::{Error, Result};

/// Slack allowed on the θ-limits of the domain.
pub const DOMAIN_TOL: f64 = 1e-12;

/// Geographic coordinates of an OHLC triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

/// `(R, Θ, Φ)` with `Θ = atan(C/√(H²+L²))` and `Φ = atan(L/H)`.
pub fn to_spherical(s: &OhlcSample) -> Result<SphericalPoint> {
    let rho = s.h.hypot(s.l);
    let r = rho.hypot(s.c);
    if r == 0.0 {
        return Err(Error::DegenerateSample("high, low and close are all zero".into()));
    }
    let theta = s.c.atan2(rho);
    let phi = if s.h == 0.0 && s.l == 0.0 {
        // Range-free sample: the azimuth is undefined; pick the φ → 0 edge.
        -0.0
    } else {
        s.l.atan2(s.h)
    };
    Ok(SphericalPoint { r, theta, phi })
}

/// Inverse of [`to_spherical`].
pub fn to_cartesian(p: &SphericalPoint, kappa: f64) -> OhlcSample {
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    OhlcSample {
        h: p.r * ct * cp,
        l: p.r * ct * sp,
        c: p.r * st,
        kappa,
    }
}

/// The admissible `(θ, φ)` region for bridge coefficient `κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSkappa {
    pub kappa: f64,
}

impl DomainSkappa {
    pub fn new(kappa: f64) -> Result<Self> {
        crate::density::check_kappa(kappa)?;
        Ok(DomainSkappa { kappa })
    }

    /// `θ`-limits `atan(sin φ/(1−κ)) ≤ θ ≤ atan(cos φ/(1−κ))`.
    pub fn theta_bounds(&self, phi: f64) -> (f64, f64) {
        let q = 1.0 - self.kappa;
        if q <= 0.0 {
            return (-FRAC_PI_2, FRAC_PI_2);
        }
        (phi.sin().atan2(q), phi.cos().atan2(q))
    }

    /// Names the violated constraint, if any.
    pub fn check(&self, theta: f64, phi: f64) -> Result<()> {
        if !(-FRAC_PI_2 - DOMAIN_TOL..=0.0).contains(&phi) {
            return Err(Error::Domain(format!("phi = {phi} outside [-pi/2, 0)")));
        }
        let (lo, hi) = self.theta_bounds(phi);
        if theta < lo - DOMAIN_TOL {
            return Err(Error::Domain(format!(
                "theta = {theta} below atan(sin(phi)/(1-kappa)) = {lo}"
            )));
        }
        if theta > hi + DOMAIN_TOL {
            return Err(Error::Domain(format!(
                "theta = {theta} above atan(cos(phi)/(1-kappa)) = {hi}"
            )));
        }
        Ok(())
    }

    pub fn contains(&self, theta: f64, phi: f64) -> bool {
        self.check(theta, phi).is_ok()
    }

    /// Maps normalized coordinates `(φ, s)`, `s ∈ [0, 1]`, to `θ`.
    pub fn theta_at(&self, phi: f64, s: f64) -> f64 {
        let (lo, hi) = self.theta_bounds(phi);
        lo + s * (hi - lo)
    }

    /// Normalized position `s` of `θ` within its `φ`-slice.
    pub fn s_of(&self, theta: f64, phi: f64) -> f64 {
        let (lo, hi) = self.theta_bounds(phi);
        if hi <= lo {
            return 0.5;
        }
        ((theta - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

/// Default resolution of tabulated diagrams, per axis.
pub const DEFAULT_GRID: usize = 200;
/// Panel breaks of the integration rule on `[0, 1]`, in both `φ` and `s`.
pub const PANEL_BREAKS: [f64; 9] = [0.0, 0.02, 0.1, 0.3, 0.5, 0.7, 0.9, 0.98, 1.0];
/// Default Gauss–Legendre points per panel.
pub const POINTS_PER_PANEL: usize = 12;
/// Largest share of the domain measure on which `ψ_GK` may be clamped.
pub const MAX_CLAMPED_FRACTION: f64 = 1e-3;

/// Garman–Klass constants.
pub const GK_K1: f64 = 0.511;
pub const GK_K2: f64 = 0.019;
pub const GK_K3: f64 = 0.383;

/// `u ∈ [0, 1]` to `φ = −u π/2`, the longitude used by tabulated diagrams.
pub fn phi_of_u(u: f64) -> f64 {
    -FRAC_PI_2 * u
}

/// Inverse of [`phi_of_u`], clamped to `[0, 1]`.
pub fn u_of_phi(phi: f64) -> f64 {
    (-phi / FRAC_PI_2).clamp(0.0, 1.0)
}

/// One node of [`SkappaRule`]; `weight` includes the `cos θ` measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleNode {
    pub theta: f64,
    pub phi: f64,
    pub weight: f64,
}

/// Tensor-product rule for `∫∫_{S_κ} f(θ, φ) cos θ dθ dφ`.
#[derive(Debug, Clone)]
pub struct SkappaRule {
    pub kappa: f64,
    pub points_per_panel: usize,
    pub nodes: Vec<RuleNode>,
}

impl SkappaRule {
    pub fn new(kappa: f64, points_per_panel: usize) -> Result<Self> {
        let dom = DomainSkappa::new(kappa)?;
        if points_per_panel == 0 {
            return Err(Error::InvalidParameter("points per panel must be positive".into()));
        }
        let (x, w) = composite_rule(&PANEL_BREAKS, points_per_panel);
        let line: Vec<(f64, f64)> = x.into_iter().zip(w).collect();
        let mut nodes = Vec::with_capacity(line.len() * line.len());
        for &(u, wu) in &line {
            let phi = phi_of_u(u);
            let (lo, hi) = dom.theta_bounds(phi);
            for &(s, ws) in &line {
                let theta = lo + s * (hi - lo);
                nodes.push(RuleNode {
                    theta,
                    phi,
                    weight: FRAC_PI_2 * wu * (hi - lo) * ws * theta.cos(),
                });
            }
        }
        Ok(SkappaRule {
            kappa,
            points_per_panel,
            nodes,
        })
    }

    /// Identifier of the node set for weight caching.
    pub fn grid_id(&self) -> u64 {
        (1 << 32) | self.points_per_panel as u64
    }

    pub fn integrate<F: Fn(&RuleNode) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(n)).sum()
    }

    /// Measure of the domain, `∫∫ cos θ dθ dφ`.
    pub fn measure(&self) -> f64 {
        self.integrate(|_| 1.0)
    }
}

/// Cell-centred table over `(u, s) ∈ [0, 1]²` with `φ = −u π/2`, read by
/// bilinear interpolation (constant beyond the outer centres).
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub n_u: usize,
    pub n_s: usize,
    /// Row-major in `u`.
    pub values: Vec<f64>,
    /// Cells that had no usable value and were filled from neighbours.
    pub filled: usize,
}

impl GridTable {
    pub fn centre(i: usize, n: usize) -> f64 {
        (i as f64 + 0.5) / n as f64
    }

    /// Builds a table from optional cell values. Missing cells take the
    /// nearest value in their row, and empty rows copy the nearest
    /// complete row.
    pub fn from_cells(n_u: usize, n_s: usize, cells: Vec<Option<f64>>) -> Result<Self> {
        if n_u < 2 || n_s < 2 || cells.len() != n_u * n_s {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2x2 cells and {} values, got {}",
                n_u * n_s,
                cells.len()
            )));
        }
        let mut filled = 0;
        let mut rows: Vec<Option<Vec<f64>>> = Vec::with_capacity(n_u);
        for row in cells.chunks(n_s) {
            let known: Vec<usize> = (0..n_s).filter(|&j| row[j].is_some()).collect();
            if known.is_empty() {
                rows.push(None);
                continue;
            }
            let mut out = Vec::with_capacity(n_s);
            for (j, v) in row.iter().enumerate() {
                match v {
                    Some(x) => out.push(*x),
                    None => {
                        let k = *known.iter().min_by_key(|&&k| k.abs_diff(j)).expect("non-empty");
                        out.push(row[k].expect("known cell"));
                        filled += 1;
                    }
                }
            }
            rows.push(Some(out));
        }
        let full: Vec<usize> = (0..n_u).filter(|&i| rows[i].is_some()).collect();
        if full.is_empty() {
            return Err(Error::Domain("grid has no usable cell".into()));
        }
        let mut values = Vec::with_capacity(n_u * n_s);
        for i in 0..n_u {
            match &rows[i] {
                Some(r) => values.extend_from_slice(r),
                None => {
                    let k = *full.iter().min_by_key(|&&k| k.abs_diff(i)).expect("non-empty");
                    values.extend_from_slice(rows[k].as_ref().expect("full row"));
                    filled += n_s;
                }
            }
        }
        Ok(GridTable {
            n_u,
            n_s,
            values,
            filled,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_s + j]
    }

    pub fn eval(&self, u: f64, s: f64) -> f64 {
        let locate = |x: f64, n: usize| -> (usize, f64) {
            let t = (x * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (t.floor() as usize).min(n - 2);
            (i, t - i as f64)
        };
        let (i, fu) = locate(u, self.n_u);
        let (j, fs) = locate(s, self.n_s);
        let a = self.get(i, j) * (1.0 - fs) + self.get(i, j + 1) * fs;
        let b = self.get(i + 1, j) * (1.0 - fs) + self.get(i + 1, j + 1) * fs;
        a * (1.0 - fu) + b * fu
    }
}

/// Which estimator a diagram belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagramKind {
    MostEfficient,
    GarmanKlass,
    Parkinson,
    CustomGrid,
}

impl DiagramKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagramKind::MostEfficient => "most_efficient",
            DiagramKind::GarmanKlass => "garman_klass",
            DiagramKind::Parkinson => "parkinson",
            DiagramKind::CustomGrid => "custom_grid",
        }
    }
}

impl std::str::FromStr for DiagramKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "most_efficient" => Ok(DiagramKind::MostEfficient),
            "garman_klass" => Ok(DiagramKind::GarmanKlass),
            "parkinson" => Ok(DiagramKind::Parkinson),
            "custom_grid" => Ok(DiagramKind::CustomGrid),
            other => Err(Error::Parse(format!("unknown diagram kind {other:?}"))),
        }
    }
}

/// Closed-form or tabulated values of `ψ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// `ψ = shape^{λ/2} / normalizer` with the shape given by the kind.
    Analytic,
    /// Normalized `ψ` values.
    Grid(GridTable),
}

/// `ψ_GK(θ, φ)`: the bridge Garman–Klass quadratic form on the unit sphere.
pub fn gk_shape(theta: f64, phi: f64, kappa: f64) -> f64 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (h, l, c) = (ct * cp, ct * sp, (1.0 - kappa) * st);
    GK_K1 * (h - l) * (h - l) - GK_K2 * (c * (h + l) - 2.0 * h * l) - GK_K3 * c * c
}

/// `ψ_P(θ, φ) = cos²θ (1 − sin 2φ) / (4 ln 2)`.
pub fn parkinson_shape(theta: f64, phi: f64) -> f64 {
    let ct = theta.cos();
    ct * ct * (1.0 - (2.0 * phi).sin()) / (4.0 * std::f64::consts::LN_2)
}

/// `x^{λ/2}`, clamping negative `x` at zero unless `λ/2` is an integer.
fn half_power(x: f64, lambda: f64) -> f64 {
    let p = lambda / 2.0;
    if p == p.round() && p.abs() < 64.0 {
        x.powi(p as i32)
    } else {
        x.max(0.0).powf(p)
    }
}

/// Angular factor `ψ_λ` of a canonical estimator on `S_κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagram {
    pub lambda: f64,
    pub kappa: f64,
    pub gamma0: f64,
    pub kind: DiagramKind,
    pub payload: Payload,
    /// `ℳ` of the raw shape for analytic kinds, `ℰ` for tabulated ones.
    pub normalizer: f64,
    /// Share of the domain measure where a negative shape was clamped.
    pub clamped_fraction: f64,
}

const CSV_MAGIC: &str = "# bridgevol diagram v1";

impl Diagram {
    pub fn domain(&self) -> DomainSkappa {
        DomainSkappa { kappa: self.kappa }
    }

    /// `ψ(θ, φ)`, rejecting points outside `S_κ`.
    pub fn psi(&self, theta: f64, phi: f64) -> Result<f64> {
        self.domain().check(theta, phi)?;
        Ok(self.psi_unchecked(theta, phi))
    }

    pub(crate) fn psi_unchecked(&self, theta: f64, phi: f64) -> f64 {
        match &self.payload {
            Payload::Analytic => {
                let shape = match self.kind {
                    DiagramKind::Parkinson => parkinson_shape(theta, phi),
                    _ => gk_shape(theta, phi, self.kappa),
                };
                half_power(shape, self.lambda) / self.normalizer
            }
            Payload::Grid(t) => t.eval(u_of_phi(phi), self.domain().s_of(theta, phi)),
        }
    }

    /// Writes metadata lines followed by `u_index,s_index,psi` rows.
    /// Decimals carry 17 significant digits, so reading back is exact.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidParameter(format!("write failed: {e}"));
        let (n_u, n_s) = match &self.payload {
            Payload::Grid(t) => (t.n_u, t.n_s),
            Payload::Analytic => (0, 0),
        };
        writeln!(out, "{CSV_MAGIC}").map_err(io)?;
        for (k, v) in [
            ("lambda", self.lambda),
            ("kappa", self.kappa),
            ("gamma0", self.gamma0),
            ("normalizer", self.normalizer),
            ("clamped_fraction", self.clamped_fraction),
        ] {
            writeln!(out, "# {k}={v:.16e}").map_err(io)?;
        }
        writeln!(out, "# kind={}", self.kind.as_str()).map_err(io)?;
        writeln!(out, "# n_u={n_u}").map_err(io)?;
        writeln!(out, "# n_s={n_s}").map_err(io)?;
        writeln!(out, "u_index,s_index,psi").map_err(io)?;
        if let Payload::Grid(t) = &self.payload {
            for i in 0..t.n_u {
                for j in 0..t.n_s {
                    writeln!(out, "{i},{j},{:.16e}", t.get(i, j)).map_err(io)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let bad = |m: String| Error::Parse(m);
        let mut meta = HashMap::new();
        let mut lines = input.lines();
        let first = lines.next().transpose().map_err(|e| bad(e.to_string()))?;
        if first.as_deref() != Some(CSV_MAGIC) {
            return Err(bad("missing diagram header".into()));
        }
        let mut rows = Vec::new();
        let mut header_seen = false;
        for line in lines {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if let Some(kv) = line.strip_prefix("# ") {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| bad(format!("bad metadata {line:?}")))?;
                meta.insert(k.to_string(), v.to_string());
            } else if !header_seen {
                if line != "u_index,s_index,psi" {
                    return Err(bad(format!("unexpected column header {line:?}")));
                }
                header_seen = true;
            } else if !line.is_empty() {
                rows.push(line);
            }
        }
        let get = |k: &str| meta.get(k).ok_or_else(|| bad(format!("missing metadata {k}")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(format!("bad number for {k}"))) };
        let int = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(format!("bad count for {k}"))) };
        let kind: DiagramKind = get("kind")?.parse()?;
        let (n_u, n_s) = (int("n_u")?, int("n_s")?);
        let payload = if n_u == 0 {
            if !matches!(kind, DiagramKind::GarmanKlass | DiagramKind::Parkinson) {
                return Err(bad(format!("{} diagram needs a table", kind.as_str())));
            }
            Payload::Analytic
        } else {
            if rows.len() != n_u * n_s {
                return Err(bad(format!("expected {} rows, found {}", n_u * n_s, rows.len())));
            }
            let mut values = vec![0.0; n_u * n_s];
            for row in &rows {
                let f: Vec<&str> = row.split(',').collect();
                if f.len() != 3 {
                    return Err(bad(format!("bad row {row:?}")));
                }
                let i: usize = f[0].parse().map_err(|_| bad(format!("bad row {row:?}")))?;
                let j: usize = f[1].parse().map_err(|_| bad(format!("bad row {row:?}")))?;
                let v: f64 = f[2].parse().map_err(|_| bad(format!("bad row {row:?}")))?;
                if i >= n_u || j >= n_s {
                    return Err(bad(format!("index out of range in {row:?}")));
                }
                values[i * n_s + j] = v;
            }
            Payload::Grid(GridTable {
                n_u,
                n_s,
                values,
                filled: 0,
            })
        };
        let d = Diagram {
            lambda: num("lambda")?,
            kappa: num("kappa")?,
            gamma0: num("gamma0")?,
            kind,
            payload,
            normalizer: num("normalizer")?,
            clamped_fraction: num("clamped_fraction")?,
        };
        crate::density::check_kappa(d.kappa)?;
        Ok(d)
    }
}

/// Builds diagrams and evaluates their moments, memoizing weight fields.
#[derive(Debug)]
pub struct DiagramEngine {
    pub grid: usize,
    pub points_per_panel: usize,
    pub series: SeriesPolicy,
    cache: WeightCache,
}

impl Default for DiagramEngine {
    fn default() -> Self {
        DiagramEngine {
            grid: DEFAULT_GRID,
            points_per_panel: POINTS_PER_PANEL,
            series: SeriesPolicy::default(),
            cache: WeightCache::new(),
        }
    }
}

impl DiagramEngine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_grid(mut self, n: usize) -> Self {
        self.grid = n;
        self
    }

    pub fn with_points_per_panel(mut self, n: usize) -> Self {
        self.points_per_panel = n;
        self
    }

    pub fn rule(&self, kappa: f64) -> Result<SkappaRule> {
        SkappaRule::new(kappa, self.points_per_panel)
    }

    fn field(&self, lambda: f64, kappa: f64, gamma: f64) -> Result<WeightField> {
        let mut f = WeightField::new(lambda, kappa, gamma)?;
        f.series = self.series;
        Ok(f)
    }

    fn weights_at(&self, field: &WeightField, grid_id: u64, points: &[(f64, f64)]) -> Result<Arc<Vec<f64>>> {
        self.cache.get_or_compute(CacheKey::new(field, grid_id), || {
            points.par_iter().map(|&(t, p)| weight(t, p, field)).collect()
        })
    }

    /// `g_λ(·; κ, γ)` at the nodes of `rule`.
    pub fn node_weights(&self, rule: &SkappaRule, lambda: f64, gamma: f64) -> Result<Arc<Vec<f64>>> {
        let field = self.field(lambda, rule.kappa, gamma)?;
        let pts: Vec<(f64, f64)> = rule.nodes.iter().map(|n| (n.theta, n.phi)).collect();
        self.weights_at(&field, rule.grid_id(), &pts)
    }

    /// `ℰ_λ(κ, γ₀)`.
    pub fn efficiency(&self, lambda: f64, kappa: f64, gamma0: f64) -> Result<f64> {
        let rule = self.rule(kappa)?;
        let g1 = self.node_weights(&rule, lambda, gamma0)?;
        let g2 = self.node_weights(&rule, 2.0 * lambda, gamma0)?;
        let e: f64 = rule
            .nodes
            .iter()
            .zip(g1.iter().zip(g2.iter()))
            .map(|(n, (&a, &b))| if b > 0.0 { n.weight * a * a / b } else { 0.0 })
            .sum();
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::Quadrature(format!("efficiency functional is {e}")));
        }
        Ok(e)
    }

    /// `ψ_me = (g_λ / g_{2λ}) / ℰ_λ` tabulated on the engine grid.
    pub fn build_most_efficient(&self, lambda: f64, kappa: f64, gamma0: f64) -> Result<Diagram> {
        let eff = self.efficiency(lambda, kappa, gamma0)?;
        let n = self.grid;
        if n < 2 {
            return Err(Error::InvalidParameter(format!("grid resolution {n} below 2")));
        }
        let dom = DomainSkappa::new(kappa)?;
        let mut pts = Vec::with_capacity(n * n);
        for i in 0..n {
            let phi = phi_of_u(GridTable::centre(i, n));
            for j in 0..n {
                pts.push((dom.theta_at(phi, GridTable::centre(j, n)), phi));
            }
        }
        let grid_id = (2 << 32) | n as u64;
        let g1 = self.weights_at(&self.field(lambda, kappa, gamma0)?, grid_id, &pts)?;
        let g2 = self.weights_at(&self.field(2.0 * lambda, kappa, gamma0)?, grid_id, &pts)?;
        let cells = g1
            .iter()
            .zip(g2.iter())
            .map(|(&a, &b)| {
                let r = a / b / eff;
                (b > 0.0 && r.is_finite()).then_some(r)
            })
            .collect();
        Ok(Diagram {
            lambda,
            kappa,
            gamma0,
            kind: DiagramKind::MostEfficient,
            payload: Payload::Grid(GridTable::from_cells(n, n, cells)?),
            normalizer: eff,
            clamped_fraction: 0.0,
        })
    }

    fn build_analytic(&self, kind: DiagramKind, lambda: f64, kappa: f64) -> Result<Diagram> {
        let rule = self.rule(kappa)?;
        let g = self.node_weights(&rule, lambda, 0.0)?;
        let shape = |n: &RuleNode| match kind {
            DiagramKind::Parkinson => parkinson_shape(n.theta, n.phi),
            _ => gk_shape(n.theta, n.phi, kappa),
        };
        let p = lambda / 2.0;
        let clamped = if p == p.round() {
            0.0
        } else {
            rule.integrate(|n| if shape(n) < 0.0 { 1.0 } else { 0.0 }) / rule.measure()
        };
        if clamped > MAX_CLAMPED_FRACTION {
            return Err(Error::Domain(format!(
                "{} shape is negative on {clamped:e} of the domain, above {MAX_CLAMPED_FRACTION:e}",
                kind.as_str()
            )));
        }
        let m: f64 = rule
            .nodes
            .iter()
            .zip(g.iter())
            .map(|(n, &w)| n.weight * half_power(shape(n), lambda) * w)
            .sum();
        if !(m > 0.0) {
            return Err(Error::Quadrature(format!("{} normalizer is {m}", kind.as_str())));
        }
        Ok(Diagram {
            lambda,
            kappa,
            gamma0: 0.0,
            kind,
            payload: Payload::Analytic,
            normalizer: m,
            clamped_fraction: clamped,
        })
    }

    /// `ψ_GK^{λ/2} / ℳ_{GK,λ}(κ)`, normalized at zero drift.
    pub fn build_garman_klass(&self, lambda: f64, kappa: f64) -> Result<Diagram> {
        self.build_analytic(DiagramKind::GarmanKlass, lambda, kappa)
    }

    /// `ψ_P^{λ/2} / ℳ_{P,λ}(κ)`, normalized at zero drift.
    pub fn build_parkinson(&self, lambda: f64, kappa: f64) -> Result<Diagram> {
        self.build_analytic(DiagramKind::Parkinson, lambda, kappa)
    }

    /// Mean `∫∫ ψ g_λ` and second moment `∫∫ ψ² g_{2λ}` of an arbitrary
    /// diagram function at drift `γ`.
    pub fn raw_moments<F>(&self, lambda: f64, kappa: f64, gamma: f64, psi: F) -> Result<(f64, f64)>
    where
        F: Fn(f64, f64) -> f64,
    {
        let rule = self.rule(kappa)?;
        let g1 = self.node_weights(&rule, lambda, gamma)?;
        let g2 = self.node_weights(&rule, 2.0 * lambda, gamma)?;
        let (mut m, mut n2) = (0.0, 0.0);
        for (k, node) in rule.nodes.iter().enumerate() {
            let v = psi(node.theta, node.phi);
            m += node.weight * v * g1[k];
            n2 += node.weight * v * v * g2[k];
        }
        Ok((m, n2))
    }

    /// Expected value and variance of `ê = R^λ ψ` at drift `γ`.
    pub fn moments(&self, diagram: &Diagram, gamma: f64) -> Result<EfficiencyReport> {
        let (mean, second) =
            self.raw_moments(diagram.lambda, diagram.kappa, gamma, |t, p| diagram.psi_unchecked(t, p))?;
        Ok(EfficiencyReport {
            mean,
            variance: (second - mean * mean).max(0.0),
            n: 0,
            standard_error: 0.0,
            design: Design {
                lambda: diagram.lambda,
                kappa: diagram.kappa,
                gamma0: diagram.gamma0,
            },
        })
    }
}
