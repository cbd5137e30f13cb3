//! The weight field `g_λ(θ, φ; κ, γ) = ∫₀^∞ ρ^{λ+2} Q(ρh̃, ρl̃, ρc̃) dρ`.
//!
//! Series routes sum `Σ_m m[m I_λ(mΔ̃, c̃) + (1−m) I_λ(mΔ̃+l̃, c̃)]` with
//! `I_λ` either in closed form (`γ = 0`) or as a four-term Kummer
//! combination. The terms decay only like `|m|^{−(2+λ)}`, so the head
//! `|m| ≤ N` is summed directly. Beyond `N ≥ 16|c̃|/Δ̃` the paired term
//! `T(m) + T(−m)` is expanded in powers of `1/m` and each power is summed
//! exactly with a Hurwitz zeta.
//!
//! Near the θ-edges of `S_κ`, where `Δ̃ = h̃ − l̃` is small against `|c̃|`,
//! the field is of order `e^{−π|c̃|/Δ̃}` while the terms are of order one.
//! Head and tail are then recomputed in double-double (integer λ only); if
//! that is still not enough the series routes report
//! [`Error::IllConditioned`] and [`WeightMode::Auto`] switches to the radial
//! quadrature.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, RwLock};

use crate::density::{joint_pdf, DensityParams};
use crate::diagram::DomainSkappa;
use crate::quad::{integrate_to_infinity, QuadTolerance};
use crate::specialfn::{
    hurwitz_zeta, kummer_m, kummer_series, DoubleDouble, PowerSeries, Real, SeriesPolicy, FRAC_1_SQRT_2PI,
};
use crate::{Error, Result};

/// How `g_λ` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightMode {
    /// Series with the `γ = 0` closed form of `I_λ`.
    ClosedFormGamma0,
    /// Series with the Kummer-function form of `I_λ`.
    KummerSeries,
    /// Adaptive radial quadrature of `ρ^{λ+2} Q`.
    QuadratureOracle,
    /// Series route, falling back to quadrature where the series is
    /// ill-conditioned.
    Auto,
}

/// Relative accuracy requested from the radial quadrature.
pub const ORACLE_REL_TOL: f64 = 1e-10;
/// Largest acceptable estimated relative error of a series evaluation.
pub const SERIES_TARGET: f64 = 1e-9;
/// Exponent beyond which the field underflows to zero.
const UNDERFLOW_EXPONENT: f64 = 800.0;
/// Largest head-plus-tail cancellation accepted in `f64`. Each term
/// carries its own cancellation inside `I_λ`, so this is stricter than the
/// generic limit.
const F64_CANCELLATION: f64 = 1e4;
/// Orders of `1/m` kept in the tail expansion.
const TAIL_ORDER: usize = 32;

/// Parameters of a weight field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightField {
    pub lambda: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub series: SeriesPolicy,
    pub mode: WeightMode,
}

impl WeightField {
    pub fn new(lambda: f64, kappa: f64, gamma: f64) -> Result<Self> {
        let f = WeightField {
            lambda,
            kappa,
            gamma,
            series: SeriesPolicy::default(),
            mode: WeightMode::Auto,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn with_mode(mut self, mode: WeightMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda + 3.0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda = {} must exceed -3 for the radial moment to exist",
                self.lambda
            )));
        }
        crate::density::check_kappa(self.kappa)?;
        if !self.gamma.is_finite() {
            return Err(Error::InvalidParameter("gamma must be finite".into()));
        }
        if self.mode == WeightMode::ClosedFormGamma0 && self.gamma != 0.0 {
            return Err(Error::InvalidParameter("closed form requires gamma = 0".into()));
        }
        self.series.validate()
    }

    fn integer_lambda(&self) -> bool {
        self.lambda == self.lambda.round() && self.lambda.abs() < 1e6
    }
}

/// Parameters of `I_λ` shared by all terms of one evaluation.
#[derive(Debug, Clone, Copy)]
struct IParams {
    lambda: f64,
    kappa: f64,
    gamma: f64,
    kummer: bool,
}

/// `I_λ(h, c; κ, γ)` in arithmetic `T`.
fn i_generic<T: Real>(h: T, c: T, p: &IParams) -> Result<T> {
    let two = T::from_f64(2.0);
    let four = T::from_f64(4.0);
    let q = T::from_f64(1.0 - p.kappa);
    let a = four * h * (h - q * c) + c * c;
    let s = two * h - q * c;
    let b = s * s;
    if !(a.to_f64() > 0.0) {
        return Err(Error::Domain(format!("I_lambda needs a > 0 (a = {:e})", a.to_f64())));
    }
    let lam = p.lambda;
    if !p.kummer {
        let num = T::from_f64(3.0 + lam) * b - a;
        return Ok(
            two.pow_real((5.0 + lam) / 2.0) * T::gamma_real((3.0 + lam) / 2.0) * num / a.pow_real((5.0 + lam) / 2.0)
        );
    }
    let d = T::from_f64(p.gamma) * c;
    let z = d * d / (two * a);
    let m = |a1: f64, b1: f64| -> Result<T> { kummer_generic::<T>(a1, b1, z) };
    let half = T::from_f64(0.5);
    let t1 = b * (two * a).sqrt() * T::gamma_real((5.0 + lam) / 2.0) * m((5.0 + lam) / 2.0, 0.5)?;
    let t2 = a * (a * half).sqrt() * T::gamma_real((3.0 + lam) / 2.0) * m((3.0 + lam) / 2.0, 0.5)?;
    let mut bracket = t1 - t2;
    if p.gamma != 0.0 {
        let t3 = two * d * b * T::gamma_real(3.0 + lam / 2.0) * m(3.0 + lam / 2.0, 1.5)?;
        let t4 = d * a * T::gamma_real(2.0 + lam / 2.0) * m(2.0 + lam / 2.0, 1.5)?;
        bracket = bracket + t3 - t4;
    }
    Ok((two / a).pow_real(3.0 + lam / 2.0) * bracket)
}

fn kummer_generic<T: Real>(a: f64, b: f64, z: T) -> Result<T> {
    let zf = z.to_f64();
    if T::EPS >= f64::EPSILON {
        return kummer_m(a, b, zf).map(T::from_f64);
    }
    // z ≥ 0 and a, b > 0 here, so every term is positive.
    let budget = 500 + 4 * zf.ceil() as usize;
    Ok(kummer_series(T::from_f64(a), T::from_f64(b), z, T::EPS, budget)?.value)
}

/// `I_λ(h, c; κ, γ)` by the Kummer-function form.
pub fn i_lambda(h: f64, c: f64, lambda: f64, kappa: f64, gamma: f64) -> Result<f64> {
    let p = IParams {
        lambda,
        kappa,
        gamma,
        kummer: true,
    };
    i_generic(h, c, &p)
}

/// `I_λ(h, c; κ, 0)` by the closed form.
pub fn i_lambda_gamma0(h: f64, c: f64, lambda: f64, kappa: f64) -> Result<f64> {
    let p = IParams {
        lambda,
        kappa,
        gamma: 0.0,
        kummer: false,
    };
    i_generic(h, c, &p)
}

/// Unit-sphere coordinates of a direction.
#[derive(Debug, Clone, Copy)]
struct Direction {
    h: f64,
    l: f64,
    c: f64,
    range: f64,
    /// `h − range` carried exactly, so that the image lattice `mΔ + l`
    /// stays consistent with `h` to double-double precision.
    l_exact: DoubleDouble,
}

impl Direction {
    fn new(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let (h, range) = (ct * cp, ct * (cp - sp));
        Direction {
            h,
            l: ct * sp,
            c: st,
            range,
            l_exact: DoubleDouble::new(h) - DoubleDouble::new(range),
        }
    }
}

/// `m [m I(mΔ) + (1−m) I(mΔ+l)]` in arithmetic `T`, with the magnitude of
/// its two pieces.
fn pair_term<T: Real>(m: f64, dir: &Direction, p: &IParams) -> Result<(T, f64)> {
    let mt = T::from_f64(m);
    let dt = T::from_f64(dir.range);
    let lt = T::from_dd(dir.l_exact);
    let ct = T::from_f64(dir.c);
    let mut t = mt * mt * i_generic(mt * dt, ct, p)?;
    let mut abs = t.to_f64().abs();
    if m != 1.0 {
        let u = mt * (T::from_f64(1.0) - mt) * i_generic(mt * dt + lt, ct, p)?;
        abs += u.to_f64().abs();
        t = t + u;
    }
    Ok((t, abs))
}

fn head_sum<T: Real>(n: usize, dir: &Direction, p: &IParams) -> Result<(T, f64)> {
    let mut sum = T::from_f64(0.0);
    let mut abs = 0.0;
    for m in 1..=n {
        let m = m as f64;
        let (up, a_up): (T, f64) = pair_term(m, dir, p)?;
        let (down, a_down): (T, f64) = pair_term(-m, dir, p)?;
        abs += a_up + a_down;
        sum = sum + up + down;
    }
    Ok((sum, abs))
}

/// Number of head terms summed explicitly.
fn head_len(dir: &Direction) -> usize {
    let n = (16.0 * dir.c.abs() / dir.range).ceil();
    if n.is_finite() {
        (n as usize).clamp(64, 1 << 20)
    } else {
        1 << 20
    }
}

/// `F(ε)` with `I(mH(ε), c) = m^{−(3+λ)} F(ε)` and `ε = 1/m`.
///
/// `I` depends on `h` only through `a` and `b`, both homogeneous of degree
/// two in `(h, c)`, so `a = m² A(ε)` and `b = m² B(ε)`.
fn i_expansion<T: Real>(hs: &PowerSeries<T>, p: &IParams, c: f64) -> Result<PowerSeries<T>> {
    let len = hs.len();
    let lam = p.lambda;
    // Parameters are formed in `T` exactly as in `i_generic`; the head and the
    // tail cancel to many digits, so they must see identical inputs.
    let (q, ct) = (T::from_f64(1.0 - p.kappa), T::from_f64(c));
    let qc = q * ct;
    let two = T::from_f64(2.0);
    let s = &hs.scale(two) - &PowerSeries::linear(T::from_f64(0.0), qc, len);
    let b = &s * &s;
    // A = (2H − qcε)² + (1 − q²) c² ε²
    let rest = PowerSeries::constant(ct * ct * (T::from_f64(1.0) - q * q), len);
    let a = &b + &rest.shift().shift();
    if !p.kummer {
        let k = two.pow_real((5.0 + lam) / 2.0) * T::gamma_real((3.0 + lam) / 2.0);
        let num = &b.scale(T::from_f64(3.0 + lam)) - &a;
        return Ok((&num * &a.pow(-(5.0 + lam) / 2.0)?).scale(k));
    }
    let d = T::from_f64(p.gamma) * ct;
    let z = a.pow(-1.0)?.shift().shift().scale(d * d / two);
    let m = |a1: f64, b1: f64| PowerSeries::kummer(a1, b1, &z);
    let root = a.pow(0.5)?;
    let sqrt2 = two.sqrt();
    let t1 = (&b * &root).scale(sqrt2 * T::gamma_real((5.0 + lam) / 2.0));
    let t1 = &t1 * &m((5.0 + lam) / 2.0, 0.5)?;
    let t2 = (&a * &root).scale(T::gamma_real((3.0 + lam) / 2.0) / sqrt2);
    let t2 = &t2 * &m((3.0 + lam) / 2.0, 0.5)?;
    let mut bracket = &t1 - &t2;
    if p.gamma != 0.0 {
        let t3 = b.shift().scale(two * d * T::gamma_real(3.0 + lam / 2.0));
        let t4 = a.shift().scale(d * T::gamma_real(2.0 + lam / 2.0));
        bracket = &(&bracket + &(&t3 * &m(3.0 + lam / 2.0, 1.5)?)) - &(&t4 * &m(2.0 + lam / 2.0, 1.5)?);
    }
    let pre = a.pow(-(3.0 + lam / 2.0))?.scale(two.pow_real(3.0 + lam / 2.0));
    Ok(&pre * &bracket)
}

/// `Σ_{m>n} [T(m) + T(−m)]` with the magnitude of its summands and a
/// truncation estimate.
fn tail_sum<T: Real>(n: usize, dir: &Direction, p: &IParams) -> Result<(T, f64, f64)> {
    let zero = T::from_f64(0.0);
    let (dt, lt) = (T::from_f64(dir.range), T::from_dd(dir.l_exact));
    let h = |lead: T, slope: T| PowerSeries::linear(lead, slope, TAIL_ORDER);
    let f1 = i_expansion(&h(dt, zero), p, dir.c)?;
    let f2 = i_expansion(&h(dt, lt), p, dir.c)?;
    let f3 = i_expansion(&h(-dt, zero), p, dir.c)?;
    let f4 = i_expansion(&h(-dt, lt), p, dir.c)?;
    // T(m) + T(−m) = m^{−(1+λ)} [F₁ + (ε−1)F₂ + F₃ − (ε+1)F₄]
    let g = &(&(&f1 + &(&f2.shift() - &f2)) + &f3) - &(&f4.shift() + &f4);
    // The order-zero coefficient cancels identically.
    let mut sum = zero;
    let mut abs = 0.0;
    // Odd orders are often zero by symmetry, so the estimate uses the
    // larger of the last two terms.
    let mut last = [0.0; 2];
    for j in 1..TAIL_ORDER {
        let s = 1.0 + p.lambda + j as f64;
        let t = g.coeffs[j] * hurwitz_zeta::<T>(s, n as f64 + 1.0)?;
        sum = sum + t;
        abs += t.to_f64().abs();
        last = [last[1], t.to_f64().abs()];
    }
    Ok((sum, abs, 4.0 * last[0].max(last[1])))
}

fn series_eval(dir: &Direction, p: &IParams, allow_dd: bool) -> Result<f64> {
    let n = head_len(dir);
    let (tail, tail_abs, trunc): (f64, f64, f64) = tail_sum(n, dir, p)?;
    let (head, abs): (f64, f64) = head_sum(n, dir, p)?;
    let total = head + tail;
    let mass = abs + tail_abs;
    let cond = mass / total.abs();
    let rel = (4.0 * f64::EPSILON * mass + trunc) / total.abs();
    if cond <= F64_CANCELLATION && rel <= SERIES_TARGET {
        return Ok(total);
    }
    if !allow_dd {
        return Err(Error::IllConditioned { condition: cond });
    }
    let (tail_dd, _, trunc): (DoubleDouble, f64, f64) = tail_sum(n, dir, p)?;
    let (head_dd, _): (DoubleDouble, f64) = head_sum(n, dir, p)?;
    let value = (head_dd + tail_dd).to_f64();
    let rel = (8.0 * DoubleDouble::EPS * mass + trunc) / value.abs();
    if !(rel <= SERIES_TARGET) || value < 0.0 {
        return Err(Error::IllConditioned {
            condition: mass / value.abs(),
        });
    }
    Ok(value)
}

/// `ρ^{λ+2} Q(ρh̃, ρl̃, ρc̃)` integrated over `ρ ∈ (0, ∞)`.
fn oracle(dir: &Direction, field: &WeightField) -> Result<f64> {
    let mut params = DensityParams::new(field.kappa, field.gamma);
    params.series = SeriesPolicy {
        abs_tol: 1e-300,
        rel_tol: 1e-15,
        max_terms: field.series.max_terms.max(200),
    };
    let tol = QuadTolerance {
        abs_tol: 1e-300,
        rel_tol: ORACLE_REL_TOL,
        max_segments: 4000,
    };
    let mut err = None;
    // Switch point of ℛ between its two series forms, plus the bulk scale.
    let switch = 1.0 / dir.range;
    let breaks = [switch, 0.5, 1.0, 2.0, 4.0];
    let r = integrate_to_infinity(
        |rho| {
            if rho <= 0.0 {
                return 0.0;
            }
            match joint_pdf(rho * dir.h, rho * dir.l, rho * dir.c, &params) {
                Ok(q) => rho.powf(field.lambda + 2.0) * q,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        },
        0.0,
        1.0,
        &breaks,
        tol,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(r.value)
}

/// `g_λ(θ, φ; κ, γ)`.
pub fn weight(theta: f64, phi: f64, field: &WeightField) -> Result<f64> {
    field.validate()?;
    DomainSkappa::new(field.kappa)?.check(theta, phi)?;
    let dir = Direction::new(theta, phi);
    if !(dir.range > 0.0) {
        return Ok(0.0);
    }
    // g ~ exp(−π|c̃|/Δ̃ + |γ| √(π|c̃|/Δ̃)); skip hopeless underflow.
    let expo = std::f64::consts::PI * dir.c.abs() / dir.range;
    if expo - field.gamma.abs() * expo.sqrt() - 50.0 > UNDERFLOW_EXPONENT {
        return Ok(0.0);
    }
    let pref = FRAC_1_SQRT_2PI * (-0.5 * field.gamma * field.gamma).exp();
    let ip = |kummer: bool| IParams {
        lambda: field.lambda,
        kappa: field.kappa,
        gamma: field.gamma,
        kummer,
    };
    let dd = field.integer_lambda();
    // The image series converges only for λ > −1.
    let series_ok = field.lambda > -1.0;
    let series = |kummer: bool| -> Result<f64> {
        if !series_ok {
            return Err(Error::InvalidParameter(format!(
                "series routes need lambda > -1 (lambda = {})",
                field.lambda
            )));
        }
        Ok(pref * series_eval(&dir, &ip(kummer), dd)?)
    };
    match field.mode {
        WeightMode::ClosedFormGamma0 => series(false),
        WeightMode::KummerSeries => series(true),
        WeightMode::QuadratureOracle => oracle(&dir, field),
        WeightMode::Auto if !series_ok => oracle(&dir, field),
        WeightMode::Auto => match series(field.gamma != 0.0) {
            Err(Error::IllConditioned { .. }) => oracle(&dir, field),
            other => other,
        },
    }
}

/// Key of a memoized weight grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey {
    lambda: u64,
    kappa: u64,
    gamma: u64,
    grid: u64,
}

impl CacheKey {
    pub fn new(field: &WeightField, grid_id: u64) -> Self {
        CacheKey {
            lambda: field.lambda.to_bits(),
            kappa: field.kappa.to_bits(),
            gamma: field.gamma.to_bits(),
            grid: grid_id,
        }
    }
}

/// Memoized weight values on quadrature grids, safe for concurrent readers.
#[derive(Debug, Default)]
pub struct WeightCache {
    map: RwLock<HashMap<CacheKey, Arc<Vec<f64>>>>,
}

impl WeightCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &CacheKey) -> Option<Arc<Vec<f64>>> {
        self.map.read().expect("weight cache poisoned").get(key).cloned()
    }

    /// Returns the cached grid or computes and inserts it. Concurrent
    /// callers may compute the same grid; the first insertion wins.
    pub fn get_or_compute<F>(&self, key: CacheKey, compute: F) -> Result<Arc<Vec<f64>>>
    where
        F: FnOnce() -> Result<Vec<f64>>,
    {
        if let Some(v) = self.get(&key) {
            return Ok(v);
        }
        let v = Arc::new(compute()?);
        let mut map = self.map.write().expect("weight cache poisoned");
        Ok(map.entry(key).or_insert(v).clone())
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("weight cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Writes `theta,phi,g` rows.
pub fn write_grid_csv<W: Write>(mut out: W, points: &[(f64, f64)], field: &WeightField) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidParameter(format!("write failed: {e}"));
    writeln!(out, "theta,phi,g").map_err(io)?;
    for &(theta, phi) in points {
        let g = weight(theta, phi, field)?;
        writeln!(out, "{theta:.17e},{phi:.17e},{g:.17e}").map_err(io)?;
    }
    Ok(())
}
