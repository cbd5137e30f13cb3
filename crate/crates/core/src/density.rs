//! Joint density of the incomplete-bridge high/low and the process close.
//!
//! Given `C = c`, the bridge `Y` is a Brownian bridge from 0 to
//! `y = (1−κ)c`, so `Q(h, ℓ, c) = g(c−γ) ℛ(h, ℓ | y)` with `ℛ` free of `γ`.
//!
//! `ℛ` is summed from the reflection (image) series when the range
//! `h − ℓ ≥ 1`. For narrower ranges that series converges slowly and
//! cancels badly, so the eigenfunction expansion of the killed heat kernel
//! is used instead, differentiated exactly with hyper-dual numbers.

use std::io::Write;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::specialfn::{gaussian_pdf, sum_bilateral, SeriesPolicy};
use crate::{Error, Result};

/// Points closer than this to the support boundary evaluate to zero.
pub const BOUNDARY_EPS: f64 = 1e-12;
/// `|1 − κ|` below this uses the complete-bridge formula.
pub const COMPLETE_BRIDGE_EPS: f64 = 1e-8;
/// Range `h − ℓ` below which the eigenfunction form is used.
const EIGEN_RANGE: f64 = 1.0;

/// Parameters of the joint density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityParams {
    pub kappa: f64,
    pub gamma: f64,
    pub series: SeriesPolicy,
}

impl DensityParams {
    pub fn new(kappa: f64, gamma: f64) -> Self {
        DensityParams {
            kappa,
            gamma,
            series: SeriesPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_kappa(self.kappa)?;
        if !self.gamma.is_finite() {
            return Err(Error::InvalidParameter("gamma must be finite".into()));
        }
        self.series.validate()
    }
}

pub(crate) fn check_kappa(kappa: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} must lie in [0, 1]")));
    }
    Ok(())
}

/// Two absorbing straight-line barriers `a + ατ` and `b + βτ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSpec {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl BarrierSpec {
    pub fn new(a: f64, b: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(a < 0.0 && 0.0 < b) {
            return Err(Error::InvalidParameter(format!(
                "barriers must bracket 0 (a = {a}, b = {b})"
            )));
        }
        Ok(BarrierSpec { a, b, alpha, beta })
    }

    /// Barriers in time-changed coordinates for the bridge event
    /// `ℓ ≤ Y(t) ≤ h` with `κ < 1`.
    pub fn from_bridge(h: f64, l: f64, kappa: f64, gamma: f64) -> Result<Self> {
        if kappa >= 1.0 {
            return Err(Error::InvalidParameter("moving barriers need kappa < 1".into()));
        }
        let q = 1.0 - kappa;
        let slope = (1.0 - q * q) / q;
        BarrierSpec::new(q * l, q * h, slope * l - gamma, slope * h - gamma)
    }
}

fn heat_kernel(w: f64, tau: f64) -> f64 {
    (-(w * w) / (2.0 * tau)).exp() / (2.0 * std::f64::consts::PI * tau).sqrt()
}

/// Density of `W(τ)` killed on the two barriers, by the image sum.
pub fn barrier_density(omega: f64, tau: f64, spec: &BarrierSpec, series: SeriesPolicy) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter("tau must be positive".into()));
    }
    let lo = spec.a + spec.alpha * tau;
    let hi = spec.b + spec.beta * tau;
    if !(omega > lo && omega < hi) {
        return Ok(0.0);
    }
    let BarrierSpec { a, b, alpha, beta } = *spec;
    let width = b - a;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * tau).sqrt();
    let sum = sum_bilateral(
        |m| {
            let m = m as f64;
            let base = 2.0 * (alpha - beta) * width * m * m + 2.0 * (alpha * b - beta * a) * m;
            let w1 = omega + 2.0 * m * width;
            let w2 = w1 - 2.0 * a;
            let e1 = base - w1 * w1 / (2.0 * tau);
            let e2 = base + 2.0 * a * (2.0 * (beta - alpha) * m - alpha) - w2 * w2 / (2.0 * tau);
            norm * (e1.exp() - e2.exp())
        },
        series,
    )?;
    Ok(sum.value)
}

/// Free heat kernel `g(ω; τ)`, the wide-barrier limit of [`barrier_density`].
pub fn free_density(omega: f64, tau: f64) -> f64 {
    heat_kernel(omega, tau)
}

/// Building block `𝒟(u, y) = 4[(y − 2u)² − 1] e^{2u(y − u)}`.
#[inline]
pub fn kernel_d(u: f64, y: f64) -> f64 {
    let s = y - 2.0 * u;
    4.0 * (s * s - 1.0) * (2.0 * u * (y - u)).exp()
}

/// Where a point sits relative to the support of `Q`.
fn in_support(h: f64, l: f64, y: f64) -> bool {
    let h_minus = y.max(0.0);
    let l_plus = y.min(0.0);
    h - h_minus > BOUNDARY_EPS && l_plus - l > BOUNDARY_EPS
}

/// Conditional probability that the bridge from 0 to `y` stays in `[ℓ, h]`.
fn bridge_survival(h: f64, l: f64, y: f64, series: SeriesPolicy) -> Result<f64> {
    let range = h - l;
    if range < EIGEN_RANGE {
        return Ok(eigen_survival(Hd::cst(h), Hd::cst(l), y).r);
    }
    let e = |u: f64| (2.0 * u * (y - u)).exp();
    Ok(sum_bilateral(
        |m| {
            let md = m as f64 * range;
            e(-md) - e(l - md)
        },
        series,
    )?
    .value)
}

/// ℛ for a bridge from 0 to `y`, assuming `(h, ℓ)` inside the support.
fn bridge_conditional(h: f64, l: f64, y: f64, series: SeriesPolicy) -> Result<f64> {
    let range = h - l;
    if range < EIGEN_RANGE {
        // ℛ = −∂²S/∂h∂ℓ.
        return Ok(-eigen_survival(Hd::var1(h), Hd::var2(l), y).e12);
    }
    Ok(sum_bilateral(
        |m| {
            let mf = m as f64;
            let md = mf * range;
            mf * (mf * kernel_d(md, y) + (1.0 - mf) * kernel_d(md + l, y))
        },
        series,
    )?
    .value)
}

/// Eigenfunction form of the bridge survival probability:
/// `√(2π) e^{y²/2} (2/Δ) Σ_n sin(nπ(−ℓ)/Δ) sin(nπ(y−ℓ)/Δ) e^{−n²π²/(2Δ²)}`.
fn eigen_survival(h: Hd, l: Hd, y: f64) -> Hd {
    use std::f64::consts::PI;
    let range = h - l;
    let r = range.r;
    // Terms beyond this are below e^{-60} of the first.
    let n_max = (1.0 + 120.0 * r * r / (PI * PI)).sqrt().ceil() as usize + 1;
    let mut sum = Hd::cst(0.0);
    for n in 1..=n_max {
        let k = n as f64 * PI;
        let s1 = (-l * k / range).sin();
        let s2 = ((Hd::cst(y) - l) * k / range).sin();
        let decay = (Hd::cst(-0.5 * k * k) / (range * range)).exp();
        sum = sum + s1 * s2 * decay;
    }
    let pref = (2.0 * PI).sqrt() * (0.5 * y * y).exp() * 2.0;
    sum * pref / range
}

/// Survival function `f(h, ℓ, c) = P{C ∈ dc, ℓ ≤ Y ≤ h}/dc`.
pub fn survival_function(h: f64, l: f64, c: f64, params: &DensityParams) -> Result<f64> {
    params.validate()?;
    let y = (1.0 - params.kappa) * c;
    if h < y.max(0.0) || l > y.min(0.0) {
        return Ok(0.0);
    }
    if h - y.max(0.0) <= BOUNDARY_EPS || y.min(0.0) - l <= BOUNDARY_EPS {
        return Ok(0.0);
    }
    Ok(gaussian_pdf(c - params.gamma) * bridge_survival(h, l, y, params.series)?)
}

/// Conditional density `ℛ(h, ℓ; κ | c)` of the bridge high and low given
/// the close.
pub fn conditional_pdf(h: f64, l: f64, c: f64, kappa: f64, series: SeriesPolicy) -> Result<f64> {
    check_kappa(kappa)?;
    let y = if (1.0 - kappa).abs() < COMPLETE_BRIDGE_EPS {
        0.0
    } else {
        (1.0 - kappa) * c
    };
    if !in_support(h, l, y) {
        return Ok(0.0);
    }
    bridge_conditional(h, l, y, series)
}

/// Joint density `Q(h, ℓ, c; κ, γ) = g(c − γ) ℛ(h, ℓ; κ | c)`.
pub fn joint_pdf(h: f64, l: f64, c: f64, params: &DensityParams) -> Result<f64> {
    params.validate()?;
    if (1.0 - params.kappa).abs() < COMPLETE_BRIDGE_EPS {
        return complete_bridge_pdf(h, l, c, params.gamma, params.series);
    }
    let r = conditional_pdf(h, l, c, params.kappa, params.series)?;
    Ok(gaussian_pdf(c - params.gamma) * r)
}

/// Joint density for the complete bridge (`κ = 1`), where high and low are
/// independent of the close.
pub fn complete_bridge_pdf(h: f64, l: f64, c: f64, gamma: f64, series: SeriesPolicy) -> Result<f64> {
    if !in_support(h, l, 0.0) {
        return Ok(0.0);
    }
    Ok(gaussian_pdf(c - gamma) * bridge_conditional(h, l, 0.0, series)?)
}

/// Writes `h,l,c,q` rows for the given points.
pub fn write_grid_csv<W: Write>(mut out: W, points: &[(f64, f64, f64)], params: &DensityParams) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidParameter(format!("write failed: {e}"));
    writeln!(out, "h,l,c,q").map_err(io)?;
    for &(h, l, c) in points {
        let q = joint_pdf(h, l, c, params)?;
        writeln!(out, "{h:.17e},{l:.17e},{c:.17e},{q:.17e}").map_err(io)?;
    }
    Ok(())
}

/// Hyper-dual number `r + a ε₁ + b ε₂ + ab ε₁ε₂` with `ε₁² = ε₂² = 0`;
/// the `ε₁ε₂` part carries an exact mixed second derivative.
#[derive(Debug, Clone, Copy)]
struct Hd {
    r: f64,
    e1: f64,
    e2: f64,
    e12: f64,
}

impl Hd {
    fn cst(r: f64) -> Hd {
        Hd {
            r,
            e1: 0.0,
            e2: 0.0,
            e12: 0.0,
        }
    }
    fn var1(r: f64) -> Hd {
        Hd {
            r,
            e1: 1.0,
            e2: 0.0,
            e12: 0.0,
        }
    }
    fn var2(r: f64) -> Hd {
        Hd {
            r,
            e1: 0.0,
            e2: 1.0,
            e12: 0.0,
        }
    }
    /// Applies `f` given `f(r)`, `f'(r)`, `f''(r)`.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Hd {
        Hd {
            r: f0,
            e1: f1 * self.e1,
            e2: f1 * self.e2,
            e12: f1 * self.e12 + f2 * self.e1 * self.e2,
        }
    }
    fn sin(self) -> Hd {
        let (s, c) = self.r.sin_cos();
        self.chain(s, c, -s)
    }
    fn exp(self) -> Hd {
        let e = self.r.exp();
        self.chain(e, e, e)
    }
    fn recip(self) -> Hd {
        let i = 1.0 / self.r;
        self.chain(i, -i * i, 2.0 * i * i * i)
    }
}

impl Add for Hd {
    type Output = Hd;
    fn add(self, o: Hd) -> Hd {
        Hd {
            r: self.r + o.r,
            e1: self.e1 + o.e1,
            e2: self.e2 + o.e2,
            e12: self.e12 + o.e12,
        }
    }
}
impl Sub for Hd {
    type Output = Hd;
    fn sub(self, o: Hd) -> Hd {
        self + (-o)
    }
}
impl Neg for Hd {
    type Output = Hd;
    fn neg(self) -> Hd {
        Hd {
            r: -self.r,
            e1: -self.e1,
            e2: -self.e2,
            e12: -self.e12,
        }
    }
}
impl Mul for Hd {
    type Output = Hd;
    fn mul(self, o: Hd) -> Hd {
        Hd {
            r: self.r * o.r,
            e1: self.r * o.e1 + self.e1 * o.r,
            e2: self.r * o.e2 + self.e2 * o.r,
            e12: self.r * o.e12 + self.e1 * o.e2 + self.e2 * o.e1 + self.e12 * o.r,
        }
    }
}
impl Mul<f64> for Hd {
    type Output = Hd;
    fn mul(self, s: f64) -> Hd {
        Hd {
            r: self.r * s,
            e1: self.e1 * s,
            e2: self.e2 * s,
            e12: self.e12 * s,
        }
    }
}
impl Div for Hd {
    type Output = Hd;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Hd) -> Hd {
        self * o.recip()
    }
}
