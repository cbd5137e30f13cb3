//! Applying diagrams to samples.
//!
//! A canonical estimate is `ê_λ = R^λ ψ(Θ, Φ)` for bridge OHLC values
//! `(H, L, C)` in geographic coordinates `(R, Θ, Φ)`.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::diagram::{to_spherical, Diagram, GK_K1, GK_K2, GK_K3};
use crate::stochastic::OhlcSample;
use crate::{Error, Result};

/// Design point of an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Design {
    pub lambda: f64,
    pub kappa: f64,
    pub gamma0: f64,
}

/// Mean and variance of a canonical estimator, either analytic (`n = 0`)
/// or from `n` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub mean: f64,
    pub variance: f64,
    pub n: usize,
    pub standard_error: f64,
    pub design: Design,
}

/// Relative slack, in units of `R`, on the support constraints of a sample.
pub const SUPPORT_TOL: f64 = 1e-9;
/// Largest share of a batch that may be rejected.
pub const MAX_REJECTED_FRACTION: f64 = 1e-3;

/// Units of an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum OutputScale {
    /// `ê_λ = R^λ ψ(Θ, Φ)` of the given values.
    #[default]
    Canonical,
    /// `ê_λ / T^{λ/2}`: per-unit-time scale for raw values carrying `σ√T`.
    PriceScale,
}

/// A batch of samples, each with its interval length `T`.
#[derive(Debug, Clone)]
pub struct EstimateRequest<'a> {
    pub samples: Vec<(OhlcSample, f64)>,
    pub diagram: &'a Diagram,
    pub scale: OutputScale,
}

/// `R^λ ψ(Θ, Φ)`, divided by `T^{λ/2}` on the price scale.
pub fn estimate_one(s: &OhlcSample, t: f64, diagram: &Diagram, scale: OutputScale) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "interval length T = {t} must be positive"
        )));
    }
    if s.kappa != diagram.kappa {
        return Err(Error::InvalidParameter(format!(
            "sample kappa {} does not match diagram kappa {}",
            s.kappa, diagram.kappa
        )));
    }
    let p = to_spherical(s)?;
    s.check_support(SUPPORT_TOL * p.r)?;
    // Within tolerance: snap onto the domain.
    let phi = p.phi.clamp(-FRAC_PI_2, 0.0);
    let (lo, hi) = diagram.domain().theta_bounds(phi);
    let theta = p.theta.clamp(lo, hi);
    let canonical = p.r.powf(diagram.lambda) * diagram.psi(theta, phi)?;
    Ok(match scale {
        OutputScale::Canonical => canonical,
        OutputScale::PriceScale => canonical / t.powf(diagram.lambda / 2.0),
    })
}

/// Bridge Garman–Klass form `k₁(H−L)² − k₂(C'(H+L) − 2HL) − k₃C'²` with
/// `C' = (1−κ)C`; at `κ = 0` this is the classic estimator.
pub fn classic_gk(s: &OhlcSample) -> f64 {
    let c = (1.0 - s.kappa) * s.c;
    let r = s.h - s.l;
    GK_K1 * r * r - GK_K2 * (c * (s.h + s.l) - 2.0 * s.h * s.l) - GK_K3 * c * c
}

/// Parkinson's `(H − L)² / (4 ln 2)`.
pub fn classic_parkinson(s: &OhlcSample) -> f64 {
    let r = s.h - s.l;
    r * r / (4.0 * std::f64::consts::LN_2)
}

/// Mean, unbiased sample variance and standard error of `values`.
pub fn sample_report(values: &[f64], design: Design) -> Result<EfficiencyReport> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} values, need at least 2")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(EfficiencyReport {
        mean,
        variance,
        n,
        standard_error: (variance / n as f64).sqrt(),
        design,
    })
}

/// Per-sample estimates with their summary.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub report: EfficiencyReport,
    /// `None` where the sample was rejected.
    pub estimates: Vec<Option<f64>>,
    pub rejected: usize,
    /// First rejection reason, for diagnostics.
    pub first_error: Option<Error>,
}

/// Applies the diagram to every sample. Rejected samples are skipped and
/// counted; more than [`MAX_REJECTED_FRACTION`] of them is an error.
pub fn batch_report(req: &EstimateRequest<'_>) -> Result<BatchOutcome> {
    if req.samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} samples, need at least 2",
            req.samples.len()
        )));
    }
    let results: Vec<Result<f64>> = req
        .samples
        .par_iter()
        .map(|(s, t)| estimate_one(s, *t, req.diagram, req.scale))
        .collect();
    let mut estimates = Vec::with_capacity(results.len());
    let mut first_error = None;
    for r in results {
        match r {
            Ok(v) => estimates.push(Some(v)),
            Err(e) => {
                first_error.get_or_insert(e);
                estimates.push(None);
            }
        }
    }
    let good: Vec<f64> = estimates.iter().flatten().copied().collect();
    let rejected = estimates.len() - good.len();
    if rejected as f64 > MAX_REJECTED_FRACTION * estimates.len() as f64 {
        return Err(Error::InsufficientData(format!(
            "{rejected} of {} samples rejected (first: {})",
            estimates.len(),
            first_error.as_ref().map(|e| e.to_string()).unwrap_or_default()
        )));
    }
    let d = req.diagram;
    let report = sample_report(
        &good,
        Design {
            lambda: d.lambda,
            kappa: d.kappa,
            gamma0: d.gamma0,
        },
    )?;
    Ok(BatchOutcome {
        report,
        estimates,
        rejected,
        first_error,
    })
}
