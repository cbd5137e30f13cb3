//! Log-price path simulation, incomplete bridges and OHLC extraction.
//!
//! Paths are normalized to unit variance over a unit interval:
//! `X(t) = γ t + W(t)`, simulated on the grid `k/K` as a random walk with
//! increments `γ/K + ε_k/√K`. The incomplete bridge is
//! `Y(t) = X(t) − κ t X(1)`.
//!
//! Extremes are taken over grid points only. No Brownian-bridge correction
//! is applied between grid points, so for finite `K` the high is biased
//! low and the low biased high.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::{Error, Result};

/// Name of the generator recorded in output metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), stream = partition index";

/// Samples per Monte Carlo partition. Each partition owns one RNG stream, so
/// results do not depend on the number of worker threads.
pub const PARTITION_SIZE: usize = 4096;

/// Number of steps used for the continuous-time limit.
pub const CONTINUOUS_STEPS: usize = 4096;
/// Partitions simulated concurrently before their results are merged.
const MERGE_BATCH: usize = 64;

/// Number of grid steps per unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ticks {
    Finite(usize),
    /// Continuous limit, simulated with [`CONTINUOUS_STEPS`] Gaussian steps.
    Continuous,
}

impl Ticks {
    pub fn steps(self) -> usize {
        match self {
            Ticks::Finite(k) => k,
            Ticks::Continuous => CONTINUOUS_STEPS,
        }
    }
}

impl fmt::Display for Ticks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ticks::Finite(k) => write!(f, "{k}"),
            Ticks::Continuous => write!(f, "inf"),
        }
    }
}

/// Zero-mean, unit-variance innovation given by its inverse CDF.
#[derive(Clone)]
pub struct CustomInnovation {
    name: String,
    inverse_cdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl CustomInnovation {
    /// Midpoint quadrature nodes used for the moment check.
    const CHECK_NODES: usize = 1 << 18;

    /// Registers an inverse CDF after checking mean 0 and variance 1 to 1e-2.
    pub fn register<F>(name: impl Into<String>, inverse_cdf: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let n = Self::CHECK_NODES;
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in 0..n {
            let x = inverse_cdf((i as f64 + 0.5) / n as f64);
            if !x.is_finite() {
                return Err(Error::InvalidParameter(
                    "inverse CDF returned a non-finite value".into(),
                ));
            }
            m1 += x;
            m2 += x * x;
        }
        let mean = m1 / n as f64;
        let var = m2 / n as f64 - mean * mean;
        if mean.abs() > 1e-2 || (var - 1.0).abs() > 1e-2 {
            return Err(Error::InvalidParameter(format!(
                "innovation must have zero mean and unit variance (got mean {mean:.4}, variance {var:.4})"
            )));
        }
        Ok(CustomInnovation {
            name: name.into(),
            inverse_cdf: Arc::new(inverse_cdf),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomInnovation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomInnovation").field("name", &self.name).finish()
    }
}

/// Distribution of the walk increments `ε_k`.
#[derive(Debug, Clone)]
pub enum Innovation {
    Gaussian,
    Rademacher,
    Custom(CustomInnovation),
}

impl Innovation {
    #[inline]
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Innovation::Gaussian => rng.sample(StandardNormal),
            Innovation::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Innovation::Custom(c) => {
                // Open interval (0, 1).
                let u = (rng.random::<u64>() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                (c.inverse_cdf)(u + 0.5 / (1u64 << 53) as f64)
            }
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Innovation::Gaussian => "gaussian",
            Innovation::Rademacher => "rademacher",
            Innovation::Custom(c) => c.name(),
        }
    }
}

/// Parameters of the normalized log-price process.
#[derive(Debug, Clone)]
pub struct ProcessConfig {
    /// Normalized drift `μ√T/σ`.
    pub gamma: f64,
    /// Bridge coefficient.
    pub kappa: f64,
    pub ticks: Ticks,
    pub innovation: Innovation,
}

impl ProcessConfig {
    pub fn new(gamma: f64, kappa: f64, ticks: Ticks) -> Self {
        ProcessConfig {
            gamma,
            kappa,
            ticks,
            innovation: Innovation::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Ticks::Finite(0) = self.ticks {
            return Err(Error::InvalidParameter("number of ticks K must be at least 1".into()));
        }
        if !self.gamma.is_finite() || !self.kappa.is_finite() {
            return Err(Error::InvalidParameter("gamma and kappa must be finite".into()));
        }
        Ok(())
    }
}

/// Process values on an ascending grid of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl PathSample {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let p = PathSample { times, values };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if n < 2 || self.values.len() != n {
            return Err(Error::InvalidParameter(
                "path needs at least two matching points".into(),
            ));
        }
        if self.times[0] != 0.0 || self.times[n - 1] != 1.0 {
            return Err(Error::InvalidParameter("path grid must start at 0 and end at 1".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("path grid must be strictly increasing".into()));
        }
        if self.values[0] != 0.0 {
            return Err(Error::InvalidParameter("path must start at 0".into()));
        }
        Ok(())
    }

    pub fn close(&self) -> f64 {
        *self.values.last().expect("validated path is non-empty")
    }
}

/// High and low of an incomplete bridge with the close of the underlying
/// process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OhlcSample {
    pub h: f64,
    pub l: f64,
    pub c: f64,
    pub kappa: f64,
}

impl OhlcSample {
    /// Checks `h ≥ 0 ≥ l` and `l ≤ (1−κ)c ≤ h` up to `tol`.
    pub fn check_support(&self, tol: f64) -> Result<()> {
        let y1 = (1.0 - self.kappa) * self.c;
        if self.h < -tol {
            return Err(Error::OutsideDomain(format!("high {} is negative", self.h)));
        }
        if self.l > tol {
            return Err(Error::OutsideDomain(format!("low {} is positive", self.l)));
        }
        if y1 > self.h + tol {
            return Err(Error::OutsideDomain(format!(
                "(1-kappa)*close = {y1} exceeds high {}",
                self.h
            )));
        }
        if y1 < self.l - tol {
            return Err(Error::OutsideDomain(format!(
                "(1-kappa)*close = {y1} is below low {}",
                self.l
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> OhlcSample {
        OhlcSample {
            h: s * self.h,
            l: s * self.l,
            c: s * self.c,
            kappa: self.kappa,
        }
    }
}

/// RNG for a given `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn fill_walk<R: Rng>(config: &ProcessConfig, rng: &mut R, values: &mut [f64]) {
    let k = values.len() - 1;
    let drift = config.gamma / k as f64;
    let scale = 1.0 / (k as f64).sqrt();
    values[0] = 0.0;
    let mut x = 0.0;
    for v in values[1..].iter_mut() {
        x += drift + scale * config.innovation.draw(rng);
        *v = x;
    }
}

fn unit_grid(k: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
    t[k] = 1.0;
    t
}

/// One realization of `X(t)` on the grid `k/K`.
pub fn simulate_path(config: &ProcessConfig, seed: u64) -> Result<PathSample> {
    config.validate()?;
    let mut rng = stream_rng(seed, 0);
    simulate_path_with(config, &mut rng)
}

/// As [`simulate_path`] but drawing from a caller-supplied generator.
pub fn simulate_path_with<R: Rng>(config: &ProcessConfig, rng: &mut R) -> Result<PathSample> {
    config.validate()?;
    let k = config.ticks.steps();
    let mut values = vec![0.0; k + 1];
    fill_walk(config, rng, &mut values);
    Ok(PathSample {
        times: unit_grid(k),
        values,
    })
}

/// `Y(t_k) = X(t_k) − κ t_k X(1)` on the same grid.
pub fn bridge_transform(path: &PathSample, kappa: f64) -> PathSample {
    let x1 = path.close();
    let n = path.values.len();
    let mut values: Vec<f64> = path
        .times
        .iter()
        .zip(&path.values)
        .map(|(t, x)| x - kappa * t * x1)
        .collect();
    // Pin the endpoint exactly: Y(1) = (1−κ) X(1).
    values[n - 1] = (1.0 - kappa) * x1;
    values[0] = 0.0;
    PathSample {
        times: path.times.clone(),
        values,
    }
}

/// Grid high and low of the bridge together with the close `X(1)`.
pub fn extract_ohlc(path: &PathSample, kappa: f64) -> OhlcSample {
    let (h, l) = bridge_extremes(&path.times, &path.values, kappa);
    OhlcSample {
        h,
        l,
        c: path.close(),
        kappa,
    }
}

fn bridge_extremes(times: &[f64], values: &[f64], kappa: f64) -> (f64, f64) {
    let x1 = values[values.len() - 1];
    let mut h: f64 = 0.0;
    let mut l: f64 = 0.0;
    // The endpoint enters only through its pinned value below.
    let n = values.len() - 1;
    for (t, x) in times[..n].iter().zip(&values[..n]) {
        let y = x - kappa * t * x1;
        h = h.max(y);
        l = l.min(y);
    }
    let y1 = (1.0 - kappa) * x1;
    (h.max(y1), l.min(y1))
}

/// OHLC samples of several bridges built from one walk on the grid `k/K`.
pub fn ohlc_for_kappas(values: &[f64], kappas: &[f64], out: &mut Vec<OhlcSample>) {
    let k = values.len() - 1;
    let x1 = values[k];
    out.clear();
    for &kappa in kappas {
        let mut h: f64 = 0.0;
        let mut l: f64 = 0.0;
        let slope = kappa * x1 / k as f64;
        for (i, x) in values[..k].iter().enumerate() {
            let y = x - slope * i as f64;
            h = h.max(y);
            l = l.min(y);
        }
        let y1 = (1.0 - kappa) * x1;
        out.push(OhlcSample {
            h: h.max(y1),
            l: l.min(y1),
            c: x1,
            kappa,
        });
    }
}

/// Deterministic partitioned Monte Carlo over walks.
///
/// Sample `i` lives in partition `i / PARTITION_SIZE`, whose generator is
/// `stream_rng(seed, stream_offset + partition)`. For each walk, `visit`
/// receives the OHLC samples for every requested `κ` (same walk, common
/// random numbers). Partition accumulators are merged in partition order.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_fold<A, I, V, M>(
    config: &ProcessConfig,
    kappas: &[f64],
    n: usize,
    seed: u64,
    stream_offset: u64,
    init: I,
    visit: V,
    merge: M,
) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, &[OhlcSample]) + Sync,
    M: Fn(A, A) -> A,
{
    config.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("number of samples must be at least 1".into()));
    }
    if kappas.is_empty() {
        return Err(Error::InvalidParameter("at least one kappa is required".into()));
    }
    let k = config.ticks.steps();
    let partitions = n.div_ceil(PARTITION_SIZE);
    // Bounded batches keep at most `MERGE_BATCH` partials alive.
    let mut acc: Option<A> = None;
    for start in (0..partitions).step_by(MERGE_BATCH) {
        let end = (start + MERGE_BATCH).min(partitions);
        let partials: Vec<A> = (start..end)
            .into_par_iter()
            .map(|p| {
                let mut rng = stream_rng(seed, stream_offset + p as u64);
                let count = PARTITION_SIZE.min(n - p * PARTITION_SIZE);
                let mut acc = init();
                let mut values = vec![0.0; k + 1];
                let mut buf = Vec::with_capacity(kappas.len());
                for _ in 0..count {
                    fill_walk(config, &mut rng, &mut values);
                    ohlc_for_kappas(&values, kappas, &mut buf);
                    visit(&mut acc, &buf);
                }
                acc
            })
            .collect();
        for part in partials {
            acc = Some(match acc {
                None => part,
                Some(a) => merge(a, part),
            });
        }
    }
    Ok(acc.expect("n >= 1 gives at least one partition"))
}

/// `n` independent OHLC samples of the bridge with `config.kappa`.
pub fn monte_carlo_ohlc(config: &ProcessConfig, n: usize, seed: u64) -> Result<Vec<OhlcSample>> {
    let out = monte_carlo_fold(
        config,
        &[config.kappa],
        n,
        seed,
        0,
        Vec::new,
        |acc: &mut Vec<OhlcSample>, s| acc.push(s[0]),
        |mut a, b| {
            a.extend(b);
            a
        },
    )?;
    if out.len() != n {
        return Err(Error::InsufficientData(format!(
            "generated {} of {n} samples",
            out.len()
        )));
    }
    Ok(out)
}

/// Simulates the time-changed process `𝒴(t) = γ(1−κ)t + s(t) W(t/s(t))`
/// with `s(t) = 1 − t + (1−κ)² t`, which has the same law as the incomplete
/// bridge. Used to cross-check the bridge construction.
pub fn simulate_time_changed_bridge<R: Rng>(gamma: f64, kappa: f64, steps: usize, rng: &mut R) -> Result<PathSample> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    let times = unit_grid(steps);
    let q = (1.0 - kappa) * (1.0 - kappa);
    let mut values = vec![0.0; steps + 1];
    let mut w = 0.0;
    let mut u_prev = 0.0;
    for (i, &t) in times.iter().enumerate().skip(1) {
        let s = 1.0 - t + q * t;
        if s <= 0.0 {
            // Complete bridge at t = 1: s(t) W(t/s(t)) → 0.
            values[i] = gamma * (1.0 - kappa) * t;
            continue;
        }
        let u = t / s;
        let z: f64 = rng.sample(StandardNormal);
        w += (u - u_prev).sqrt() * z;
        u_prev = u;
        values[i] = gamma * (1.0 - kappa) * t + s * w;
    }
    Ok(PathSample { times, values })
}
