//! Oracles shared by the integration tests.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rand_distr::StandardNormal;

/// Kummer's series summed in exact rational arithmetic for rational
/// `a = an/ad`, `b = bn/bd`, `z = zn/zd`, stopped once a term drops below
/// `10^-40` and all later terms are smaller.
pub fn kummer_rational(a: (i64, i64), b: (i64, i64), z: (i64, i64)) -> f64 {
    let q = |(n, d): (i64, i64)| BigRational::new(BigInt::from(n), BigInt::from(d));
    let (a, b, z) = (q(a), q(b), q(z));
    let one = BigRational::from_integer(BigInt::from(1));
    let eps = BigRational::new(BigInt::from(1), BigInt::from(10).pow(40));
    let mut term = one.clone();
    let mut sum = one.clone();
    let mut n = BigRational::from_integer(BigInt::from(0));
    loop {
        term = term * (&a + &n) * &z / ((&b + &n) * (&n + &one));
        n += &one;
        sum += &term;
        let abs = if term < BigRational::from_integer(BigInt::from(0)) {
            -term.clone()
        } else {
            term.clone()
        };
        // Past the peak the terms shrink geometrically.
        if abs < eps && n > BigRational::from_integer(BigInt::from(10)) {
            break;
        }
    }
    rational_to_f64(&sum)
}

/// Decimal conversion with 30 digits after the point.
pub fn rational_to_f64(x: &BigRational) -> f64 {
    let scale = BigInt::from(10).pow(30);
    let scaled = (x.numer() * &scale) / x.denom();
    let s = scaled.to_string();
    let (neg, digits) = match s.strip_prefix('-') {
        Some(d) => (true, d.to_string()),
        None => (false, s),
    };
    let padded = format!("{digits:0>31}");
    let (int, frac) = padded.split_at(padded.len() - 30);
    let v: f64 = format!("{int}.{frac}").parse().unwrap();
    if neg {
        -v
    } else {
        v
    }
}

/// Maximum of a Brownian bridge from `x0` to `x1` over a step of length
/// `dt`, drawn exactly by inverting its distribution function.
pub fn bridge_max<R: Rng>(x0: f64, x1: f64, dt: f64, rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    let d = x1 - x0;
    0.5 * (x0 + x1 + (d * d - 2.0 * dt * u.ln()).sqrt())
}

pub fn bridge_min<R: Rng>(x0: f64, x1: f64, dt: f64, rng: &mut R) -> f64 {
    -bridge_max(-x0, -x1, dt, rng)
}

/// Continuous-time high and low of `Y(t) = X(t) − κ t X(1)` with
/// `X(t) = γ t + W(t)`, plus the close `X(1)`.
///
/// `X` is drawn on `steps` grid points; between grid points `Y` is a
/// Brownian bridge, whose extremes are sampled exactly. The maximum and
/// the minimum of one step are drawn independently, which only matters
/// when both global extremes fall in the same step.
pub fn continuous_ohlc<R: Rng>(gamma: f64, kappa: f64, steps: usize, rng: &mut R, x: &mut Vec<f64>) -> (f64, f64, f64) {
    let dt = 1.0 / steps as f64;
    let sd = dt.sqrt();
    x.clear();
    x.push(0.0);
    let mut v = 0.0;
    for _ in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        v += gamma * dt + sd * z;
        x.push(v);
    }
    let x1 = v;
    let (mut h, mut l) = (0.0f64, 0.0f64);
    let mut y0 = 0.0;
    for (k, &xk) in x.iter().enumerate().skip(1) {
        let t = k as f64 * dt;
        let y1 = xk - kappa * t * x1;
        h = h.max(bridge_max(y0, y1, dt, rng));
        l = l.min(bridge_min(y0, y1, dt, rng));
        y0 = y1;
    }
    (h, l, x1)
}

/// Asymptotic Kolmogorov tail `P{√n D > t}`.
pub fn kolmogorov_tail(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
        s += sign * (-2.0 * k * k * t * t).exp();
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov p-value.
pub fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    kolmogorov_tail(d * ne.sqrt())
}

/// Upper tail of the χ² distribution with `k` degrees of freedom.
pub fn chi2_tail(x: f64, k: usize) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(k as f64).unwrap().sf(x)
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// χ² comparison of `Q(h, ℓ, c; κ, 0)` with a histogram of continuous-time
/// samples. Cells live in `u = h − max(0, y)`, `v = min(0, y) − ℓ` and `c`,
/// so none straddles the support boundary. Returns `(χ², dof, p)` over cells
/// expecting at least 500 hits.
pub fn density_histogram_chi2(kappa: f64, n: usize, seed: u64) -> (f64, usize, f64) {
    use bridgevol::density::{joint_pdf, DensityParams};
    use bridgevol::quad::gauss_legendre;
    use rayon::prelude::*;

    const NU: usize = 8;
    const NC: usize = 8;
    const WIDTH_UV: f64 = 0.2;
    const WIDTH_C: f64 = 0.5;
    let cell = |u: f64, v: f64, c: f64| -> Option<usize> {
        let i = (u / WIDTH_UV).floor();
        let j = (v / WIDTH_UV).floor();
        let k = ((c + 2.0) / WIDTH_C).floor();
        let ok = |x: f64, n: usize| x >= 0.0 && x < n as f64;
        (ok(i, NU) && ok(j, NU) && ok(k, NC)).then(|| (i as usize * NU + j as usize) * NC + k as usize)
    };
    let parts = n.div_ceil(4096);
    let counts = (0..parts)
        .into_par_iter()
        .map(|p| {
            let mut rng = bridgevol::stochastic::stream_rng(seed, p as u64);
            let mut buf = Vec::new();
            let mut hist = vec![0u64; NU * NU * NC];
            for _ in 0..4096.min(n - p * 4096) {
                let (h, l, c) = continuous_ohlc(0.0, kappa, 64, &mut rng, &mut buf);
                let y = (1.0 - kappa) * c;
                if let Some(idx) = cell(h - y.max(0.0), y.min(0.0) - l, c) {
                    hist[idx] += 1;
                }
            }
            hist
        })
        .reduce(
            || vec![0u64; NU * NU * NC],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let (x, w) = gauss_legendre(6);
    let params = DensityParams::new(kappa, 0.0);
    let probs: Vec<f64> = (0..NU * NU * NC)
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = (idx / (NU * NC), (idx / NC) % NU, idx % NC);
            let mut s = 0.0;
            for (a, wa) in x.iter().zip(&w) {
                for (b, wb) in x.iter().zip(&w) {
                    for (d, wd) in x.iter().zip(&w) {
                        // Nodes on [-1, 1] mapped into the cell.
                        let u = WIDTH_UV * (i as f64 + 0.5 * (a + 1.0));
                        let v = WIDTH_UV * (j as f64 + 0.5 * (b + 1.0));
                        let c = -2.0 + WIDTH_C * (k as f64 + 0.5 * (d + 1.0));
                        let y = (1.0 - kappa) * c;
                        let q = joint_pdf(y.max(0.0) + u, y.min(0.0) - v, c, &params).unwrap();
                        s += wa * wb * wd * q;
                    }
                }
            }
            s * (0.5 * WIDTH_UV) * (0.5 * WIDTH_UV) * (0.5 * WIDTH_C)
        })
        .collect();
    let mut chi2 = 0.0;
    let mut dof = 0;
    for (obs, p) in counts.iter().zip(&probs) {
        let e = p * n as f64;
        if e >= 500.0 {
            chi2 += (*obs as f64 - e).powi(2) / e;
            dof += 1;
        }
    }
    (chi2, dof, chi2_tail(chi2, dof))
}
