//! One-dimensional quadrature: Gauss–Legendre rules and a globally adaptive
//! Gauss–Kronrod (7/15) integrator.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, z);
                dp = d;
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule over the panels `[breaks[i], breaks[i+1]]`.
pub fn composite_rule(breaks: &[f64], points_per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(points_per_panel);
    let mut x = Vec::with_capacity((breaks.len() - 1) * points_per_panel);
    let mut w = Vec::with_capacity(x.capacity());
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (xi, wi) in gx.iter().zip(&gw) {
            x.push(mid + half * xi);
            w.push(half * wi);
        }
    }
    (x, w)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadTolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_segments: usize,
}

impl Default for QuadTolerance {
    fn default() -> Self {
        QuadTolerance {
            abs_tol: 1e-300,
            rel_tol: 1e-10,
            max_segments: 2000,
        }
    }
}

/// Globally adaptive G7/K15 integration over the panels given by `breaks`.
///
/// The segment with the largest error estimate is bisected until the total
/// error drops below `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, breaks: &[f64], tol: QuadTolerance) -> Result<Integral> {
    let (r, converged) = integrate_best_effort(f, breaks, tol)?;
    if !converged {
        return Err(Error::Quadrature(format!(
            "segment budget exhausted: value {:e}, error {:e}",
            r.value, r.error
        )));
    }
    Ok(r)
}

/// As [`integrate`], but returns the current estimate and its error when
/// the segment budget runs out, flagged by `false`.
pub fn integrate_best_effort<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    tol: QuadTolerance,
) -> Result<(Integral, bool)> {
    if breaks.len() < 2 {
        return Err(Error::InvalidParameter("need at least two breakpoints".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    let mut evaluations = 0;
    for pair in breaks.windows(2) {
        let (v, e) = gk15(&mut f, pair[0], pair[1]);
        evaluations += 15;
        value += v;
        error += e;
        heap.push(Segment {
            a: pair[0],
            b: pair[1],
            value: v,
            error: e,
        });
    }
    let mut converged = true;
    while error > tol.abs_tol.max(tol.rel_tol * value.abs()) {
        if heap.len() >= tol.max_segments {
            converged = false;
            break;
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in f64; accept it.
            heap.push(Segment { error: 0.0, ..worst });
            error -= worst.error;
            continue;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        evaluations += 30;
        value += v1 + v2 - worst.value;
        error += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to shed drift from the incremental updates.
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let error: f64 = heap.iter().map(|s| s.error).sum();
    if !value.is_finite() {
        return Err(Error::Quadrature("non-finite integrand".into()));
    }
    Ok((
        Integral {
            value,
            error,
            evaluations,
        },
        converged,
    ))
}

/// Integral of `f` over `[a, ∞)` via the map `x = a + s u / (1 - u)`.
///
/// `breaks` are extra breakpoints in `x` (values `<= a` are ignored).
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    scale: f64,
    breaks: &[f64],
    tol: QuadTolerance,
) -> Result<Integral> {
    let mut u: Vec<f64> = vec![0.0, 0.25, 0.5, 0.75, 0.875, 0.95, 1.0];
    for &x in breaks {
        if x > a && x.is_finite() {
            let r = (x - a) / scale;
            u.push(r / (1.0 + r));
        }
    }
    u.sort_by(f64::total_cmp);
    u.dedup_by(|p, q| (*p - *q).abs() < 1e-12);
    integrate(
        |u| {
            if u >= 1.0 {
                return 0.0;
            }
            let v = 1.0 - u;
            scale * f(a + scale * u / v) / (v * v)
        },
        &u,
        tol,
    )
}
