//! Special-function kernel: Kummer's confluent hypergeometric function,
//! the standard normal density and bilateral series summation.

mod dd;
mod powser;

pub use dd::{DoubleDouble, Real};
pub use powser::PowerSeries;

use crate::{Error, Result};

/// `1 / sqrt(2π)`.
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Truncation policy for infinite series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPolicy {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of terms per side of a bilateral sum.
    pub max_terms: usize,
}

impl Default for SeriesPolicy {
    fn default() -> Self {
        SeriesPolicy {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_terms: 200,
        }
    }
}

impl SeriesPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("series tolerances must be positive".into()));
        }
        if self.max_terms == 0 {
            return Err(Error::InvalidParameter("max_terms must be at least 1".into()));
        }
        Ok(())
    }

    fn threshold(&self, sum: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * sum.abs())
    }
}

/// Standard normal density.
#[inline]
pub fn gaussian_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Result of [`sum_bilateral`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilateralSum {
    pub value: f64,
    /// Number of terms evaluated, counting `m = 0`.
    pub terms: usize,
}

/// Sums `term(m)` over all integers, expanding `0, ±1, ±2, …` until both
/// tails stay below tolerance for two consecutive shells.
pub fn sum_bilateral<F: FnMut(i64) -> f64>(mut term: F, policy: SeriesPolicy) -> Result<BilateralSum> {
    let mut sum = term(0);
    let mut terms = 1;
    let mut quiet = 0;
    for m in 1..=policy.max_terms as i64 {
        let up = term(m);
        let down = term(-m);
        terms += 2;
        sum += up + down;
        if !sum.is_finite() {
            return Err(Error::NonConvergence { terms, partial: sum });
        }
        let thr = policy.threshold(sum);
        if up.abs() <= thr && down.abs() <= thr {
            quiet += 1;
            if quiet == 2 {
                return Ok(BilateralSum { value: sum, terms });
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::NonConvergence { terms, partial: sum })
}

/// `B_{2j} / (2j)!` for `j = 1, 2, ...`, to double-double accuracy.
const BERNOULLI_OVER_FACTORIAL: [DoubleDouble; 25] = [
    DoubleDouble {
        hi: 0.08333333333333333,
        lo: 4.625929269271485e-18,
    },
    DoubleDouble {
        hi: -0.001388888888888889,
        lo: 5.300543954373577e-20,
    },
    DoubleDouble {
        hi: 3.306878306878307e-05,
        lo: -2.2300719288557665e-21,
    },
    DoubleDouble {
        hi: -8.267195767195768e-07,
        lo: 3.457597454003665e-23,
    },
    DoubleDouble {
        hi: 2.08767569878681e-08,
        lo: -1.2073450591132599e-24,
    },
    DoubleDouble {
        hi: -5.284190138687493e-10,
        lo: 3.517096671929869e-27,
    },
    DoubleDouble {
        hi: 1.3382536530684679e-11,
        lo: -2.828354019907999e-29,
    },
    DoubleDouble {
        hi: -3.3896802963225827e-13,
        lo: -1.4986928409964295e-29,
    },
    DoubleDouble {
        hi: 8.586062056277845e-15,
        lo: -6.05252374381974e-31,
    },
    DoubleDouble {
        hi: -2.174868698558062e-16,
        lo: 4.961617782549996e-33,
    },
    DoubleDouble {
        hi: 5.5090028283602295e-18,
        lo: -1.49827152194499e-35,
    },
    DoubleDouble {
        hi: -1.3954464685812522e-19,
        lo: -1.0350590497256251e-35,
    },
    DoubleDouble {
        hi: 3.534707039629467e-21,
        lo: 1.894231142684204e-37,
    },
    DoubleDouble {
        hi: -8.953517427037546e-23,
        lo: -5.728752743153026e-39,
    },
    DoubleDouble {
        hi: 2.267952452337683e-24,
        lo: 1.3043458462619563e-40,
    },
    DoubleDouble {
        hi: -5.744790668872202e-26,
        lo: 1.663242973708004e-43,
    },
    DoubleDouble {
        hi: 1.455172475614865e-27,
        lo: -5.613265715443096e-44,
    },
    DoubleDouble {
        hi: -3.6859949406653103e-29,
        lo: 1.0778256413554197e-45,
    },
    DoubleDouble {
        hi: 9.336734257095045e-31,
        lo: -3.9347970210731877e-47,
    },
    DoubleDouble {
        hi: -2.36502241570063e-32,
        lo: 2.0347170931532494e-49,
    },
    DoubleDouble {
        hi: 5.990671762482134e-34,
        lo: 1.6265467158179092e-50,
    },
    DoubleDouble {
        hi: -1.5174548844682903e-35,
        lo: 5.493014407946745e-52,
    },
    DoubleDouble {
        hi: 3.843758125454189e-37,
        lo: -3.685053096067968e-53,
    },
    DoubleDouble {
        hi: -9.736353072646691e-39,
        lo: 2.258059165188444e-55,
    },
    DoubleDouble {
        hi: 2.466247044200681e-40,
        lo: -1.505641802268162e-56,
    },
];

/// Hurwitz zeta `ζ(s, a) = Σ_{k≥0} (a + k)^{−s}` for `s > 1`, `a > 0`.
///
/// Direct terms until `a + k` is large against `s`, then Euler–Maclaurin
/// with exact Bernoulli coefficients. Accurate to the working precision of
/// `T` when `s` is a half-integer.
pub fn hurwitz_zeta<T: Real>(s: f64, a: f64) -> Result<T> {
    if !(s > 1.0) || !(a > 0.0) || !s.is_finite() || !a.is_finite() {
        return Err(Error::Domain(format!(
            "hurwitz zeta needs s > 1, a > 0 (s = {s}, a = {a})"
        )));
    }
    let shift = (s + 40.0 - a).ceil().max(0.0) as usize;
    let mut sum = T::from_f64(0.0);
    for k in (0..shift).rev() {
        sum = sum + T::from_f64(a + k as f64).pow_real(-s);
    }
    let big = T::from_f64(a + shift as f64);
    let inv2 = (big * big).recip();
    let lead = big.pow_real(1.0 - s);
    sum = sum + lead / T::from_f64(s - 1.0) + T::from_f64(0.5) * lead / big;
    // Terms B_{2j}/(2j)! (s)_{2j−1} A^{1−s−2j}.
    let mut poch = T::from_f64(s);
    let mut pw = lead * inv2;
    for (j, b) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        if j > 0 {
            let k = 2.0 * j as f64;
            poch = poch * T::from_f64(s + k - 1.0) * T::from_f64(s + k);
            pw = pw * inv2;
        }
        let term = T::from_dd(*b) * poch * pw;
        sum = sum + term;
        if term.abs().to_f64() <= T::EPS * sum.abs().to_f64() {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence {
        terms: BERNOULLI_OVER_FACTORIAL.len(),
        partial: sum.to_f64(),
    })
}

/// Value of a power series together with `Σ|terms| / |Σ terms|`.
#[derive(Debug, Clone, Copy)]
pub struct SeriesValue<T> {
    pub value: T,
    pub condition: f64,
    pub terms: usize,
}

/// Kummer's series `Σ (a)_n z^n / ((b)_n n!)` in arithmetic `T`.
///
/// Stops once the term magnitude is below `rel_tol` of the running sum for
/// two consecutive terms after the terms have started to decrease.
pub fn kummer_series<T: Real>(a: T, b: T, z: T, rel_tol: f64, max_terms: usize) -> Result<SeriesValue<T>> {
    let one = T::from_f64(1.0);
    let mut term = one;
    let mut sum = one;
    let mut abs_sum = 1.0;
    let mut quiet = 0;
    let mut n = 0usize;
    while n < max_terms {
        let nf = T::from_f64(n as f64);
        let an = a + nf;
        let bn = b + nf;
        term = term * an * z / (bn * (nf + one));
        n += 1;
        sum = sum + term;
        let t = term.to_f64().abs();
        abs_sum += t;
        let s = sum.to_f64().abs();
        if t == 0.0 && an.to_f64() == 0.0 {
            // (a)_n vanishes from here on: the series terminates.
            return Ok(SeriesValue {
                value: sum,
                condition: abs_sum / s.max(f64::MIN_POSITIVE),
                terms: n,
            });
        }
        // Past the peak the ratio |(a+n)z/((b+n)(n+1))| is below one.
        let ratio = (an.to_f64() * z.to_f64() / (bn.to_f64() * (n as f64))).abs();
        if t <= rel_tol * s && ratio < 1.0 {
            quiet += 1;
            if quiet == 2 {
                return Ok(SeriesValue {
                    value: sum,
                    condition: abs_sum / s.max(f64::MIN_POSITIVE),
                    terms: n,
                });
            }
        } else {
            quiet = 0;
        }
        if !abs_sum.is_finite() {
            return Err(Error::NonConvergence {
                terms: n,
                partial: sum.to_f64(),
            });
        }
    }
    Err(Error::NonConvergence {
        terms: n,
        partial: sum.to_f64(),
    })
}

/// Relative tolerance used inside [`kummer_m`].
const KUMMER_REL_TOL: f64 = 1e-16;
/// Condition estimate above which the series is recomputed in double-double.
pub const CANCELLATION_LIMIT: f64 = 1e6;

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// Confluent hypergeometric function `M(a, b, z)`.
///
/// Negative `z` goes through Kummer's transformation
/// `M(a, b, z) = e^z M(b - a, b, -z)`. Large positive `z` with `a, b > 0`
/// uses the direct series (all terms positive); otherwise the large-`z`
/// asymptotic expansion is tried first.
pub fn kummer_m(a: f64, b: f64, z: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && z.is_finite()) {
        return Err(Error::Domain(format!("non-finite argument M({a}, {b}, {z})")));
    }
    if is_nonpositive_integer(b) {
        return Err(Error::Domain(format!("b = {b} is a pole of Γ(b)")));
    }
    if z == 0.0 || a == 0.0 {
        return Ok(1.0);
    }
    if z < 0.0 {
        let s = robust_series(b - a, b, -z)?;
        return Ok(z.exp() * s);
    }
    if z > 50.0 && !(a > 0.0 && b > 0.0) {
        if let Some(v) = kummer_asymptotic(a, b, z) {
            return Ok(v);
        }
    }
    robust_series(a, b, z)
}

fn term_budget(z: f64) -> usize {
    500 + 4 * z.abs().ceil() as usize
}

fn robust_series(a: f64, b: f64, z: f64) -> Result<f64> {
    let budget = term_budget(z);
    let s = kummer_series(a, b, z, KUMMER_REL_TOL, budget)?;
    if s.condition <= CANCELLATION_LIMIT {
        return Ok(s.value);
    }
    let dd = kummer_series(
        DoubleDouble::new(a),
        DoubleDouble::new(b),
        DoubleDouble::new(z),
        1e-30,
        budget,
    )?;
    if dd.condition > 1e20 {
        return Err(Error::IllConditioned {
            condition: dd.condition,
        });
    }
    Ok(dd.value.to_f64())
}

/// `M(a,b,z) ~ Γ(b)/Γ(a) e^z z^(a-b) Σ (b-a)_n (1-a)_n / (n! z^n)`, or `None`
/// when the divergent tail is reached before the tolerance.
fn kummer_asymptotic(a: f64, b: f64, z: f64) -> Option<f64> {
    use statrs::function::gamma::{gamma, ln_gamma};
    if is_nonpositive_integer(a) {
        return None;
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for n in 0..200 {
        let nf = n as f64;
        term *= (b - a + nf) * (1.0 - a + nf) / ((nf + 1.0) * z);
        if term.abs() > prev {
            return None;
        }
        prev = term.abs();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            let ga = gamma(a);
            let sign = ga.signum() * gamma(b).signum();
            let log_mag = ln_gamma(b) - ga.abs().ln() + z + (a - b) * z.ln();
            return Some(sign * log_mag.exp() * sum);
        }
    }
    None
}
