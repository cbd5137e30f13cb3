//! Truncated power series in one variable, in either `f64` or double-double.

use std::ops::{Add, Mul, Sub};

use super::Real;
use crate::{Error, Result};

/// Coefficients `c₀ + c₁ε + … + c_{L−1}ε^{L−1}`; higher orders are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries<T> {
    pub coeffs: Vec<T>,
}

impl<T: Real> PowerSeries<T> {
    pub fn constant(x: T, len: usize) -> Self {
        let mut coeffs = vec![T::from_f64(0.0); len];
        coeffs[0] = x;
        PowerSeries { coeffs }
    }

    /// `a + bε`.
    pub fn linear(a: T, b: T, len: usize) -> Self {
        let mut s = Self::constant(a, len);
        if len > 1 {
            s.coeffs[1] = b;
        }
        s
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scale(&self, k: T) -> Self {
        PowerSeries {
            coeffs: self.coeffs.iter().map(|&c| c * k).collect(),
        }
    }

    /// Multiplication by `ε`.
    pub fn shift(&self) -> Self {
        let mut coeffs = vec![T::from_f64(0.0); self.len()];
        coeffs[1..].copy_from_slice(&self.coeffs[..self.len() - 1]);
        PowerSeries { coeffs }
    }

    /// `self^α` for a series with positive constant term.
    pub fn pow(&self, alpha: f64) -> Result<Self> {
        let c0 = self.coeffs[0];
        if !(c0.to_f64() > 0.0) {
            return Err(Error::Domain("power of a series needs a positive constant term".into()));
        }
        // Q = P^α obeys P Q' = α P' Q.
        let n = self.len();
        let mut q = vec![T::from_f64(0.0); n];
        q[0] = c0.pow_real(alpha);
        let inv0 = c0.recip();
        for k in 1..n {
            let mut acc = T::from_f64(0.0);
            for j in 1..=k {
                let w = T::from_f64((alpha + 1.0) * j as f64 - k as f64);
                acc = acc + w * self.coeffs[j] * q[k - j];
            }
            q[k] = acc * inv0 / T::from_f64(k as f64);
        }
        Ok(PowerSeries { coeffs: q })
    }

    /// `M(a, b, z(ε))` for a series `z` with zero constant term.
    pub fn kummer(a: f64, b: f64, z: &Self) -> Result<Self> {
        if z.coeffs[0].to_f64() != 0.0 {
            return Err(Error::Domain("series argument must vanish at the origin".into()));
        }
        let n = z.len();
        let mut sum = Self::constant(T::from_f64(1.0), n);
        let mut zn = Self::constant(T::from_f64(1.0), n);
        let mut coef = T::from_f64(1.0);
        for k in 1..n {
            let kf = k as f64 - 1.0;
            coef = coef * T::from_f64(a + kf) / (T::from_f64(b + kf) * T::from_f64(k as f64));
            zn = &zn * z;
            if zn.coeffs.iter().all(|c| c.to_f64() == 0.0) {
                break;
            }
            sum = &sum + &zn.scale(coef);
        }
        Ok(sum)
    }
}

impl<T: Real> Add for &PowerSeries<T> {
    type Output = PowerSeries<T>;
    fn add(self, o: Self) -> PowerSeries<T> {
        PowerSeries {
            coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &PowerSeries<T> {
    type Output = PowerSeries<T>;
    fn sub(self, o: Self) -> PowerSeries<T> {
        PowerSeries {
            coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<T: Real> Mul for &PowerSeries<T> {
    type Output = PowerSeries<T>;
    fn mul(self, o: Self) -> PowerSeries<T> {
        let n = self.len().min(o.len());
        let mut c = vec![T::from_f64(0.0); n];
        for (i, &a) in self.coeffs.iter().enumerate().take(n) {
            if a.to_f64() == 0.0 {
                continue;
            }
            for (j, &b) in o.coeffs.iter().enumerate().take(n - i) {
                c[i + j] = c[i + j] + a * b;
            }
        }
        PowerSeries { coeffs: c }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specialfn::DoubleDouble;

    #[test]
    fn binomial_series() {
        // (1 + ε)^{-1/2} = Σ binom(-1/2, k) ε^k
        let p = PowerSeries::linear(1.0, 1.0, 8).pow(-0.5).unwrap();
        let mut c = 1.0;
        for k in 0..8 {
            assert!((p.coeffs[k] - c).abs() < 1e-15, "{k}");
            c *= (-0.5 - k as f64) / (k as f64 + 1.0);
        }
        // (4 + 2ε)^{3/2} = 8 (1 + ε/2)^{3/2}: c₁ = 8 · 3/4
        let q = PowerSeries::linear(4.0, 2.0, 3).pow(1.5).unwrap();
        assert!((q.coeffs[0] - 8.0).abs() < 1e-14 && (q.coeffs[1] - 6.0).abs() < 1e-14);
    }

    #[test]
    fn kummer_of_series_matches_pointwise() {
        // M(a, b, ε²/3) against the scalar series at ε = 0.05.
        let z = PowerSeries::constant(1.0 / 3.0, 20).shift().shift();
        let m = PowerSeries::<f64>::kummer(2.5, 0.5, &z).unwrap();
        let e = 0.05f64;
        let val: f64 = m.coeffs.iter().rev().fold(0.0, |acc, &c| acc * e + c);
        let direct = crate::specialfn::kummer_m(2.5, 0.5, e * e / 3.0).unwrap();
        assert!((val / direct - 1.0).abs() < 1e-15);
    }

    #[test]
    fn double_double_pow_round_trip() {
        let p = PowerSeries::linear(DoubleDouble::new(2.0), DoubleDouble::new(0.3), 12);
        let back = &p.pow(2.5).unwrap() * &p.pow(-2.5).unwrap();
        assert!((back.coeffs[0].to_f64() - 1.0).abs() < 1e-30);
        for c in &back.coeffs[1..] {
            assert!(c.to_f64().abs() < 1e-29);
        }
    }
}
