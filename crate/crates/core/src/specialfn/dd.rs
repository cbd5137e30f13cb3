//! Double-double arithmetic (about 32 significant digits).
//!
//! Only the operations needed by the series kernels are provided. The
//! [`Real`] trait lets those kernels run in either `f64` or [`DoubleDouble`].

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

impl DoubleDouble {
    pub const ZERO: DoubleDouble = DoubleDouble { hi: 0.0, lo: 0.0 };
    pub const ONE: DoubleDouble = DoubleDouble { hi: 1.0, lo: 0.0 };
    pub const SQRT_PI: DoubleDouble = DoubleDouble {
        hi: 1.772_453_850_905_516,
        lo: -7.666586499825799e-17,
    };
    pub const SQRT_2: DoubleDouble = DoubleDouble {
        hi: std::f64::consts::SQRT_2,
        lo: -9.667293313452913e-17,
    };

    pub const fn new(hi: f64) -> Self {
        DoubleDouble { hi, lo: 0.0 }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DoubleDouble { hi, lo }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        DoubleDouble {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DoubleDouble { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self - o * DoubleDouble::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * DoubleDouble::new(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DoubleDouble { hi, lo } + DoubleDouble::new(q3)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&o.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&o.lo),
            other => other,
        }
    }
}

/// Field operations shared by `f64` and [`DoubleDouble`].
pub trait Real:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    /// Rounds a double-double constant to this arithmetic.
    fn from_dd(x: DoubleDouble) -> Self;
    fn recip(self) -> Self {
        Self::from_f64(1.0) / self
    }
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// `self^(k/2)` for an integer `k`; exact to working precision.
    fn pow_half(self, k: i32) -> Self {
        if k % 2 == 0 {
            self.powi(k / 2)
        } else {
            self.powi((k - 1) / 2) * self.sqrt()
        }
    }
    /// `Γ(k/2)` for a positive integer `k`.
    fn gamma_half(k: u32) -> Self;
    /// Unit roundoff of the arithmetic.
    const EPS: f64;
    /// `self^p`; exact for half-integer `p`, otherwise via `f64::powf`.
    fn pow_real(self, p: f64) -> Self {
        let k = 2.0 * p;
        if k == k.round() && k.abs() < 1e6 {
            self.pow_half(k as i32)
        } else {
            Self::from_f64(self.to_f64().powf(p))
        }
    }
    /// `Γ(x)`; exact for positive half-integer `x`, otherwise via `f64`.
    fn gamma_real(x: f64) -> Self {
        let k = 2.0 * x;
        if k == k.round() && k > 0.0 && k < 300.0 {
            Self::gamma_half(k as u32)
        } else {
            Self::from_f64(statrs::function::gamma::gamma(x))
        }
    }
}

impl Real for f64 {
    const EPS: f64 = f64::EPSILON;
    #[inline]
    fn pow_real(self, p: f64) -> Self {
        self.powf(p)
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn from_dd(x: DoubleDouble) -> Self {
        x.hi + x.lo
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn gamma_half(k: u32) -> Self {
        DoubleDouble::gamma_half(k).to_f64()
    }
}

impl Real for DoubleDouble {
    const EPS: f64 = 4.93e-32;
    #[inline]
    fn from_f64(x: f64) -> Self {
        DoubleDouble::new(x)
    }
    #[inline]
    fn from_dd(x: DoubleDouble) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
    fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return DoubleDouble::new(self.hi.sqrt());
        }
        let x = self.hi.sqrt();
        let y = DoubleDouble::new(x);
        y + (self - y * y) * DoubleDouble::new(0.5 / x)
    }
    #[inline]
    fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }
    fn powi(self, n: i32) -> Self {
        if n < 0 {
            return self.powi(-n).recip();
        }
        let mut base = self;
        let mut acc = DoubleDouble::ONE;
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
    fn gamma_half(k: u32) -> Self {
        assert!(k > 0, "gamma pole at 0");
        // Γ(1) = 1 and Γ(1/2) = √π, then Γ(x + 1) = x Γ(x).
        let (mut acc, mut x) = if k.is_multiple_of(2) {
            (DoubleDouble::ONE, 1.0)
        } else {
            (DoubleDouble::SQRT_PI, 0.5)
        };
        let target = k as f64 / 2.0;
        while x < target {
            acc = acc * DoubleDouble::new(x);
            x += 1.0;
        }
        acc
    }
}
