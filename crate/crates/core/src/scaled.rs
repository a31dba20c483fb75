//! Scaled-exponent arithmetic: a signed f64 mantissa with a separate binary
//! exponent, so quantities growing like r^n with r close to 2 survive a few
//! thousand generations without overflowing.
//!
//! The construction's eigenvalue tables reach magnitudes around 2^1000 at the
//! depths the exponent experiments need; plain doubles die near n = 1024.
//! Only the handful of operations the tables and evaluators need are
//! implemented. Relative accuracy is that of f64 (the mantissa carries the
//! full 53 bits).

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub};

/// `frac * 2^exp` with `0.5 <= |frac| < 1`, or exactly zero.
#[derive(Clone, Copy, Debug)]
pub struct Scaled {
    frac: f64,
    exp: i64,
}

pub const ZERO: Scaled = Scaled { frac: 0.0, exp: 0 };
pub const ONE: Scaled = Scaled { frac: 0.5, exp: 1 };

impl Scaled {
    pub fn zero() -> Self {
        ZERO
    }

    pub fn one() -> Self {
        ONE
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            return ZERO;
        }
        assert!(x.is_finite(), "Scaled::from_f64 of non-finite value");
        // Pull the exponent out of the bit pattern; subnormals are first
        // scaled into the normal range.
        let (x, bias) = if x.abs() < f64::MIN_POSITIVE {
            (x * f64::powi(2.0, 100), -100i64)
        } else {
            (x, 0i64)
        };
        let bits = x.to_bits();
        let raw_exp = ((bits >> 52) & 0x7ff) as i64 - 1022; // exp such that |frac| in [0.5,1)
        let frac = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1022u64 << 52));
        Scaled { frac, exp: raw_exp + bias }
    }

    /// Lossy conversion; values beyond f64 range become +/-inf or 0.
    pub fn to_f64(self) -> f64 {
        if self.frac == 0.0 {
            return 0.0;
        }
        if self.exp > 1100 {
            return if self.frac > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        if self.exp < -1140 {
            return 0.0;
        }
        self.frac * pow2(self.exp)
    }

    fn norm(mut frac: f64, mut exp: i64) -> Self {
        if frac == 0.0 {
            return ZERO;
        }
        // After a single arithmetic op the mantissa sits in [0.25, 2); the
        // loop runs at most twice.
        while frac.abs() >= 1.0 {
            frac *= 0.5;
            exp += 1;
        }
        while frac.abs() < 0.5 {
            frac *= 2.0;
            exp -= 1;
        }
        Scaled { frac, exp }
    }

    pub fn is_zero(self) -> bool {
        self.frac == 0.0
    }

    pub fn is_sign_positive(self) -> bool {
        self.frac > 0.0
    }

    pub fn abs(self) -> Self {
        Scaled { frac: self.frac.abs(), exp: self.exp }
    }

    pub fn recip(self) -> Self {
        assert!(self.frac != 0.0, "Scaled reciprocal of zero");
        Self::norm(1.0 / self.frac, -self.exp)
    }

    pub fn sqrt(self) -> Self {
        assert!(self.frac >= 0.0, "Scaled sqrt of negative value");
        if self.frac == 0.0 {
            return ZERO;
        }
        let (f, e) = if self.exp % 2 == 0 {
            (self.frac, self.exp)
        } else {
            (self.frac * 2.0, self.exp - 1)
        };
        Self::norm(f.sqrt(), e / 2)
    }

    /// Natural logarithm; panics on non-positive values.
    pub fn ln(self) -> f64 {
        assert!(self.frac > 0.0, "Scaled ln of non-positive value");
        self.frac.ln() + self.exp as f64 * std::f64::consts::LN_2
    }

    pub fn powi(self, n: i32) -> Self {
        let mut acc = ONE;
        let mut base = if n >= 0 { self } else { self.recip() };
        let mut k = n.unsigned_abs();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            k >>= 1;
        }
        acc
    }

    /// Exact `2^k`.
    pub fn exp2(k: i64) -> Self {
        Scaled { frac: 0.5, exp: k + 1 }
    }

    /// Relative difference |a-b| / max(|a|,|b|), 0 when both are zero.
    pub fn rel_diff(a: Scaled, b: Scaled) -> f64 {
        let d = (a - b).abs();
        let m = if a.abs() >= b.abs() { a.abs() } else { b.abs() };
        if m.is_zero() {
            return 0.0;
        }
        (d / m).to_f64()
    }
}

fn pow2(e: i64) -> f64 {
    // Split so the intermediate stays finite for the full representable span.
    if e >= -500 && e <= 500 {
        f64::powi(2.0, e as i32)
    } else if e > 0 {
        f64::powi(2.0, 500) * f64::powi(2.0, (e - 500) as i32)
    } else {
        f64::powi(2.0, -500) * f64::powi(2.0, (e + 500) as i32)
    }
}

impl Add for Scaled {
    type Output = Scaled;
    fn add(self, rhs: Scaled) -> Scaled {
        if self.frac == 0.0 {
            return rhs;
        }
        if rhs.frac == 0.0 {
            return self;
        }
        let (hi, lo) = if self.exp >= rhs.exp { (self, rhs) } else { (rhs, self) };
        let shift = hi.exp - lo.exp;
        if shift > 128 {
            return hi;
        }
        Scaled::norm(hi.frac + lo.frac * pow2(-shift), hi.exp)
    }
}

impl Sub for Scaled {
    type Output = Scaled;
    fn sub(self, rhs: Scaled) -> Scaled {
        self + (-rhs)
    }
}

impl Mul for Scaled {
    type Output = Scaled;
    fn mul(self, rhs: Scaled) -> Scaled {
        Scaled::norm(self.frac * rhs.frac, self.exp + rhs.exp)
    }
}

impl Div for Scaled {
    type Output = Scaled;
    fn div(self, rhs: Scaled) -> Scaled {
        assert!(rhs.frac != 0.0, "Scaled division by zero");
        Scaled::norm(self.frac / rhs.frac, self.exp - rhs.exp)
    }
}

impl Neg for Scaled {
    type Output = Scaled;
    fn neg(self) -> Scaled {
        Scaled { frac: -self.frac, exp: self.exp }
    }
}

impl AddAssign for Scaled {
    fn add_assign(&mut self, rhs: Scaled) {
        *self = *self + rhs;
    }
}

impl MulAssign for Scaled {
    fn mul_assign(&mut self, rhs: Scaled) {
        *self = *self * rhs;
    }
}

impl Mul<f64> for Scaled {
    type Output = Scaled;
    fn mul(self, rhs: f64) -> Scaled {
        self * Scaled::from_f64(rhs)
    }
}

impl PartialEq for Scaled {
    fn eq(&self, other: &Scaled) -> bool {
        self.frac == other.frac && (self.frac == 0.0 || self.exp == other.exp)
    }
}

impl PartialOrd for Scaled {
    fn partial_cmp(&self, other: &Scaled) -> Option<Ordering> {
        let d = *self - *other;
        if d.frac == 0.0 {
            Some(Ordering::Equal)
        } else if d.frac > 0.0 {
            Some(Ordering::Greater)
        } else {
            Some(Ordering::Less)
        }
    }
}

impl From<f64> for Scaled {
    fn from(x: f64) -> Self {
        Scaled::from_f64(x)
    }
}

impl fmt::Display for Scaled {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp.abs() < 512 {
            write!(f, "{}", self.to_f64())
        } else {
            write!(f, "{}*2^{}", self.frac, self.exp)
        }
    }
}
