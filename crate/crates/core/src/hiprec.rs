//! Paired-float extended precision.
//!
//! An [`ExtReal`] is an unevaluated sum `hi + lo` of two IEEE doubles with
//! `|lo| <= ulp(hi) / 2`, giving roughly 106 bits (about 31 decimal digits) of
//! significand. The arithmetic follows the classical error-free transformations
//! (`two_sum`, `two_prod` via fused multiply-add), so every operation is pure
//! and deterministic across platforms with correctly rounded FMA.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest argument accepted by [`sincos_reduced`].
pub const SINCOS_MAX_ARG: f64 = 1.0e5;

// pi split into three doubles, about 160 significant bits.
const PI_0: f64 = std::f64::consts::PI;
const PI_1: f64 = 1.2246467991473532e-16;
const PI_2: f64 = -2.9947698097183397e-33;

#[inline(always)]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

#[inline(always)]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

#[inline(always)]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExtReal {
    hi: f64,
    lo: f64,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal { hi: 0.0, lo: 0.0 };
    pub const ONE: ExtReal = ExtReal { hi: 1.0, lo: 0.0 };
    pub const PI: ExtReal = ExtReal { hi: PI_0, lo: PI_1 };
    pub const FRAC_PI_2: ExtReal = ExtReal {
        hi: PI_0 * 0.5,
        lo: PI_1 * 0.5,
    };
    pub const FRAC_PI_4: ExtReal = ExtReal {
        hi: PI_0 * 0.25,
        lo: PI_1 * 0.25,
    };
    /// sqrt(1/2)
    pub const FRAC_1_SQRT_2: ExtReal = ExtReal {
        hi: std::f64::consts::FRAC_1_SQRT_2,
        lo: -4.833646656726457e-17,
    };

    /// Builds a value from two components, renormalizing them.
    #[inline]
    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        ExtReal { hi, lo }
    }

    /// Reassembles a value from stored components without renormalizing.
    #[inline]
    pub const fn from_parts(hi: f64, lo: f64) -> Self {
        ExtReal { hi, lo }
    }

    #[inline]
    pub const fn from_f64(x: f64) -> Self {
        ExtReal { hi: x, lo: 0.0 }
    }

    /// Exact conversion of any 64-bit integer.
    pub fn from_i64(x: i64) -> Self {
        let hi = x as f64;
        // hi is within 2^10 of x, so the difference fits in an i64 and in an f64.
        let rest = (x as i128 - hi as i128) as f64;
        ExtReal::new(hi, rest)
    }

    #[inline]
    pub fn hi(self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn lo(self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.hi == 0.0
    }

    #[inline]
    pub fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    #[inline]
    pub fn signum(self) -> f64 {
        if self.hi > 0.0 {
            1.0
        } else if self.hi < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    #[inline]
    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let e = self.lo.mul_add(b, e);
        let (hi, lo) = quick_two_sum(p, e);
        ExtReal { hi, lo }
    }

    /// Division by a double, IEEE semantics (division by zero gives inf/NaN).
    #[inline]
    pub fn div_f64(self, b: f64) -> Self {
        let q1 = self.hi / b;
        let (p, e) = two_prod(q1, b);
        let (s, t) = two_sum(self.hi, -p);
        let t = t - e + self.lo;
        let q2 = (s + t) / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        ExtReal { hi, lo }
    }

    #[inline]
    pub fn square(self) -> Self {
        let (p, e) = two_prod(self.hi, self.hi);
        let e = e + 2.0 * self.hi * self.lo;
        let (hi, lo) = quick_two_sum(p, e);
        ExtReal { hi, lo }
    }

    /// Reciprocal with IEEE semantics.
    #[inline]
    pub fn recip(self) -> Self {
        ExtReal::ONE / self
    }

    pub fn checked_div(self, rhs: ExtReal) -> Result<Self> {
        if rhs.is_zero() {
            return Err(Error::Domain("division by zero".into()));
        }
        Ok(self / rhs)
    }

    /// Square root; negative input is a domain error.
    pub fn sqrt(self) -> Result<Self> {
        if self.hi < 0.0 {
            return Err(Error::Domain(format!("sqrt of negative value {}", self.hi)));
        }
        Ok(self.sqrt_unchecked())
    }

    fn sqrt_unchecked(self) -> Self {
        if self.hi == 0.0 {
            return ExtReal::ZERO;
        }
        // One Newton step on the double-precision estimate (Karp's trick).
        let x = 1.0 / self.hi.sqrt();
        let ax = self.hi * x;
        let resid = self - ExtReal::from_f64(ax).square();
        let (hi, lo) = two_sum(ax, resid.hi * (x * 0.5));
        ExtReal::new(hi, lo)
    }

    pub fn floor(self) -> Self {
        let hi = self.hi.floor();
        if hi == self.hi {
            ExtReal::new(hi, self.lo.floor())
        } else {
            ExtReal { hi, lo: 0.0 }
        }
    }

    /// Nearest integer, ties away from zero on the leading component.
    pub fn round(self) -> Self {
        let hi = self.hi.round();
        if hi == self.hi {
            ExtReal::new(hi, self.lo.round())
        } else if (hi - self.hi).abs() == 0.5 {
            // tie on hi: the trailing part decides
            let adj = if self.lo > 0.0 && hi < self.hi {
                1.0
            } else if self.lo < 0.0 && hi > self.hi {
                -1.0
            } else {
                0.0
            };
            ExtReal::from_f64(hi + adj)
        } else {
            ExtReal::from_f64(hi)
        }
    }

    pub fn powi(self, n: i32) -> Self {
        if n == 0 {
            return ExtReal::ONE;
        }
        let mut base = self;
        let mut e = n.unsigned_abs();
        let mut acc = ExtReal::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base = base.square();
            e >>= 1;
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }

    /// Cube root to extended precision (Newton polish of the double estimate).
    pub fn cbrt(self) -> Self {
        if self.hi == 0.0 {
            return ExtReal::ZERO;
        }
        let mut y = ExtReal::from_f64(self.hi.cbrt());
        for _ in 0..2 {
            // y <- y - (y^3 - x) / (3 y^2)
            let y2 = y.square();
            y = y - (y2 * y - self) / y2.mul_f64(3.0);
        }
        y
    }

    /// Formats the value with `digits` significant decimal digits in
    /// scientific notation.
    pub fn to_sci_string(self, digits: usize) -> String {
        if !self.is_finite() {
            return format!("{}", self.hi);
        }
        if self.is_zero() {
            return format!("0.{}e0", "0".repeat(digits.saturating_sub(1)));
        }
        let neg = self.hi < 0.0;
        let mut x = self.abs();
        let mut exp = x.hi.log10().floor() as i32;
        x *= ExtReal::from_f64(10.0).powi(-exp);
        while x >= ExtReal::from_f64(10.0) {
            x = x.div_f64(10.0);
            exp += 1;
        }
        while x < ExtReal::ONE {
            x = x.mul_f64(10.0);
            exp -= 1;
        }
        let mut ds = Vec::with_capacity(digits + 1);
        for _ in 0..=digits {
            let d = x.hi.floor().clamp(0.0, 9.0);
            ds.push(d as u8);
            x = (x - ExtReal::from_f64(d)).mul_f64(10.0);
        }
        // round half up on the guard digit
        let round_up = ds.pop().map(|g| g >= 5).unwrap_or(false);
        if round_up {
            let mut i = ds.len();
            loop {
                if i == 0 {
                    ds.insert(0, 1);
                    ds.pop();
                    exp += 1;
                    break;
                }
                i -= 1;
                if ds[i] == 9 {
                    ds[i] = 0;
                } else {
                    ds[i] += 1;
                    break;
                }
            }
        }
        let mut s = String::new();
        if neg {
            s.push('-');
        }
        s.push((b'0' + ds[0]) as char);
        if ds.len() > 1 {
            s.push('.');
            for d in &ds[1..] {
                s.push((b'0' + d) as char);
            }
        }
        s.push('e');
        s.push_str(&exp.to_string());
        s
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        ExtReal::from_f64(x)
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    #[inline]
    fn add(self, b: ExtReal) -> ExtReal {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let s2 = s2 + t1;
        let (s1, s2) = quick_two_sum(s1, s2);
        let s2 = s2 + t2;
        let (hi, lo) = quick_two_sum(s1, s2);
        ExtReal { hi, lo }
    }
}

impl Sub for ExtReal {
    type Output = ExtReal;
    #[inline]
    fn sub(self, b: ExtReal) -> ExtReal {
        self + (-b)
    }
}

impl Neg for ExtReal {
    type Output = ExtReal;
    #[inline]
    fn neg(self) -> ExtReal {
        ExtReal {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Mul for ExtReal {
    type Output = ExtReal;
    #[inline]
    fn mul(self, b: ExtReal) -> ExtReal {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = self.hi.mul_add(b.lo, self.lo.mul_add(b.hi, e));
        let (hi, lo) = quick_two_sum(p, e);
        ExtReal { hi, lo }
    }
}

impl Div for ExtReal {
    type Output = ExtReal;
    fn div(self, b: ExtReal) -> ExtReal {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (q1, q2) = quick_two_sum(q1, q2);
        ExtReal { hi: q1, lo: q2 } + ExtReal::from_f64(q3)
    }
}

impl AddAssign for ExtReal {
    #[inline]
    fn add_assign(&mut self, b: ExtReal) {
        *self = *self + b;
    }
}

impl SubAssign for ExtReal {
    #[inline]
    fn sub_assign(&mut self, b: ExtReal) {
        *self = *self - b;
    }
}

impl MulAssign for ExtReal {
    #[inline]
    fn mul_assign(&mut self, b: ExtReal) {
        *self = *self * b;
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            o => o,
        }
    }
}

impl Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(ExtReal::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = f.precision().unwrap_or(32);
        f.write_str(&self.to_sci_string(digits))
    }
}

impl FromStr for ExtReal {
    type Err = Error;

    /// Parses `[-]digits[.digits][e[-]digits]`. Up to 31 significant digits
    /// are represented exactly before the final power-of-ten scaling.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("invalid decimal literal {s:?}"));
        let s = s.trim();
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (mant, exp_part) = match body.find(['e', 'E']) {
            Some(i) => (&body[..i], Some(&body[i + 1..])),
            None => (body, None),
        };
        let mut exp10: i32 = match exp_part {
            Some(e) => e.parse().map_err(|_| bad())?,
            None => 0,
        };
        let (int_part, frac_part) = match mant.find('.') {
            Some(i) => (&mant[..i], &mant[i + 1..]),
            None => (mant, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        let mut acc = ExtReal::ZERO;
        // accumulate in chunks of 15 digits so each step is an exact double
        let digits: Vec<u8> = int_part
            .bytes()
            .chain(frac_part.bytes())
            .map(|c| if c.is_ascii_digit() { Ok(c - b'0') } else { Err(bad()) })
            .collect::<Result<_>>()?;
        exp10 -= frac_part.len() as i32;
        for chunk in digits.chunks(15) {
            let mut v: u64 = 0;
            for &d in chunk {
                v = v * 10 + d as u64;
            }
            acc = acc.mul_f64(10f64.powi(chunk.len() as i32)) + ExtReal::from_f64(v as f64);
        }
        let scaled = if exp10 >= 0 {
            acc * ExtReal::from_f64(10.0).powi(exp10)
        } else {
            acc / ExtReal::from_f64(10.0).powi(-exp10)
        };
        Ok(if neg { -scaled } else { scaled })
    }
}

/// Sine and cosine of `r` for `0 <= r <= 1e5`.
///
/// The argument is reduced modulo pi/2 against a three-double pi constant
/// (about 160 bits), then both functions are evaluated by Taylor series on
/// `[-pi/4, pi/4]`.
pub fn sincos_reduced(r: ExtReal) -> Result<(ExtReal, ExtReal)> {
    if !(r.hi >= 0.0 && r.hi <= SINCOS_MAX_ARG) {
        return Err(Error::Domain(format!(
            "sincos argument {} outside [0, {SINCOS_MAX_ARG}]",
            r.hi
        )));
    }
    Ok(sincos_any(r))
}

/// Reduction without the range guard; accurate while `|r| < 2^20`.
pub(crate) fn sincos_any(r: ExtReal) -> (ExtReal, ExtReal) {
    let k = (r.hi / (PI_0 * 0.5)).round();
    let y = if k == 0.0 {
        r
    } else {
        // k < 2^20, so each k * PI_i product is captured exactly by two_prod
        let (p0, e0) = two_prod(k, PI_0 * 0.5);
        let (p1, e1) = two_prod(k, PI_1 * 0.5);
        let p2 = k * (PI_2 * 0.5);
        r - ExtReal::new(p0, e0) - ExtReal::new(p1, e1) - ExtReal::from_f64(p2)
    };
    let (s, c) = sincos_taylor(y);
    match (k as i64).rem_euclid(4) {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

fn sincos_taylor(y: ExtReal) -> (ExtReal, ExtReal) {
    const TERMS: u32 = 16;
    let y2 = y.square();
    let mut s = ExtReal::ONE;
    let mut c = ExtReal::ONE;
    for k in (1..=TERMS).rev() {
        let k = k as f64;
        s = ExtReal::ONE - (y2 * s).div_f64((2.0 * k) * (2.0 * k + 1.0));
        c = ExtReal::ONE - (y2 * c).div_f64((2.0 * k - 1.0) * (2.0 * k));
    }
    (y * s, c)
}

/// `(sin θ, cos θ)` for the Bessel phase `θ = r - π/4`.
pub fn phase_sincos(r: ExtReal) -> Result<(ExtReal, ExtReal)> {
    let (s, c) = sincos_reduced(r)?;
    let h = ExtReal::FRAC_1_SQRT_2;
    Ok(((s - c) * h, (c + s) * h))
}

/// `cos(θ - nπ/2)` and `sin(θ - nπ/2)` from `(sin θ, cos θ)`; valid for negative `n`.
#[inline]
pub fn shift_quarter_turns(sin_t: ExtReal, cos_t: ExtReal, n: i64) -> (ExtReal, ExtReal) {
    match n.rem_euclid(4) {
        0 => (cos_t, sin_t),
        1 => (sin_t, -cos_t),
        2 => (-cos_t, -sin_t),
        _ => (-sin_t, cos_t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: ExtReal, b: ExtReal, tol: f64) -> bool {
        (a - b).abs().to_f64() <= tol
    }

    #[test]
    fn small_integer_arithmetic_is_exact() {
        let two = ExtReal::from_f64(2.0);
        let three = ExtReal::from_f64(3.0);
        assert_eq!(two + three, ExtReal::from_f64(5.0));
        assert_eq!(two * three, ExtReal::from_f64(6.0));
        assert_eq!(two + ExtReal::ZERO, two);
    }

    #[test]
    fn cancellation_keeps_trailing_component() {
        let a = ExtReal::new(1.0, 2f64.powi(-60));
        let b = ExtReal::from_f64(-1.0);
        let s = a + b;
        assert_eq!(s.hi(), 2f64.powi(-60));
        assert_eq!(s.lo(), 0.0);
    }

    #[test]
    fn sqrt_round_trip() {
        let two = ExtReal::from_f64(2.0);
        let r = two.sqrt().unwrap();
        assert!(close(r.square(), two, 2e-31));
        assert!(ExtReal::from_f64(-1.0).sqrt().is_err());
        assert!(ExtReal::ONE.checked_div(ExtReal::ZERO).is_err());
    }

    #[test]
    fn one_third_to_thirty_digits() {
        let third = ExtReal::ONE / ExtReal::from_f64(3.0);
        let s = third.to_sci_string(31);
        assert!(s.starts_with("3.333333333333333333333333333333"), "{s}");
    }

    #[test]
    fn frac_1_sqrt_2_constant() {
        let h = ExtReal::from_f64(0.5).sqrt().unwrap();
        assert!(close(h, ExtReal::FRAC_1_SQRT_2, 4e-32));
    }

    #[test]
    fn parse_decimal() {
        let x: ExtReal = "0.003".parse().unwrap();
        let y = ExtReal::from_f64(3.0) / ExtReal::from_f64(1000.0);
        assert!(close(x, y, 1e-34));
        let z: ExtReal = "-1.25e2".parse().unwrap();
        assert_eq!(z, ExtReal::from_f64(-125.0));
        assert!("1.2.3".parse::<ExtReal>().is_err());
        assert!("".parse::<ExtReal>().is_err());
    }

    #[test]
    fn sincos_special_points() {
        let (s, c) = sincos_reduced(ExtReal::ZERO).unwrap();
        assert_eq!(s, ExtReal::ZERO);
        assert_eq!(c, ExtReal::ONE);
        let (s, c) = sincos_reduced(ExtReal::FRAC_PI_4).unwrap();
        assert!(close(s, ExtReal::FRAC_1_SQRT_2, 1e-28));
        assert!(close(c, ExtReal::FRAC_1_SQRT_2, 1e-28));
        assert!(sincos_reduced(ExtReal::from_f64(-1.0)).is_err());
        assert!(sincos_reduced(ExtReal::from_f64(1.0e5 + 1.0)).is_err());
    }

    #[test]
    fn quarter_turn_shifts() {
        let t = ExtReal::from_f64(0.3);
        let (s, c) = sincos_any(t);
        for n in -7i64..=7 {
            let (cs, ss) = shift_quarter_turns(s, c, n);
            let arg = t - ExtReal::FRAC_PI_2.mul_f64(n as f64);
            let (s2, c2) = sincos_any(arg);
            assert!(close(cs, c2, 1e-30), "n={n}");
            assert!(close(ss, s2, 1e-30), "n={n}");
        }
    }

    #[test]
    fn floor_and_round() {
        let x = ExtReal::new(5.0, -1e-20);
        assert_eq!(x.floor(), ExtReal::from_f64(4.0));
        assert_eq!(x.round(), ExtReal::from_f64(5.0));
        assert_eq!(ExtReal::from_f64(2.7).floor(), ExtReal::from_f64(2.0));
    }

    #[test]
    fn from_i64_exact() {
        let big = (1i64 << 60) + 3;
        let x = ExtReal::from_i64(big);
        assert_eq!(x.hi() as i128 + x.lo() as i128, big as i128);
    }

    #[test]
    fn cbrt_polish() {
        let x = ExtReal::from_f64(2000.0);
        let c = x.cbrt();
        assert!(close(c * c * c, x, 1e-27));
    }
}
