//! Exact decimal literals for grid parameters.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hiprec::ExtReal;

/// `mantissa * 10^-scale`, kept exact so grid arithmetic never goes through
/// binary floating point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Decimal {
    mantissa: i64,
    scale: u32,
}

const MAX_SCALE: u32 = 12;

impl Decimal {
    pub const fn new(mantissa: i64, scale: u32) -> Self {
        Decimal { mantissa, scale }
    }

    pub fn from_int(v: i64) -> Self {
        Decimal::new(v, 0)
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0
    }

    /// Mantissa at a larger scale.
    fn at_scale(&self, scale: u32) -> Result<i64> {
        let k = scale - self.scale;
        10i64
            .checked_pow(k)
            .and_then(|p| self.mantissa.checked_mul(p))
            .ok_or_else(|| Error::Config(format!("decimal {self} overflows at scale {scale}")))
    }

    fn common_scale(&self, other: &Decimal) -> u32 {
        self.scale.max(other.scale)
    }

    pub fn checked_sub(&self, other: &Decimal) -> Result<Decimal> {
        let s = self.common_scale(other);
        let m = self.at_scale(s)? - other.at_scale(s)?;
        Ok(Decimal::new(m, s).normalized())
    }

    pub fn checked_add(&self, other: &Decimal) -> Result<Decimal> {
        let s = self.common_scale(other);
        let m = self.at_scale(s)? + other.at_scale(s)?;
        Ok(Decimal::new(m, s).normalized())
    }

    /// `self / other` when the quotient is an integer.
    pub fn exact_div(&self, other: &Decimal) -> Option<i64> {
        let s = self.common_scale(other);
        let a = self.at_scale(s).ok()?;
        let b = other.at_scale(s).ok()?;
        if b == 0 || a % b != 0 {
            return None;
        }
        Some(a / b)
    }

    /// `self + i * step` as an extended value, rounded once from the exact
    /// rational.
    pub fn offset_ext(&self, step: &Decimal, i: i64) -> ExtReal {
        let s = self.common_scale(step);
        let a = self.at_scale(s).expect("grid start fits");
        let b = step.at_scale(s).expect("grid step fits");
        let num = a as i128 + i as i128 * b as i128;
        let num = ExtReal::from_i64(num as i64);
        if s == 0 {
            num
        } else {
            num / ExtReal::from_i64(10i64.pow(s))
        }
    }

    pub fn to_ext(&self) -> ExtReal {
        self.offset_ext(&Decimal::from_int(0), 0)
    }

    pub fn to_f64(&self) -> f64 {
        self.to_ext().to_f64()
    }

    pub fn normalized(mut self) -> Decimal {
        while self.scale > 0 && self.mantissa % 10 == 0 {
            self.mantissa /= 10;
            self.scale -= 1;
        }
        self
    }

    /// Exact halving (used for step-halving studies).
    pub fn half(&self) -> Decimal {
        if self.mantissa % 2 == 0 {
            Decimal::new(self.mantissa / 2, self.scale)
        } else {
            Decimal::new(self.mantissa * 5, self.scale + 1)
        }
    }
}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Decimal {
    fn cmp(&self, other: &Self) -> Ordering {
        let s = self.common_scale(other);
        let a = self.mantissa as i128 * 10i128.pow(s - self.scale);
        let b = other.mantissa as i128 * 10i128.pow(s - other.scale);
        a.cmp(&b)
    }
}

impl FromStr for Decimal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid exact decimal {s:?}"));
        let s = s.trim();
        let (neg, body) = match s.strip_prefix('-') {
            Some(b) => (true, b),
            None => (false, s),
        };
        let (ip, fp) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if ip.is_empty() && fp.is_empty() {
            return Err(bad());
        }
        if !ip.bytes().chain(fp.bytes()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let scale = fp.len() as u32;
        if scale > MAX_SCALE {
            return Err(bad());
        }
        let digits = format!("{ip}{fp}");
        let m: i64 = digits.parse().map_err(|_| bad())?;
        Ok(Decimal::new(if neg { -m } else { m }, scale).normalized())
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.normalized();
        if d.scale == 0 {
            return write!(f, "{}", d.mantissa);
        }
        let neg = d.mantissa < 0;
        let digits = d.mantissa.unsigned_abs().to_string();
        let scale = d.scale as usize;
        let padded = if digits.len() <= scale {
            format!("{}{}", "0".repeat(scale + 1 - digits.len()), digits)
        } else {
            digits
        };
        let (ip, fp) = padded.split_at(padded.len() - scale);
        write!(f, "{}{}.{}", if neg { "-" } else { "" }, ip, fp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for s in ["0.003", "3600", "63000", "0.05", "-1.5", "0.0015"] {
            let d: Decimal = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert_eq!("3600.000".parse::<Decimal>().unwrap().to_string(), "3600");
        assert!("1e5".parse::<Decimal>().is_err());
        assert!("".parse::<Decimal>().is_err());
    }

    #[test]
    fn exact_division_counts() {
        let s: Decimal = "3600".parse().unwrap();
        let h: Decimal = "0.003".parse().unwrap();
        assert_eq!(s.exact_div(&h), Some(1_200_000));
        let r: Decimal = "63000".parse().unwrap();
        let w: Decimal = "0.05".parse().unwrap();
        assert_eq!(r.checked_sub(&s).unwrap().exact_div(&w), Some(1_188_000));
        assert_eq!(r.exact_div(&"0.11".parse().unwrap()), None);
    }

    #[test]
    fn halving() {
        let h: Decimal = "0.003".parse().unwrap();
        assert_eq!(h.half().to_string(), "0.0015");
        assert_eq!("0.05".parse::<Decimal>().unwrap().half().to_string(), "0.025");
    }
}
