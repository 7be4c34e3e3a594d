//! Bessel functions of the first kind for integer orders `0..=61`.
//!
//! One call to [`eval_column`] produces every order at a single abscissa.
//! Three evaluation routes are used depending on `r`:
//!
//! * `r < 2`: the ascending power series, order by order;
//! * `2 <= r < 2000`: Miller's downward recurrence normalized with
//!   `J_0 + 2 Σ J_{2k} = 1`;
//! * `r >= 2000`: the Hankel large-argument expansion.
//!
//! All three run in [`ExtReal`] and target an absolute error below `1e-18`.

mod cache;

pub use cache::{write_grid_cache, GridCache};

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::decimal::Decimal;
use crate::error::{Error, Result};
use crate::hiprec::{phase_sincos, shift_quarter_turns, ExtReal, SINCOS_MAX_ARG};

/// Highest supported order.
pub const MAX_ORDER: usize = 61;
/// Below this abscissa the power series is used.
pub const SERIES_LIMIT: f64 = 2.0;
/// At and above this abscissa the Hankel expansion is used.
pub const R_SWITCH: f64 = 2000.0;

const HANKEL_TOL: f64 = 1e-24;
const HANKEL_TERMS: usize = 40;

/// All orders `0..=n_max` at one abscissa.
#[derive(Clone, Debug, PartialEq)]
pub struct BesselColumn {
    pub r: ExtReal,
    values: Vec<ExtReal>,
}

impl BesselColumn {
    pub fn new(r: ExtReal, values: Vec<ExtReal>) -> Self {
        BesselColumn { r, values }
    }

    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[ExtReal] {
        &self.values
    }

    /// `J_k(r)` for any integer `k` with `|k| <= n_max`, using
    /// `J_{-k} = (-1)^k J_k`.
    #[inline]
    pub fn order(&self, k: i32) -> ExtReal {
        let v = self.values[k.unsigned_abs() as usize];
        if k < 0 && k % 2 != 0 {
            -v
        } else {
            v
        }
    }
}

/// Uniform grid `start, start + step, ..., end` with an order cap.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridSpec {
    pub start: Decimal,
    pub end: Decimal,
    pub step: Decimal,
    pub n_max: usize,
}

impl GridSpec {
    pub fn new(start: Decimal, end: Decimal, step: Decimal, n_max: usize) -> Result<Self> {
        if n_max > MAX_ORDER {
            return Err(Error::Domain(format!("order cap {n_max} exceeds {MAX_ORDER}")));
        }
        if step <= Decimal::from_int(0) || end <= start || start < Decimal::from_int(0) {
            return Err(Error::Config(format!(
                "bad grid [{start}, {end}] step {step}"
            )));
        }
        let spec = GridSpec {
            start,
            end,
            step,
            n_max,
        };
        spec.intervals()?;
        Ok(spec)
    }

    /// Parses decimal strings.
    pub fn parse(start: &str, end: &str, step: &str, n_max: usize) -> Result<Self> {
        GridSpec::new(start.parse()?, end.parse()?, step.parse()?, n_max)
    }

    /// Number of steps between `start` and `end`.
    pub fn intervals(&self) -> Result<u64> {
        let span = self.end.checked_sub(&self.start)?;
        span.exact_div(&self.step)
            .filter(|n| *n > 0)
            .map(|n| n as u64)
            .ok_or_else(|| {
                Error::Config(format!(
                    "span [{}, {}] is not a whole number of steps {}",
                    self.start, self.end, self.step
                ))
            })
    }

    /// Checks that the step count is a multiple of a quadrature panel width.
    pub fn check_panels(&self, width: u64) -> Result<()> {
        let n = self.intervals()?;
        if n % width != 0 {
            return Err(Error::Config(format!(
                "{n} steps over [{}, {}] not divisible by panel width {width}",
                self.start, self.end
            )));
        }
        Ok(())
    }

    /// Index of the first streamed point. The origin is never streamed:
    /// `J_n(0)` is trivial and every moment integrand carries a factor `r`.
    pub fn first_index(&self) -> u64 {
        if self.start.is_zero() {
            1
        } else {
            0
        }
    }

    /// Number of streamed columns.
    pub fn column_count(&self) -> u64 {
        self.intervals().expect("validated") + 1 - self.first_index()
    }

    /// Abscissa of grid point `i` (`i = 0` is `start`).
    pub fn abscissa(&self, i: u64) -> ExtReal {
        self.start.offset_ext(&self.step, i as i64)
    }

    /// Stable textual form used for hashing and file headers.
    pub fn canonical(&self) -> String {
        format!("start={};end={};step={}", self.start, self.end, self.step)
    }
}

fn domain_check(r: ExtReal, n_max: usize) -> Result<()> {
    if n_max > MAX_ORDER {
        return Err(Error::Domain(format!("order cap {n_max} exceeds {MAX_ORDER}")));
    }
    if !(r.hi() > 0.0) || r.hi() > SINCOS_MAX_ARG {
        return Err(Error::Domain(format!(
            "abscissa {} outside (0, {SINCOS_MAX_ARG}]",
            r.hi()
        )));
    }
    Ok(())
}

/// `J_0(r), ..., J_{n_max}(r)`.
pub fn eval_column(r: ExtReal, n_max: usize) -> Result<BesselColumn> {
    domain_check(r, n_max)?;
    let values = if r.hi() < SERIES_LIMIT {
        eval_series(r, n_max)
    } else if r.hi() < R_SWITCH {
        eval_miller(r, n_max)
    } else {
        eval_hankel(r, n_max)
    };
    Ok(BesselColumn::new(r, values))
}

/// Ascending series `Σ_k (-1)^k (r/2)^{2k+n} / (k! (n+k)!)`.
pub fn eval_series(r: ExtReal, n_max: usize) -> Vec<ExtReal> {
    let x = r.mul_f64(0.5);
    let x2 = x.square();
    let mut lead = ExtReal::ONE;
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            lead = (lead * x).div_f64(n as f64);
        }
        let mut term = lead;
        let mut sum = lead;
        for k in 1..200 {
            term = -(term * x2).div_f64((k * (n + k)) as f64);
            sum += term;
            if term.abs().hi() <= 1e-36 * sum.abs().hi() {
                break;
            }
        }
        out.push(sum);
    }
    out
}

/// Starting order for the downward recurrence.
pub fn miller_start_order(r: f64, n_max: usize) -> usize {
    let m = (r + 30.0 * r.cbrt() + 60.0).ceil() as usize;
    let m = m.max(n_max + 20);
    m + (m & 1)
}

/// Miller's algorithm: recur `f_{n-1} = (2n/r) f_n - f_{n+1}` downward from
/// a trial start, then normalize with `J_0 + 2 Σ_{k>=1} J_{2k} = 1`.
pub fn eval_miller(r: ExtReal, n_max: usize) -> Vec<ExtReal> {
    // exact power-of-two rescaling keeps the recurrence bitwise reproducible
    const BIG: f64 = 1e250;
    let scale = 2f64.powi(-830);

    let m = miller_start_order(r.hi(), n_max);
    let two_over_r = ExtReal::from_f64(2.0) / r;
    let mut values = vec![ExtReal::ZERO; n_max + 1];
    let mut f_next = ExtReal::ZERO; // f_{n+1}
    let mut f = ExtReal::from_f64(1e-280); // f_n, n = m
    let mut norm = ExtReal::ZERO;
    let mut n = m;
    loop {
        if n <= n_max {
            values[n] = f;
        }
        if n.is_multiple_of(2) {
            norm += if n == 0 { f } else { f.mul_f64(2.0) };
        }
        if n == 0 {
            break;
        }
        let f_prev = (two_over_r * f).mul_f64(n as f64) - f_next;
        f_next = f;
        f = f_prev;
        n -= 1;
        if f.hi().abs() > BIG {
            f = f.mul_f64(scale);
            f_next = f_next.mul_f64(scale);
            norm = norm.mul_f64(scale);
            for v in values.iter_mut().skip(n + 1) {
                *v = v.mul_f64(scale);
            }
        }
    }
    let inv = norm.recip();
    for v in &mut values {
        *v *= inv;
    }
    values
}

fn hankel_coefficients() -> &'static [Vec<ExtReal>] {
    static TABLE: OnceLock<Vec<Vec<ExtReal>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..=MAX_ORDER)
            .map(|n| {
                let mu = 4.0 * (n * n) as f64;
                let mut a = Vec::with_capacity(HANKEL_TERMS + 1);
                let mut cur = ExtReal::ONE;
                a.push(cur);
                for k in 1..=HANKEL_TERMS {
                    let odd = (2 * k - 1) as f64;
                    cur = cur.mul_f64(mu - odd * odd).div_f64(8.0 * k as f64);
                    a.push(cur);
                }
                a
            })
            .collect()
    })
}

/// Hankel expansion `J_n = sqrt(2/(πr)) (P cos ω_n - Q sin ω_n)` with
/// `ω_n = r - π/4 - nπ/2`. Each series is truncated once a term drops below
/// `1e-24`, capped at 40 terms.
pub fn eval_hankel(r: ExtReal, n_max: usize) -> Vec<ExtReal> {
    let coeffs = hankel_coefficients();
    let (sin_t, cos_t) = phase_sincos(r).expect("abscissa validated by caller");
    let pref = (ExtReal::from_f64(2.0) / (ExtReal::PI * r))
        .sqrt()
        .expect("positive");
    let rinv = r.recip();
    let mut powers = Vec::with_capacity(HANKEL_TERMS + 1);
    let mut p = ExtReal::ONE;
    for _ in 0..=HANKEL_TERMS {
        powers.push(p);
        p *= rinv;
    }
    (0..=n_max)
        .map(|n| {
            let a = &coeffs[n];
            let mut pp = ExtReal::ZERO;
            let mut qq = ExtReal::ZERO;
            for k in 0..=HANKEL_TERMS {
                let t = a[k] * powers[k];
                if k > 0 && t.hi().abs() < HANKEL_TOL {
                    break;
                }
                match k % 4 {
                    0 => pp += t,
                    1 => qq += t,
                    2 => pp -= t,
                    _ => qq -= t,
                }
            }
            let (c, s) = shift_quarter_turns(sin_t, cos_t, n as i64);
            pref * (pp * c - qq * s)
        })
        .collect()
}

fn asymptotic_parts(n: i64, z: ExtReal) -> Result<(ExtReal, ExtReal, ExtReal)> {
    let nh = n.unsigned_abs().max(1) as f64;
    if !(z.hi() > nh * nh) {
        return Err(Error::Domain(format!(
            "asymptotic form needs z > {}, got {}",
            nh * nh,
            z.hi()
        )));
    }
    let (sin_t, cos_t) = phase_sincos(z)?;
    let (c, s) = shift_quarter_turns(sin_t, cos_t, n);
    let pref = (ExtReal::from_f64(2.0) / (ExtReal::PI * z)).sqrt()?;
    Ok((pref, c, s))
}

/// Leading large-argument term `(2/(πz))^{1/2} cos(ω_n)`; requires
/// `z > max(1, |n|)^2`.
pub fn asymptotic_main(n: i64, z: ExtReal) -> Result<ExtReal> {
    let (pref, c, _) = asymptotic_parts(n, z)?;
    Ok(pref * c)
}

/// Two-term form `(2/(πz))^{1/2} [cos ω_n - (4n^2 - 1)/(8z) sin ω_n]`.
pub fn asymptotic_refined(n: i64, z: ExtReal) -> Result<ExtReal> {
    let (pref, c, s) = asymptotic_parts(n, z)?;
    let mu = ExtReal::from_f64((4 * n * n - 1) as f64);
    let corr = mu / z.mul_f64(8.0);
    Ok(pref * (c - corr * s))
}

/// Summary of a completed [`stream_grid`] pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamSummary {
    pub columns: u64,
    pub chunks: u64,
    /// Orders `0..=n_max` were produced for every column.
    pub n_max: usize,
}

/// Computes the columns with global indices `first..last` (exclusive).
pub fn compute_columns(spec: &GridSpec, first: u64, last: u64) -> Vec<BesselColumn> {
    (first..last)
        .into_par_iter()
        .map(|i| eval_column(spec.abscissa(i), spec.n_max).expect("grid abscissa in range"))
        .collect()
}

/// Streams every column of `spec` in ascending `r`, `chunk` columns at a
/// time. Columns inside a chunk are computed in parallel; delivery to
/// `consumer` is sequential and in grid order.
pub fn stream_grid<F>(spec: &GridSpec, chunk: usize, mut consumer: F) -> Result<StreamSummary>
where
    F: FnMut(&[BesselColumn]) -> Result<()>,
{
    if chunk == 0 {
        return Err(Error::Config("chunk size must be positive".into()));
    }
    let first = spec.first_index();
    let last = spec.intervals()? + 1;
    if spec.end.to_f64() > SINCOS_MAX_ARG {
        return Err(Error::Domain(format!("grid end {} too large", spec.end)));
    }
    let mut chunks = 0;
    let mut i = first;
    while i < last {
        let j = (i + chunk as u64).min(last);
        let cols = compute_columns(spec, i, j);
        consumer(&cols).map_err(|e| match e {
            Error::Consumer(m) => Error::Consumer(m),
            other => Error::Consumer(other.to_string()),
        })?;
        chunks += 1;
        i = j;
    }
    Ok(StreamSummary {
        columns: last - first,
        chunks,
        n_max: spec.n_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ext(x: f64) -> ExtReal {
        ExtReal::from_f64(x)
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(eval_column(ext(0.0), 10).is_err());
        assert!(eval_column(ext(-1.0), 10).is_err());
        assert!(eval_column(ext(1.0), 62).is_err());
        assert!(asymptotic_main(10, ext(99.0)).is_err());
        assert!(asymptotic_refined(0, ext(0.5)).is_err());
    }

    #[test]
    fn small_argument_limit() {
        let c = eval_column(ext(1e-12), 5).unwrap();
        assert!((c.values()[0] - ExtReal::ONE).abs().to_f64() < 1e-24);
        for n in 1..=5 {
            assert!(c.values()[n].abs().to_f64() < 1e-11);
        }
    }

    #[test]
    fn negative_orders_follow_sign_rule() {
        let c = eval_column(ext(7.5), 4).unwrap();
        assert_eq!(c.order(-1), -c.order(1));
        assert_eq!(c.order(-2), c.order(2));
        assert_eq!(c.order(-3), -c.order(3));
    }

    #[test]
    fn series_and_miller_agree_near_switch() {
        for &r in &[1.5, 1.999, 2.0, 2.5] {
            let a = eval_series(ext(r), MAX_ORDER);
            let b = eval_miller(ext(r), MAX_ORDER);
            for n in 0..=MAX_ORDER {
                assert!((a[n] - b[n]).abs().to_f64() < 1e-24, "r={r} n={n}");
            }
        }
    }

    #[test]
    fn miller_and_hankel_agree_at_switch() {
        let r = ext(R_SWITCH);
        let a = eval_miller(r, MAX_ORDER);
        let b = eval_hankel(r, MAX_ORDER);
        for n in 0..=MAX_ORDER {
            assert!((a[n] - b[n]).abs().to_f64() < 1e-19, "n={n} {}", (a[n] - b[n]).to_f64());
        }
    }

    #[test]
    fn phase_shift_relation() {
        // ω_2 = ω_0 - π, so the main terms differ by sign
        let z = ext(12345.678);
        let a = asymptotic_main(0, z).unwrap();
        let b = asymptotic_main(2, z).unwrap();
        assert!((a + b).abs().to_f64() < 1e-30);
    }

    #[test]
    fn main_term_at_zero_phase() {
        // z = π/4 + 2π·1000 gives ω_0 = 0
        let z = ExtReal::FRAC_PI_4 + ExtReal::PI.mul_f64(2000.0);
        let main = asymptotic_main(0, z).unwrap();
        let refined = asymptotic_refined(0, z).unwrap();
        let expect = (ExtReal::from_f64(2.0) / (ExtReal::PI * z)).sqrt().unwrap();
        assert!((main - expect).abs().to_f64() < 1e-28);
        assert!((refined - main).abs().to_f64() < 1e-28);
    }

    #[test]
    fn grid_spec_counts() {
        let g = GridSpec::parse("3600", "3600.3", "0.05", 5).unwrap();
        assert_eq!(g.column_count(), 7);
        let head = GridSpec::parse("0", "3600", "0.003", 61).unwrap();
        assert_eq!(head.column_count(), 1_200_000);
        head.check_panels(6).unwrap();
        let mid = GridSpec::parse("3600", "63000", "0.05", 61).unwrap();
        mid.check_panels(6).unwrap();
        assert!(GridSpec::parse("0", "1", "0.3", 5).is_err());
        assert!(GridSpec::parse("0", "1", "0.1", 62).is_err());
        assert!(GridSpec::parse("0", "1.2", "0.1", 5).unwrap().check_panels(5).is_err());
    }

    #[test]
    fn stream_delivers_in_order_and_propagates_errors() {
        let g = GridSpec::parse("3600", "3600.3", "0.05", 5).unwrap();
        let mut seen = Vec::new();
        let s = stream_grid(&g, 3, |cols| {
            seen.extend(cols.iter().map(|c| c.r.to_f64()));
            Ok(())
        })
        .unwrap();
        assert_eq!(s.columns, 7);
        assert_eq!(s.chunks, 3);
        assert_eq!(seen.len(), 7);
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
        let err = stream_grid(&g, 2, |_| Err(Error::Consumer("stop".into())));
        assert!(matches!(err, Err(Error::Consumer(_))));
    }
}
