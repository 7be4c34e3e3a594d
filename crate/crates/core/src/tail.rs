//! The radial tail `∫_{r0}^∞ r Π_j J_{k_j}(r) dr`.
//!
//! Every Bessel factor is replaced by its leading large-argument term
//! `(2/(πr))^{1/2} cos(ω_k)`, `ω_k = r - π/4 - kπ/2`. The resulting product of
//! cosines is a trigonometric polynomial in `θ = r - π/4`, and each harmonic
//! is integrated against the power weight by repeated integration by parts.
//! The neglected cross terms are covered by the bounds `E3..E6`.

use crate::error::{Error, Result};
use crate::hiprec::{phase_sincos, ExtReal};
use crate::quad::round_up;

/// Smallest tail start accepted by [`tail_main`].
pub const MIN_TAIL_START: f64 = 1000.0;
const SERIES_TOL: f64 = 1e-22;
const SERIES_CAP: usize = 60;

/// `Π_j cos(θ - k_j π/2) = sign * cos^a(θ) * sin^b(θ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrigReduction {
    pub sign: i8,
    pub cos_power: u32,
    pub sin_power: u32,
}

/// Reduces a product of shifted cosines. The total order must be even.
pub fn trig_reduce(k: &[i32]) -> Result<TrigReduction> {
    let total: i64 = k.iter().map(|&v| v as i64).sum();
    if total.rem_euclid(2) != 0 {
        return Err(Error::Domain(format!("odd total order {total}")));
    }
    let mut sign = 1i8;
    let mut sin_power = 0;
    for &v in k {
        // cos(θ - vπ/2): cos, sin, -cos, -sin for v mod 4 = 0, 1, 2, 3
        match v.rem_euclid(4) {
            0 => {}
            1 => sin_power += 1,
            2 => sign = -sign,
            _ => {
                sign = -sign;
                sin_power += 1;
            }
        }
    }
    Ok(TrigReduction {
        sign,
        cos_power: k.len() as u32 - sin_power,
        sin_power,
    })
}

/// `(-1)^{Σ_j floor(k_j / 2)}`, the floor form of the reduction sign.
pub fn floor_sign(k: &[i32]) -> i8 {
    let s: i64 = k.iter().map(|&v| v.div_euclid(2) as i64).sum();
    if s.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

/// Exact rational with a positive denominator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ratio {
    pub num: i64,
    pub den: i64,
}

impl Ratio {
    pub fn new(num: i64, den: i64) -> Self {
        fn gcd(a: i64, b: i64) -> i64 {
            if b == 0 {
                a.abs()
            } else {
                gcd(b, a % b)
            }
        }
        let g = gcd(num, den).max(1);
        let s = if den < 0 { -1 } else { 1 };
        Ratio {
            num: s * num / g,
            den: s * den / g,
        }
    }

    pub fn to_ext(self) -> ExtReal {
        ExtReal::from_i64(self.num) / ExtReal::from_i64(self.den)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Coefficients `c_h` with `cos^a θ sin^b θ = Σ_{h=0}^{a+b} c_h cos(hθ)`;
/// `b` must be even.
pub fn fourier_coefficients(a: u32, b: u32) -> Result<Vec<Ratio>> {
    if !b.is_multiple_of(2) {
        return Err(Error::Domain(format!("odd sine power {b}")));
    }
    let p = (a + b) as usize;
    if p > 40 {
        return Err(Error::Domain(format!("power {p} too large")));
    }
    // Laurent coefficients of (z + 1/z)^a (z - 1/z)^b, exponent e stored at e + p
    let mut poly = vec![0i64; 2 * p + 1];
    poly[p] = 1;
    let mul = |poly: &mut Vec<i64>, minus: bool| {
        let mut next = vec![0i64; 2 * p + 1];
        for (i, &c) in poly.iter().enumerate() {
            if c == 0 {
                continue;
            }
            next[i + 1] += c;
            next[i - 1] += if minus { -c } else { c };
        }
        *poly = next;
    };
    for _ in 0..a {
        mul(&mut poly, false);
    }
    for _ in 0..b {
        mul(&mut poly, true);
    }
    // divide by 2^a (2i)^b = 2^p (-1)^{b/2}
    let den = 1i64 << p;
    let flip = if (b / 2) % 2 == 1 { -1 } else { 1 };
    Ok((0..=p)
        .map(|h| {
            let c = if h == 0 { poly[p] } else { poly[p + h] + poly[p - h] };
            Ratio::new(flip * c, den)
        })
        .collect())
}

/// `r0^{-q}` for integer or half-integer `q`.
fn ext_pow_neg(r0: ExtReal, q: f64) -> ExtReal {
    let whole = q.floor();
    let mut v = r0.powi(-(whole as i32));
    if q != whole {
        v = v / r0.sqrt().expect("positive");
    }
    v
}

/// `∫_{r0}^∞ cos(hθ) r^{-q} dr`, `θ = r - π/4`, plus a bound on the
/// truncation of the integration-by-parts series.
fn harmonic_integral(h: u32, q: f64, r0: ExtReal, sin_cos: (ExtReal, ExtReal)) -> (ExtReal, f64) {
    if h == 0 {
        let v = ext_pow_neg(r0, q - 1.0).div_f64(q - 1.0);
        return (v, 0.0);
    }
    // e^{ihθ0}
    let (s1, c1) = sin_cos;
    let (mut s, mut c) = (ExtReal::ZERO, ExtReal::ONE);
    for _ in 0..h {
        let ns = s * c1 + c * s1;
        let nc = c * c1 - s * s1;
        s = ns;
        c = nc;
    }
    // term_m = (q)_m r0^{-q-m} / h^{m+1}
    let hh = h as f64;
    let rinv = r0.recip();
    let mut term = ext_pow_neg(r0, q).div_f64(hh);
    let mut sum = ExtReal::ZERO;
    for m in 0..SERIES_CAP {
        if term.hi() < SERIES_TOL {
            return (sum, round_up(2.0 * term.hi()));
        }
        sum += match m % 4 {
            0 => -(term * s),
            1 => term * c,
            2 => term * s,
            _ => -(term * c),
        };
        term = (term * rinv).mul_f64((q + m as f64) / hh);
    }
    (sum, round_up(2.0 * term.hi()))
}

/// `(2/π)^{p/2}` in extended precision.
fn two_over_pi_pow(p: usize) -> ExtReal {
    let base = ExtReal::from_f64(2.0) / ExtReal::PI;
    let mut v = base.powi((p / 2) as i32);
    if p % 2 == 1 {
        v *= base.sqrt().expect("positive");
    }
    v
}

/// Main tail term `∫_{r0}^∞ (2/(πr))^{p/2} Π_j cos(ω_{k_j}) r dr` and the
/// bound on the truncated series that evaluates it.
pub fn tail_main(k: &[i32], r0: ExtReal) -> Result<(ExtReal, f64)> {
    if r0.hi() < MIN_TAIL_START {
        return Err(Error::Domain(format!(
            "tail start {} below {MIN_TAIL_START}",
            r0.hi()
        )));
    }
    let p = k.len();
    if p < 3 {
        return Err(Error::Domain(format!("{p} factors: tail integral diverges")));
    }
    let red = trig_reduce(k)?;
    let coeffs = fourier_coefficients(red.cos_power, red.sin_power)?;
    let q = p as f64 / 2.0 - 1.0;
    let phase = phase_sincos(r0)?;
    let mut value = ExtReal::ZERO;
    let mut remainder = 0.0;
    for (h, c) in coeffs.iter().enumerate() {
        if c.num == 0 {
            continue;
        }
        let (t, rem) = harmonic_integral(h as u32, q, r0, phase);
        value += c.to_ext() * t;
        remainder += c.to_f64().abs() * rem;
    }
    let pref = two_over_pi_pow(p);
    let value = pref * value;
    let value = if red.sign < 0 { -value } else { value };
    Ok((value, round_up(remainder * pref.to_f64())))
}

/// Bounds on the terms neglected by [`tail_main`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailBounds {
    pub e3: f64,
    pub e4: f64,
    pub e5: f64,
    pub e6: f64,
}

impl TailBounds {
    pub fn total(&self) -> f64 {
        round_up(self.e3 + self.e4 + self.e5 + self.e6)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailResult {
    pub main: ExtReal,
    pub remainder_bound: f64,
    pub bounds: TailBounds,
}

impl TailResult {
    pub fn error_bound(&self) -> f64 {
        round_up(self.remainder_bound + self.bounds.total())
    }
}

fn hat_squares(k: &[i32]) -> Vec<f64> {
    k.iter()
        .map(|&v| {
            let h = v.unsigned_abs().max(1) as f64;
            h * h
        })
        .collect()
}

/// `∫_{r0}^∞ (2/π)^{p/2} r^{-α} dr`.
fn weight_integral(p: usize, alpha: f64, r0: f64) -> f64 {
    (2.0 / std::f64::consts::PI).powf(p as f64 / 2.0) * r0.powf(1.0 - alpha) / (alpha - 1.0)
}

/// Elementary symmetric polynomial `e_s` of `xs`.
fn elementary_symmetric(xs: &[f64], s: usize) -> f64 {
    let mut e = vec![0.0; s + 1];
    e[0] = 1.0;
    for &x in xs {
        for j in (1..=s).rev() {
            e[j] += e[j - 1] * x;
        }
    }
    e[s]
}

fn check_lemma_range(k: &[i32], r0: f64) -> Result<()> {
    let worst = hat_squares(k).into_iter().fold(0.0, f64::max);
    if r0 <= worst {
        return Err(Error::Domain(format!(
            "tail start {r0} must exceed max order^2 = {worst}"
        )));
    }
    Ok(())
}

/// Sine-correction terms of the refined expansion:
/// `(pπ/2) Σ_j k̂_j^2 ∫ (2/π)^{p/2} r^{-p/2-1}`; for six factors this is
/// `3π Σ_j k̂_j^2 ∫ (2/π)^3 r^{-4}`.
pub fn e3_bound(k: &[i32], r0: f64) -> f64 {
    let p = k.len();
    let s: f64 = hat_squares(k).iter().sum();
    round_up(p as f64 * std::f64::consts::PI / 2.0 * s * weight_integral(p, p as f64 / 2.0 + 1.0, r0))
}

/// Remainders of the refined expansion: `(1/4) Σ_j k̂_j^4 ∫ (2/π)^{p/2} r^{-p/2-1}`.
pub fn e4_bound(k: &[i32], r0: f64) -> f64 {
    let p = k.len();
    let s: f64 = hat_squares(k).iter().map(|x| x * x).sum();
    round_up(0.25 * s * weight_integral(p, p as f64 / 2.0 + 1.0, r0))
}

/// Two error factors: `Σ_{i<j} k̂_i^2 k̂_j^2 ∫ (2/π)^{p/2} r^{-p/2-1}`.
pub fn e5_bound(k: &[i32], r0: f64) -> f64 {
    let p = k.len();
    let e2 = elementary_symmetric(&hat_squares(k), 2);
    round_up(e2 * weight_integral(p, p as f64 / 2.0 + 1.0, r0))
}

/// Three or more error factors: `Σ_{s>=3} e_s(k̂^2) ∫ (2/π)^{p/2} r^{1-p/2-s}`.
pub fn e6_bound(k: &[i32], r0: f64) -> f64 {
    let p = k.len();
    let hs = hat_squares(k);
    let total: f64 = (3..=p)
        .map(|s| elementary_symmetric(&hs, s) * weight_integral(p, p as f64 / 2.0 + s as f64 - 1.0, r0))
        .sum();
    round_up(total)
}

/// Full tail evaluation for one tuple. `conservative_e4` scales `E4` by
/// `7/6`.
pub fn compute_tail(k: &[i32], r0: ExtReal, conservative_e4: bool) -> Result<TailResult> {
    let r = r0.to_f64();
    check_lemma_range(k, r)?;
    let (main, remainder_bound) = tail_main(k, r0)?;
    let e4 = e4_bound(k, r);
    let bounds = TailBounds {
        e3: e3_bound(k, r),
        e4: if conservative_e4 { round_up(e4 * 7.0 / 6.0) } else { e4 },
        e5: e5_bound(k, r),
        e6: e6_bound(k, r),
    };
    Ok(TailResult {
        main,
        remainder_bound,
        bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reductions() {
        let r = trig_reduce(&[0; 6]).unwrap();
        assert_eq!((r.sign, r.cos_power, r.sin_power), (1, 6, 0));
        let r = trig_reduce(&[2, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!((r.sign, r.cos_power, r.sin_power), (-1, 6, 0));
        // cos(ω_1) = sin θ and cos(ω_{-1}) = -sin θ
        let r = trig_reduce(&[1, -1, 0, 0, 0, 0]).unwrap();
        assert_eq!((r.sign, r.cos_power, r.sin_power), (-1, 4, 2));
        assert!(trig_reduce(&[1, 0, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn floor_sign_matches_phase_sign() {
        for a in -9..=9 {
            for b in -9..=9 {
                let k = [a, b, -a - b + 4, 0, 2, -2];
                assert_eq!(trig_reduce(&k).unwrap().sign, floor_sign(&k), "{k:?}");
            }
        }
    }

    #[test]
    fn cosine_sixth_coefficients() {
        let c = fourier_coefficients(6, 0).unwrap();
        let even: Vec<Ratio> = c.iter().step_by(2).copied().collect();
        assert_eq!(
            even,
            vec![Ratio::new(5, 16), Ratio::new(15, 32), Ratio::new(3, 16), Ratio::new(1, 32)]
        );
        assert!(c.iter().skip(1).step_by(2).all(|r| r.num == 0));
    }

    #[test]
    fn mixed_and_sine_coefficients() {
        let c = fourier_coefficients(4, 2).unwrap();
        assert_eq!(c[0], Ratio::new(1, 16));
        // value at θ = 0 is cos^4 0 sin^2 0 = 0
        assert_eq!(c.iter().map(|r| r.to_f64()).sum::<f64>(), 0.0);
        let s = fourier_coefficients(0, 6).unwrap();
        assert_eq!(s[0], Ratio::new(5, 16));
        // at θ = π/2: cos(hπ/2) = 1, 0, -1, 0 for h mod 4; sin^6 = 1
        let at_half_pi: f64 = s
            .iter()
            .enumerate()
            .map(|(h, r)| r.to_f64() * [1.0, 0.0, -1.0, 0.0][h % 4])
            .sum();
        assert!((at_half_pi - 1.0).abs() < 1e-15);
        assert!(fourier_coefficients(5, 1).is_err());
    }

    #[test]
    fn constant_harmonic_is_closed_form() {
        let r0 = ExtReal::from_f64(63000.0);
        let (v, rem) = harmonic_integral(0, 2.0, r0, phase_sincos(r0).unwrap());
        assert!((v - r0.recip()).abs().to_f64() < 1e-36);
        assert_eq!(rem, 0.0);
    }

    #[test]
    fn main_term_envelope() {
        let r0 = ExtReal::from_f64(63000.0);
        let (v, rem) = tail_main(&[0; 6], r0).unwrap();
        let env = (2.0 / std::f64::consts::PI).powi(3) * (5.0 / 16.0 + 15.0 / 32.0 + 3.0 / 16.0 + 1.0 / 32.0) / 63000.0;
        assert!(v.to_f64().abs() <= env);
        assert!(rem < 1e-20);
        assert!(tail_main(&[0; 6], ExtReal::from_f64(999.0)).is_err());
        assert!(tail_main(&[0, 0], r0).is_err());
    }

    #[test]
    fn bounds_at_zero_tuple() {
        let r0: f64 = 63000.0;
        let w = (2.0 / std::f64::consts::PI).powi(3) * r0.powi(-3) / 3.0;
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(e3_bound(&[0; 6], r0), 3.0 * std::f64::consts::PI * 6.0 * w) < 1e-13);
        assert!(rel(e4_bound(&[0; 6], r0), 0.25 * 6.0 * w) < 1e-13);
        assert!(rel(e5_bound(&[0; 6], r0), 15.0 * w) < 1e-13);
        let w5 = (2.0 / std::f64::consts::PI).powi(3) * r0.powi(-4) / 4.0;
        let w6 = (2.0 / std::f64::consts::PI).powi(3) * r0.powi(-5) / 5.0;
        let w7 = (2.0 / std::f64::consts::PI).powi(3) * r0.powi(-6) / 6.0;
        let w8 = (2.0 / std::f64::consts::PI).powi(3) * r0.powi(-7) / 7.0;
        let e6 = 20.0 * w5 + 15.0 * w6 + 6.0 * w7 + w8;
        assert!(rel(e6_bound(&[0; 6], r0), e6) < 1e-13);
    }

    #[test]
    fn bounds_monotone_in_orders() {
        let r0 = 63000.0;
        let base = [4, -2, 0, 6, -8, 0];
        for j in 0..6 {
            let mut k = base;
            k[j] += if k[j] >= 0 { 2 } else { -2 };
            assert!(e3_bound(&k, r0) > e3_bound(&base, r0));
            assert!(e4_bound(&k, r0) > e4_bound(&base, r0));
            assert!(e5_bound(&k, r0) > e5_bound(&base, r0));
            assert!(e6_bound(&k, r0) > e6_bound(&base, r0));
        }
    }

    #[test]
    fn bound_sum_sanity_ceiling() {
        let k = [61, 61, 61, -61, -61, -61];
        let r0 = 63000.0;
        let s = e3_bound(&k, r0) + e4_bound(&k, r0) + e5_bound(&k, r0) + e6_bound(&k, r0);
        assert!(s < 1e-6, "{s}");
    }

    #[test]
    fn lemma_range_guard() {
        assert!(compute_tail(&[61, -61, 0, 0, 0, 0], ExtReal::from_f64(3000.0), false).is_err());
        let a = compute_tail(&[0; 6], ExtReal::from_f64(63000.0), false).unwrap();
        let b = compute_tail(&[0; 6], ExtReal::from_f64(63000.0), true).unwrap();
        assert!((b.bounds.e4 / a.bounds.e4 - 7.0 / 6.0).abs() < 1e-12);
    }
}
