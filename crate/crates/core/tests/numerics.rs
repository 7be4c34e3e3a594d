//! Numerical checks against independent references: values frozen from a
//! 50-digit mpmath session, libm's double-precision Bessel functions, and
//! closed-form tail integrals built from Si/Ci.

use proptest::prelude::*;
use qcert_core::bessel::{asymptotic_main, asymptotic_refined, eval_column, eval_hankel, eval_miller, MAX_ORDER};
use qcert_core::hiprec::{phase_sincos, sincos_reduced};
use qcert_core::integrals::{canonicalize, SixTuple};
use qcert_core::quad::composite_newton_cotes;
use qcert_core::tail::{compute_tail, tail_main};
use qcert_core::{Decimal, ExtReal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ext(hi: f64, lo: f64) -> ExtReal {
    ExtReal::from_parts(hi, lo)
}

// (order, argument, J as hi + lo), mpmath at 50 digits
const BESSEL_REFS: &[(usize, &str, f64, f64)] = &[
    (0, "0.5", 0.9384698072408129, 4.5377773145414966e-17),
    (1, "0.5", 0.2422684576748739, -1.2992822754730315e-17),
    (5, "1.9", 0.005538493013615881, -8.351955849894247e-20),
    (0, "10", -0.24593576445134835, 1.353808764108032e-17),
    (7, "10", 0.21671091768505152, -4.359656708845467e-18),
    (30, "10", 1.551096078257467e-12, -1.3097481475269336e-29),
    (61, "10", 5.701401925324359e-42, 7.504364648843152e-59),
    (45, "50.75", 0.08615521815129064, -5.3179813475606e-18),
    (0, "1999.5", 0.014078554001465104, -2.398972212088173e-19),
    (61, "1999.5", 0.01784355052726604, -1.287815680730263e-18),
    (3, "2000.25", -0.01762089787220165, 1.327218250234653e-18),
    (61, "2500", -0.01086689111259088, -3.841841576310001e-19),
    (0, "3600", 0.006609654970851652, -2.579933021461221e-19),
    (30, "3600", -0.007996867393049759, 5.931967489555359e-19),
    (61, "3600", -0.0067666120349134645, 3.0420458524016924e-20),
    (17, "63000", -0.0024078446314016863, 1.0512879800079455e-19),
    (61, "63000", -0.0024634754635530585, -4.2629119252721396e-20),
    (2, "99999.95", 0.0016247917377568372, -8.288491405168254e-20),
];

#[test]
fn bessel_matches_mpmath() {
    for &(n, r, hi, lo) in BESSEL_REFS {
        let x: Decimal = r.parse().unwrap();
        let col = eval_column(x.to_ext(), MAX_ORDER).unwrap();
        let err = (col.values()[n] - ext(hi, lo)).abs().to_f64();
        assert!(err < 1e-20, "J_{n}({r}): error {err:e}");
    }
}

// (argument, sin hi/lo, cos hi/lo), mpmath at 50 digits
const SINCOS_REFS: &[(&str, (f64, f64), (f64, f64))] = &[
    ("63000", (-0.9974291343899089, -3.363681601522748e-17), (0.07165976465351409, 1.926564417281316e-18)),
    ("3600", (-0.2620839590180966, 4.0424522797132045e-18), (0.9650450758515897, 5.479442846303098e-17)),
    ("0.003", (0.002999995500002025, -1.190582776930762e-19), (0.999995500003375, -5.118021221466872e-18)),
    ("99999.95", (0.08565134424079472, -1.3819268049330766e-18), (-0.9963251714323718, 4.688342811004981e-17)),
    ("2000.25", (0.8102158811969797, 4.359432582396822e-17), (-0.5861315772556547, -4.8536934071679906e-17)),
];

#[test]
fn sincos_matches_mpmath() {
    for &(r, (sh, sl), (ch, cl)) in SINCOS_REFS {
        let x: Decimal = r.parse().unwrap();
        let (s, c) = sincos_reduced(x.to_ext()).unwrap();
        // the argument itself carries a relative rounding of ~1e-32
        let tol = 4e-32 * x.to_f64() + 1e-31;
        let es = (s - ext(sh, sl)).abs().to_f64();
        assert!(es < tol, "sin {r}: {es:e}");
        assert!((c - ext(ch, cl)).abs().to_f64() < tol, "cos {r}");
    }
}

#[test]
fn sin_cos_pythagoras() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let r = ExtReal::from_f64(rng.gen_range(0.0..1e5));
        let (s, c) = sincos_reduced(r).unwrap();
        let one = s * s + c * c;
        assert!((one - ExtReal::ONE).abs().to_f64() < 1e-30);
    }
}

#[test]
fn bessel_agrees_with_libm() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..300 {
        let r: f64 = rng.gen_range(0.01..5000.0);
        let col = eval_column(ExtReal::from_f64(r), 40).unwrap();
        for n in [0usize, 1, 2, 13, 40] {
            let want = libm::jn(n as i32, r);
            let got = col.values()[n].to_f64();
            assert!((got - want).abs() < 1e-13, "J_{n}({r}) = {got} vs libm {want}");
        }
    }
}

#[test]
fn dual_branch_agreement_at_split() {
    let r = ExtReal::from_f64(3600.0);
    let m = eval_miller(r, MAX_ORDER);
    let h = eval_hankel(r, MAX_ORDER);
    for n in 0..=MAX_ORDER {
        let d = (m[n] - h[n]).abs().to_f64();
        assert!(d <= 1e-18, "order {n}: {d:e}");
    }
}

#[test]
fn recurrence_residuals() {
    for r in [0.7, 1.99, 2.0, 37.5, 1999.0, 2001.0, 3600.0, 50000.0] {
        let col = eval_column(ExtReal::from_f64(r), MAX_ORDER).unwrap();
        let j = col.values();
        for n in 1..MAX_ORDER {
            let lhs = j[n - 1] + j[n + 1];
            let rhs = j[n] * ExtReal::from_i64(2 * n as i64) / ExtReal::from_f64(r);
            let scale = 1.0 + 2.0 * n as f64 / r;
            assert!((lhs - rhs).abs().to_f64() < 1e-19 * scale, "n={n} r={r}");
        }
    }
}

#[test]
fn asymptotic_bounds_on_random_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let n: i64 = rng.gen_range(0..=MAX_ORDER as i64);
        let nh = n.max(1) as f64;
        let z = rng.gen_range(nh * nh * 1.0001..1e5);
        let zx = ExtReal::from_f64(z);
        let j = eval_column(zx, MAX_ORDER).unwrap().values()[n as usize];
        let amp = (2.0 / (std::f64::consts::PI * z)).sqrt();
        let main = (j - asymptotic_main(n, zx).unwrap()).abs().to_f64();
        assert!(main <= amp * nh * nh / z, "main n={n} z={z}");
        let refined = (j - asymptotic_refined(n, zx).unwrap()).abs().to_f64();
        assert!(refined <= 0.25 * amp * nh.powi(4) / (z * z) + 1e-30, "refined n={n} z={z}");
    }
}

#[test]
fn phase_matches_shifted_sincos() {
    let r = ExtReal::from_f64(63000.0);
    let (s, c) = phase_sincos(r).unwrap();
    let (s0, c0) = sincos_reduced(r).unwrap();
    let h = ExtReal::FRAC_1_SQRT_2;
    assert!((s - (s0 - c0) * h).abs().to_f64() < 1e-30);
    assert!((c - (c0 + s0) * h).abs().to_f64() < 1e-30);
}

#[test]
fn newton_cotes_degree_seven_exact() {
    let a = ExtReal::from_f64(-0.75);
    let h = ExtReal::from_f64(0.125);
    // ∫_{-0.75}^{1.5} x^7 - 3x^2 + 1 dx over 3 panels
    let f = |x: ExtReal| x.powi(7) - x.square().mul_f64(3.0) + ExtReal::ONE;
    let v = composite_newton_cotes(f, a, h, 3);
    let prim = |x: f64| x.powi(8) / 8.0 - x.powi(3) + x;
    let want = prim(1.5) - prim(-0.75);
    assert!((v.to_f64() - want).abs() < 1e-14);
    let g = |x: ExtReal| x.powi(8);
    let v8 = composite_newton_cotes(g, a, h, 3);
    assert!((v8.to_f64() - (1.5f64.powi(9) - (-0.75f64).powi(9)) / 9.0).abs() > 1e-12);
}

// (orders, ∫_{63000}^∞ (2/π)^3 r^{-2} Π cos(r - π/4 - k_j π/2) dr as hi + lo),
// from an mpmath DFT of the cosine product and Si/Ci closed forms
const TAIL_REFS: &[([i32; 6], f64, f64)] = &[
    ([-44, 32, 10, 4, 23, -25], -2.559629585710962e-07, 1.468130165962023e-23),
    ([26, -9, 9, -24, -5, 3], 2.5596558459648315e-07, 1.0484886762294685e-23),
    ([-39, -49, 29, 14, 61, -16], 2.5596558459648315e-07, 1.0484886762294685e-23),
    ([47, 6, -32, 6, -27, 0], -2.559629585710962e-07, 1.468130165962023e-23),
    ([-55, -40, 32, 36, 42, -15], -2.559629585710962e-07, 1.468130165962023e-23),
    ([22, -54, 26, -61, 34, 33], -2.559629585710962e-07, 1.468130165962023e-23),
    ([-15, 14, -11, -2, -46, 60], -2.559629585710962e-07, 1.468130165962023e-23),
    ([3, 16, -32, 23, 29, -39], 2.5596558459648315e-07, 1.0484886762294685e-23),
    ([-44, -29, 37, 48, 5, -17], 2.5596558459648315e-07, 1.0484886762294685e-23),
    ([8, -42, 39, -50, 52, -7], -2.559629585710962e-07, 1.468130165962023e-23),
    ([49, -46, -41, 36, -22, 24], -2.559629585710962e-07, 1.468130165962023e-23),
    ([19, -18, 19, -47, -2, 29], 2.5596558459648315e-07, 1.0484886762294685e-23),
    ([-17, 15, 16, 19, -55, 22], 2.5596558459648315e-07, 1.0484886762294685e-23),
    ([-53, 9, 48, -53, -12, 61], 2.5596558459648315e-07, 1.0484886762294685e-23),
    ([-47, 29, -38, -22, 17, 61], 2.5596558459648315e-07, 1.0484886762294685e-23),
    ([-45, 4, 33, 44, 15, -51], 2.5596558459648315e-07, 1.0484886762294685e-23),
    ([-5, 16, -19, -35, 43, 0], 2.5596558459648315e-07, 1.0484886762294685e-23),
    ([-4, 1, 52, -53, -11, 15], 2.5596558459648315e-07, 1.0484886762294685e-23),
    ([40, -6, -56, 26, 54, -58], 1.2798088853647023e-06, 5.07947830465287e-23),
    ([22, -8, 56, -51, 0, -19], -2.559629585710962e-07, 1.468130165962023e-23),
];

#[test]
fn tail_main_brackets_closed_form() {
    let r0 = ExtReal::from_f64(63000.0);
    for &(k, hi, lo) in TAIL_REFS {
        let (v, rem) = tail_main(&k, r0).unwrap();
        let d = (v - ext(hi, lo)).abs().to_f64();
        // the reference itself is good to ~1e-40
        assert!(d <= rem + 1e-30, "{k:?}: off by {d:e}, remainder bound {rem:e}");
    }
}

#[test]
fn tail_bound_ceiling_for_largest_orders() {
    let r0 = ExtReal::from_f64(63000.0);
    let t = compute_tail(&[61, 61, 61, -61, -61, -61], r0, false).unwrap();
    assert!(t.bounds.total() < 1e-6);
}

#[test]
fn canonical_sign_coherence() {
    // J_{-k} = (-1)^k J_k, checked pointwise on the integrand at a few radii
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let radii = [0.9, 17.3, 2500.0];
    let cols: Vec<_> = radii
        .iter()
        .map(|&r| eval_column(ExtReal::from_f64(r), MAX_ORDER).unwrap())
        .collect();
    for _ in 0..50 {
        let mut k = [0i32; 6];
        loop {
            for v in k.iter_mut().take(5) {
                *v = rng.gen_range(-30..=30);
            }
            k[5] = -k[..5].iter().sum::<i32>();
            if k[5].abs() <= 61 {
                break;
            }
        }
        let key = canonicalize(&SixTuple::new(k).unwrap());
        for col in &cols {
            let signed: ExtReal = k.iter().fold(ExtReal::ONE, |p, &o| p * col.order(o));
            let unsigned: ExtReal = key
                .orders
                .iter()
                .fold(ExtReal::ONE, |p, &o| p * col.order(o as i32));
            let want = if key.sign < 0 { -unsigned } else { unsigned };
            let tol = 1e-30 * want.abs().to_f64();
            assert!((signed - want).abs().to_f64() <= tol, "{k:?}");
        }
    }
}

proptest! {
    #[test]
    fn canonicalization_is_permutation_invariant_and_idempotent(
        a in -12i32..=12, b in -12i32..=12, c in -12i32..=12, d in -12i32..=12, e in -12i32..=12,
        rot in 0usize..6,
    ) {
        let f = -(a + b + c + d + e);
        let mut k = [a, b, c, d, e, f];
        let key = canonicalize(&SixTuple::new(k).unwrap());
        k.rotate_left(rot);
        k.swap(0, 5);
        prop_assert_eq!(canonicalize(&SixTuple::new(k).unwrap()), key);
        let neg = canonicalize(&SixTuple::new(k.map(|v| -v)).unwrap());
        prop_assert_eq!(neg, key);
    }

    #[test]
    fn decimal_offsets_are_exact(m in 1i64..100_000, scale in 0u32..6, i in 0i64..1_000_000) {
        let step = Decimal::new(m, scale);
        let x = Decimal::from_int(7).offset_ext(&step, i);
        let want = (7.0 * 10f64.powi(scale as i32) + (m * i) as f64) / 10f64.powi(scale as i32);
        prop_assert!((x.to_f64() - want).abs() <= want.abs() * 1e-15);
    }

    #[test]
    fn extreal_mul_div_round_trip(x in -1e6f64..1e6, y in 1e-3f64..1e3) {
        let a = ExtReal::from_f64(x) + ExtReal::from_f64(x * 1e-17);
        let b = ExtReal::from_f64(y);
        let back = (a * b) / b;
        prop_assert!((back - a).abs().to_f64() <= a.abs().to_f64() * 1e-30 + 1e-300);
    }
}
