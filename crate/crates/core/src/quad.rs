//! Composite closed 7-point Newton–Cotes quadrature of Bessel products.
//!
//! The head segment `[0, 3600]` (step `0.003`) and the mid segment
//! `[3600, 63000]` (step `0.05`) are integrated column by column: each grid
//! column of Bessel values is consumed once and fanned out to every pending
//! integrand of a batch.
//!
//! Reproducibility: the grid is cut into fixed chunks of 4096 panels. Each
//! chunk is accumulated sequentially, and chunk partials are folded in
//! ascending order, so the result does not depend on the worker count.

use rayon::prelude::*;

use crate::bessel::{eval_column, BesselColumn, GridCache, GridSpec};
use crate::decimal::Decimal;
use crate::error::{Error, Result};
use crate::hiprec::ExtReal;

/// Subintervals per panel.
pub const PANEL_WIDTH: u64 = 6;
/// Panels accumulated per chunk before the ordered fold.
pub const CHUNK_PANELS: u64 = 4096;
const CHUNK_COLUMNS: u64 = PANEL_WIDTH * CHUNK_PANELS;

/// Published head-segment discretization bound.
pub const E1: f64 = 1.5e-9;

/// Closed Newton–Cotes weights on 7 nodes, `step * numerators / 140`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PanelWeights {
    pub numerators: [i64; 7],
    pub denominator: i64,
}

pub fn panel_weights() -> PanelWeights {
    PanelWeights {
        numerators: [41, 216, 27, 272, 27, 216, 41],
        denominator: 140,
    }
}

// weight class of a node inside a panel: 0 -> 41, 1 -> 216, 2 -> 27, 3 -> 272
const CLASS_OF: [usize; 6] = [0, 1, 2, 3, 2, 1];
const CLASS_WEIGHT: [f64; 4] = [41.0, 216.0, 27.0, 272.0];

/// Which part of the radial split a result belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    Head,
    Mid,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentResult {
    pub value: ExtReal,
    pub error_bound: f64,
    pub segment: Segment,
}

/// Where grid columns come from.
#[derive(Clone, Copy, Debug)]
pub enum ColumnSource<'a> {
    /// Recompute every column on the fly.
    Compute,
    /// Read from a verified tabulation of the same grid.
    Cache(&'a GridCache),
}

impl ColumnSource<'_> {
    fn columns(&self, spec: &GridSpec, first: u64, last: u64, n_max: usize) -> Result<Vec<BesselColumn>> {
        match self {
            ColumnSource::Compute => (first..last)
                .map(|i| eval_column(spec.abscissa(i), n_max))
                .collect(),
            ColumnSource::Cache(c) => c.read_columns(first, last),
        }
    }

    fn check(&self, spec: &GridSpec, n_max: usize) -> Result<()> {
        if let ColumnSource::Cache(c) = self {
            let cs = c.spec();
            if (&cs.start, &cs.end, &cs.step) != (&spec.start, &spec.end, &spec.step) {
                return Err(Error::Config(format!(
                    "cache grid {} does not match requested {}",
                    cs.canonical(),
                    spec.canonical()
                )));
            }
            if cs.n_max < n_max {
                return Err(Error::Config(format!(
                    "cache holds orders up to {}, need {n_max}",
                    cs.n_max
                )));
            }
        }
        Ok(())
    }
}

/// Composite rule for a general integrand over `[a, a + 6 * panels * h]`.
pub fn composite_newton_cotes<F>(f: F, a: ExtReal, h: ExtReal, panels: u64) -> ExtReal
where
    F: Fn(ExtReal) -> ExtReal,
{
    let mut buckets = [ExtReal::ZERO; 4];
    let n = panels * PANEL_WIDTH;
    for i in 0..=n {
        let v = f(a + h.mul_f64(i as f64));
        add_node(&mut buckets, i, n, v);
    }
    finish(&buckets, h)
}

#[inline(always)]
fn add_node(buckets: &mut [ExtReal; 4], i: u64, n: u64, v: ExtReal) {
    let pos = (i % PANEL_WIDTH) as usize;
    if pos == 0 && i != 0 && i != n {
        // interior panel joint: counted by both neighbouring panels
        buckets[0] += v.mul_f64(2.0);
    } else {
        buckets[CLASS_OF[pos]] += v;
    }
}

fn finish(buckets: &[ExtReal; 4], h: ExtReal) -> ExtReal {
    let mut s = ExtReal::ZERO;
    for (b, w) in buckets.iter().zip(CLASS_WEIGHT) {
        s += b.mul_f64(w);
    }
    (s * h).div_f64(140.0)
}

/// A set of integrands `r * Π_j J_{k_j}(r)` with nonnegative orders,
/// prepared for one shared pass over a grid. Each product is split into two
/// factor groups so partial products are shared between integrands.
#[derive(Clone, Debug)]
pub struct MomentBatch {
    groups: Vec<Vec<u8>>,
    pairs: Vec<(u32, u32)>,
    max_order: usize,
}

impl MomentBatch {
    /// `orders` are nonnegative Bessel orders, each list of length 1..=6.
    pub fn new(orders: &[Vec<u8>]) -> Self {
        use std::collections::BTreeMap;
        let mut index: BTreeMap<Vec<u8>, u32> = BTreeMap::new();
        let mut groups = Vec::new();
        let mut intern = |g: &[u8]| -> u32 {
            if let Some(&i) = index.get(g) {
                return i;
            }
            let i = groups.len() as u32;
            groups.push(g.to_vec());
            index.insert(g.to_vec(), i);
            i
        };
        let pairs = orders
            .iter()
            .map(|o| {
                let split = o.len().div_ceil(2);
                (intern(&o[..split]), intern(&o[split..]))
            })
            .collect();
        let max_order = orders
            .iter()
            .flat_map(|o| o.iter())
            .copied()
            .max()
            .unwrap_or(0) as usize;
        MomentBatch {
            groups,
            pairs,
            max_order,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    fn accumulate(&self, cols: &[BesselColumn], first: u64, n: u64, out: &mut [[ExtReal; 4]]) {
        let mut gp = vec![ExtReal::ONE; self.groups.len()];
        let mut rgp = vec![ExtReal::ONE; self.groups.len()];
        for (off, col) in cols.iter().enumerate() {
            let i = first + off as u64;
            let vals = col.values();
            for (g, slot) in self.groups.iter().zip(gp.iter_mut()) {
                let mut p = ExtReal::ONE;
                for &o in g {
                    p *= vals[o as usize];
                }
                *slot = p;
            }
            for (dst, &p) in rgp.iter_mut().zip(gp.iter()) {
                *dst = p * col.r;
            }
            let pos = (i % PANEL_WIDTH) as usize;
            let joint = pos == 0 && i != 0 && i != n;
            let class = CLASS_OF[pos];
            for (acc, &(a, b)) in out.iter_mut().zip(self.pairs.iter()) {
                let v = rgp[a as usize] * gp[b as usize];
                if joint {
                    acc[0] += v.mul_f64(2.0);
                } else {
                    acc[class] += v;
                }
            }
        }
    }

    /// Integrates every member over `spec` and returns the raw values in
    /// input order.
    pub fn integrate(&self, spec: &GridSpec, source: ColumnSource<'_>) -> Result<Vec<ExtReal>> {
        if self.is_empty() {
            return Ok(Vec::new());
        }
        if self.max_order > spec.n_max {
            return Err(Error::Domain(format!(
                "order {} exceeds grid order cap {}",
                self.max_order, spec.n_max
            )));
        }
        spec.check_panels(PANEL_WIDTH)?;
        source.check(spec, self.max_order)?;
        let n = spec.intervals()?;
        let first = spec.first_index();
        let n_chunks = n / CHUNK_COLUMNS + 1;
        let wave = (rayon::current_num_threads() as u64 * 2).max(1);
        let mut total = vec![[ExtReal::ZERO; 4]; self.pairs.len()];
        let mut c0 = 0;
        while c0 < n_chunks {
            let c1 = (c0 + wave).min(n_chunks);
            let partials: Vec<Result<Vec<[ExtReal; 4]>>> = (c0..c1)
                .into_par_iter()
                .map(|c| {
                    let lo = (c * CHUNK_COLUMNS).max(first);
                    let hi = ((c + 1) * CHUNK_COLUMNS).min(n + 1);
                    let mut acc = vec![[ExtReal::ZERO; 4]; self.pairs.len()];
                    let mut i = lo;
                    // bounded column buffers inside a chunk
                    while i < hi {
                        let j = (i + 1024).min(hi);
                        let cols = source.columns(spec, i, j, self.max_order)?;
                        self.accumulate(&cols, i, n, &mut acc);
                        i = j;
                    }
                    Ok(acc)
                })
                .collect();
            for part in partials {
                for (t, p) in total.iter_mut().zip(part?) {
                    for c in 0..4 {
                        t[c] += p[c];
                    }
                }
            }
            c0 = c1;
        }
        let h = spec.step.to_ext();
        Ok(total.iter().map(|b| finish(b, h)).collect())
    }
}

fn is_published_head(spec: &GridSpec) -> bool {
    spec.start.is_zero()
        && spec.end == Decimal::from_int(3600)
        && spec.step == Decimal::new(3, 3)
}

fn is_published_mid(spec: &GridSpec) -> bool {
    spec.start == Decimal::from_int(3600) && spec.step == Decimal::new(5, 2)
}

/// The head discretization bound `E1 = 1.5e-9`. It is only established for
/// the published head grid; any other grid is a configuration error.
pub fn e1_bound(spec: &GridSpec) -> Result<f64> {
    if is_published_head(spec) {
        Ok(E1)
    } else {
        Err(Error::Config(format!(
            "E1 is only valid on start=0;end=3600;step=0.003, not {}",
            spec.canonical()
        )))
    }
}

/// Rounds a nonnegative bound up by a few ulps to absorb evaluation error.
pub(crate) fn round_up(x: f64) -> f64 {
    let mut y = x * (1.0 + 8.0 * f64::EPSILON);
    for _ in 0..2 {
        y = y.next_up();
    }
    y
}

/// Mid-segment bound
/// `C2 * Π_j (1 + k_j^2 / s)` with
/// `C2 = 1.01^6 (R - s) w^8 (6^3/5) (2/(π(s-1)))^3 cosh^6(1) (R + 1)`.
///
/// For products of `p != 6` factors the per-factor constants (`1.01`,
/// `cosh(1)`, `(2/(π(s-1)))^{1/2}`) enter `p` times.
pub fn e2_bound(k: &[i32], s: f64, r_used: f64, w: f64) -> f64 {
    let p = k.len() as i32;
    let c2 = 1.01f64.powi(p)
        * (r_used - s)
        * w.powi(8)
        * (216.0 / 5.0)
        * (2.0 / (std::f64::consts::PI * (s - 1.0))).powf(p as f64 / 2.0)
        * 1f64.cosh().powi(p)
        * (r_used + 1.0);
    let prod: f64 = k
        .iter()
        .map(|&kj| 1.0 + (kj as f64) * (kj as f64) / s)
        .product();
    round_up(c2 * prod)
}

/// Segment bound for a given grid: `E1` on the published head grid, `E2` on
/// the published mid step, and `+inf` (no certified bound) otherwise.
pub fn segment_bound(k: &[i32], spec: &GridSpec) -> f64 {
    if spec.start.is_zero() {
        e1_bound(spec).unwrap_or(f64::INFINITY)
    } else if is_published_mid(spec) {
        e2_bound(k, spec.start.to_f64(), spec.end.to_f64(), spec.step.to_f64())
    } else {
        f64::INFINITY
    }
}

/// Integrates `r * Π_j J_{k_j}(r)` over one segment for a signed tuple of
/// orders, resolving negative orders with `J_{-k} = (-1)^k J_k`.
pub fn integrate_segment(k: &[i32], spec: &GridSpec, source: ColumnSource<'_>) -> Result<SegmentResult> {
    if k.is_empty() || k.len() > 6 {
        return Err(Error::Domain(format!("need 1..=6 orders, got {}", k.len())));
    }
    if let Some(bad) = k.iter().find(|v| v.unsigned_abs() as usize > crate::bessel::MAX_ORDER) {
        return Err(Error::Domain(format!("order {bad} out of range")));
    }
    let negative_odd = k.iter().filter(|&&v| v < 0 && v % 2 != 0).count();
    let mut orders: Vec<u8> = k.iter().map(|v| v.unsigned_abs() as u8).collect();
    orders.sort_unstable();
    let raw = MomentBatch::new(&[orders]).integrate(spec, source)?[0];
    let value = if negative_odd % 2 == 1 { -raw } else { raw };
    let segment = if spec.start.is_zero() {
        Segment::Head
    } else {
        Segment::Mid
    };
    Ok(SegmentResult {
        value,
        error_bound: segment_bound(k, spec),
        segment,
    })
}
