//! Index sets and block assembly of the symmetrized quadratic form `Q`.
//!
//! For nondecreasing triples `m`, `n` of even integers with equal degree,
//!
//! ```text
//! L(m, n) = 2 I(m, -n) + Σ_τ I(m, -n + τ)
//! R(m, n) = 2 I(m - n, 0, 0, 0) + Σ_τ I(m - n, τ)
//! Q(m, n) = (1/6) Σ_σ [R(m, n_σ) - L(m, n_σ)]
//! ```
//!
//! with `τ` running over the six arrangements of `(1, -1, 0)` and `n_σ` over
//! the six permutations of `n`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hiprec::ExtReal;
use crate::integrals::{batch_compute, IntegralStore, IntegralValue, SixTuple};
use crate::quad::round_up;

const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
const SHIFT: [i32; 3] = [1, -1, 0];

fn permute(v: [i32; 3], p: [usize; 3]) -> [i32; 3] {
    [v[p[0]], v[p[1]], v[p[2]]]
}

/// Nondecreasing triple of even integers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexTriple(pub [i32; 3]);

impl IndexTriple {
    pub fn new(m: [i32; 3]) -> Result<Self> {
        if m.iter().any(|v| v % 2 != 0) || !(m[0] <= m[1] && m[1] <= m[2]) {
            return Err(Error::Domain(format!("{m:?} is not a nondecreasing even triple")));
        }
        Ok(IndexTriple(m))
    }

    pub fn degree(&self) -> i32 {
        self.0.iter().sum()
    }

    /// `(-m3, -m2, -m1)`.
    pub fn negated(&self) -> IndexTriple {
        IndexTriple([-self.0[2], -self.0[1], -self.0[0]])
    }

    pub fn is_origin(&self) -> bool {
        self.0 == [0, 0, 0]
    }

    pub fn max_abs(&self) -> i32 {
        self.0.iter().map(|v| v.abs()).max().unwrap_or(0)
    }
}

impl fmt::Display for IndexTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for IndexTriple {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let parts: Vec<i32> = t
            .split(',')
            .map(|p| p.trim().parse::<i32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Domain(format!("cannot parse triple {s:?}")))?;
        let arr: [i32; 3] = parts
            .try_into()
            .map_err(|_| Error::Domain(format!("need three entries in {s:?}")))?;
        IndexTriple::new(arr)
    }
}

#[derive(Clone, Debug)]
pub struct IndexSets {
    pub bandwidth: i32,
    /// Even integers in `[-N, N]`.
    pub z: Vec<i32>,
    /// All nondecreasing triples over `z`, lexicographic.
    pub x_tilde: Vec<IndexTriple>,
    /// `x_tilde` without the origin.
    pub x: Vec<IndexTriple>,
    /// Blocks of `x` by degree, `D >= 0` only.
    pub blocks: BTreeMap<i32, Vec<IndexTriple>>,
}

pub fn build_index_sets(n: i32) -> Result<IndexSets> {
    if !(2..=30).contains(&n) || n % 2 != 0 {
        return Err(Error::Domain(format!("bandwidth must be even in 2..=30, got {n}")));
    }
    let z: Vec<i32> = (-n..=n).step_by(2).collect();
    let mut x_tilde = Vec::new();
    for (i, &a) in z.iter().enumerate() {
        for (j, &b) in z.iter().enumerate().skip(i) {
            for &c in &z[j..] {
                x_tilde.push(IndexTriple([a, b, c]));
            }
        }
    }
    let x: Vec<IndexTriple> = x_tilde.iter().copied().filter(|m| !m.is_origin()).collect();
    let mut blocks: BTreeMap<i32, Vec<IndexTriple>> = BTreeMap::new();
    for m in &x {
        if m.degree() >= 0 {
            blocks.entry(m.degree()).or_default().push(*m);
        }
    }
    Ok(IndexSets {
        bandwidth: n,
        z,
        x_tilde,
        x,
        blocks,
    })
}

/// The sixteen tuples behind one `(m, n)` term, before canonical dedup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequiredTuples {
    pub l_main: SixTuple,
    pub l_pert: [SixTuple; 6],
    pub r_main: SixTuple,
    pub r_pert: [SixTuple; 6],
}

impl RequiredTuples {
    pub fn all(&self) -> impl Iterator<Item = SixTuple> + '_ {
        std::iter::once(self.l_main)
            .chain(self.l_pert.iter().copied())
            .chain(std::iter::once(self.r_main))
            .chain(self.r_pert.iter().copied())
    }
}

/// Tuples for `L(m, n)` and `R(m, n)` with `n` taken in the given order.
pub fn required_tuples_ordered(m: [i32; 3], n: [i32; 3]) -> Result<RequiredTuples> {
    let dm: i32 = m.iter().sum();
    let dn: i32 = n.iter().sum();
    if dm != dn {
        return Err(Error::Domain(format!("degrees differ: {m:?} vs {n:?}")));
    }
    let six = |a: [i32; 3], b: [i32; 3]| SixTuple::new([a[0], a[1], a[2], b[0], b[1], b[2]]);
    let neg_n = n.map(|v| -v);
    let diff = [m[0] - n[0], m[1] - n[1], m[2] - n[2]];
    let mut l_pert = Vec::with_capacity(6);
    let mut r_pert = Vec::with_capacity(6);
    for p in PERMS {
        let t = permute(SHIFT, p);
        l_pert.push(six(m, [neg_n[0] + t[0], neg_n[1] + t[1], neg_n[2] + t[2]])?);
        r_pert.push(six(diff, t)?);
    }
    Ok(RequiredTuples {
        l_main: six(m, neg_n)?,
        l_pert: l_pert.try_into().expect("six"),
        r_main: six(diff, [0, 0, 0])?,
        r_pert: r_pert.try_into().expect("six"),
    })
}

pub fn required_tuples(m: &IndexTriple, n: &IndexTriple) -> Result<RequiredTuples> {
    required_tuples_ordered(m.0, n.0)
}

/// Every tuple needed by `Q(m, n)`, i.e. over all permutations of `n`.
pub fn entry_tuples(m: &IndexTriple, n: &IndexTriple) -> Result<Vec<SixTuple>> {
    let mut out = Vec::with_capacity(96);
    for p in PERMS {
        out.extend(required_tuples_ordered(m.0, permute(n.0, p))?.all());
    }
    Ok(out)
}

/// `Q(m, n)` and its entrywise error bound. Main-term integrals count twice
/// in the bound, matching their coefficient.
pub fn q_entry<F>(m: &IndexTriple, n: &IndexTriple, lookup: F) -> Result<(ExtReal, f64)>
where
    F: Fn(&SixTuple) -> Result<IntegralValue>,
{
    let mut sum = ExtReal::ZERO;
    let mut err = 0.0;
    for p in PERMS {
        let t = required_tuples_ordered(m.0, permute(n.0, p))?;
        let side = |main: &SixTuple, pert: &[SixTuple; 6]| -> Result<(ExtReal, f64)> {
            let mv = lookup(main)?;
            let mut v = mv.value.mul_f64(2.0);
            let mut e = 2.0 * mv.error_bound;
            for k in pert {
                let pv = lookup(k)?;
                v += pv.value;
                e += pv.error_bound;
            }
            Ok((v, e))
        };
        let (r, re) = side(&t.r_main, &t.r_pert)?;
        let (l, le) = side(&t.l_main, &t.l_pert)?;
        sum += r - l;
        err += re + le;
    }
    Ok((sum.div_f64(6.0), round_up(err / 6.0)))
}

/// One dense block of `Q` with its entrywise error bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct QBlock {
    pub bandwidth: i32,
    pub degree: i32,
    pub indices: Vec<IndexTriple>,
    pub values: Vec<Vec<ExtReal>>,
    pub err: Vec<Vec<f64>>,
}

impl QBlock {
    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| {
            (0..n).all(|j| self.values[i][j] == self.values[j][i] && self.err[i][j] == self.err[j][i])
        })
    }

    /// Long-format TSV dump: header comments, then one line per entry.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# bandwidth = {}", self.bandwidth)?;
        writeln!(w, "# degree = {}", self.degree)?;
        writeln!(w, "# dimension = {}", self.dim())?;
        let idx: Vec<String> = self.indices.iter().map(|m| m.to_string()).collect();
        writeln!(w, "# indices = {}", idx.join(" "))?;
        writeln!(w, "i\tj\tm\tn\tvalue\terr")?;
        for (i, m) in self.indices.iter().enumerate() {
            for (j, n) in self.indices.iter().enumerate() {
                writeln!(
                    w,
                    "{i}\t{j}\t{m}\t{n}\t{}\t{:e}",
                    self.values[i][j].to_sci_string(32),
                    self.err[i][j]
                )?;
            }
        }
        Ok(())
    }
}

/// Indices of block `degree`, optionally with the origin kept.
pub fn block_indices(sets: &IndexSets, degree: i32, keep_origin: bool) -> Result<Vec<IndexTriple>> {
    let mut idx = sets
        .blocks
        .get(&degree)
        .cloned()
        .ok_or_else(|| Error::Domain(format!("no block with degree {degree} at bandwidth {}", sets.bandwidth)))?;
    if keep_origin && degree == 0 {
        idx.push(IndexTriple([0, 0, 0]));
        idx.sort_unstable();
    }
    Ok(idx)
}

/// Distinct tuples needed by a set of indices.
pub fn block_tuples(indices: &[IndexTriple]) -> Result<BTreeSet<SixTuple>> {
    let mut out = BTreeSet::new();
    for (i, m) in indices.iter().enumerate() {
        for n in &indices[i..] {
            out.extend(entry_tuples(m, n)?);
        }
    }
    Ok(out)
}

/// Builds a block from integrals already in `store`.
pub fn assemble_from_store(
    sets: &IndexSets,
    degree: i32,
    keep_origin: bool,
    store: &IntegralStore,
    grid_hash: &[u8; 32],
) -> Result<QBlock> {
    let indices = block_indices(sets, degree, keep_origin)?;
    let n = indices.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let entries: Vec<(ExtReal, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| q_entry(&indices[i], &indices[j], |k| store.lookup(k, grid_hash)))
        .collect::<Result<_>>()?;
    let mut values = vec![vec![ExtReal::ZERO; n]; n];
    let mut err = vec![vec![0.0; n]; n];
    for (&(i, j), &(v, e)) in pairs.iter().zip(&entries) {
        values[i][j] = v;
        values[j][i] = v;
        err[i][j] = e;
        err[j][i] = e;
    }
    Ok(QBlock {
        bandwidth: sets.bandwidth,
        degree,
        indices,
        values,
        err,
    })
}

/// Builds a block, computing any missing integrals first.
pub fn assemble_block(degree: i32, cfg: &RunConfig, store: &IntegralStore, keep_origin: bool) -> Result<QBlock> {
    let sets = build_index_sets(cfg.bandwidth)?;
    let indices = block_indices(&sets, degree, keep_origin)?;
    let out = batch_compute(block_tuples(&indices)?, cfg, store)?;
    if let Some((key, msg)) = out.failures.first() {
        return Err(Error::MissingIntegral(format!("{}: {msg}", key.label())));
    }
    let hash = cfg.grid_hash()?;
    cfg.install(|| assemble_from_store(&sets, degree, keep_origin, store, &hash))?
}
