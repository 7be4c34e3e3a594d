//! Full evaluation of `I_k = ∫_0^∞ r Π_j J_{k_j}(r) dr` with certified error
//! budgets, and the persistent store those values live in.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use sha2::{Digest, Sha256};

use crate::bessel::GridCache;
use crate::bessel::{GridSpec, MAX_ORDER};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hiprec::ExtReal;
use crate::quad::{integrate_segment, round_up, segment_bound, ColumnSource, MomentBatch};
use crate::tail::compute_tail;

/// Six Bessel orders summing to zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SixTuple([i32; 6]);

impl SixTuple {
    pub fn new(k: [i32; 6]) -> Result<Self> {
        if k.iter().map(|&v| v as i64).sum::<i64>() != 0 {
            return Err(Error::Domain(format!("orders {k:?} do not sum to zero")));
        }
        if let Some(v) = k.iter().find(|v| v.unsigned_abs() as usize > MAX_ORDER) {
            return Err(Error::Domain(format!("order {v} exceeds {MAX_ORDER}")));
        }
        Ok(SixTuple(k))
    }

    pub fn orders(&self) -> [i32; 6] {
        self.0
    }
}

/// Sorted absolute orders plus the sign picked up by `J_{-k} = (-1)^k J_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey {
    pub orders: [u8; 6],
    pub sign: i8,
}

impl CanonicalKey {
    /// The key of the positive quantity `I(orders)`.
    pub fn unsigned(self) -> CanonicalKey {
        CanonicalKey { sign: 1, ..self }
    }

    pub fn label(&self) -> String {
        let o: Vec<String> = self.orders.iter().map(|v| v.to_string()).collect();
        format!("({})", o.join(","))
    }
}

pub fn canonicalize(k: &SixTuple) -> CanonicalKey {
    let negative_odd = k.0.iter().filter(|&&v| v < 0 && v % 2 != 0).count();
    let mut orders = k.0.map(|v| v.unsigned_abs() as u8);
    orders.sort_unstable();
    CanonicalKey {
        orders,
        sign: if negative_odd % 2 == 0 { 1 } else { -1 },
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegralValue {
    pub value: ExtReal,
    pub error_bound: f64,
    pub grid_hash: [u8; 32],
}

impl IntegralValue {
    pub fn with_sign(self, sign: i8) -> Self {
        if sign < 0 {
            IntegralValue {
                value: -self.value,
                ..self
            }
        } else {
            self
        }
    }
}

type StoreKey = ([u8; 6], [u8; 32]);

const STORE_MAGIC: &[u8; 8] = b"QCISTOR1";
const RECORD_BYTES: usize = 6 + 32 + 24;

/// Append-only integral store.
///
/// ```text
/// magic "QCISTOR1" | segment*
/// segment = u32 count | count * (6 x i8 orders | 32-byte grid hash | hi lo err as f64 LE)
///           | SHA-256 of count and records
/// ```
#[derive(Debug)]
pub struct IntegralStore {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<StoreKey, IntegralValue>>,
    writer: Mutex<()>,
}

impl IntegralStore {
    /// A store that is never written to disk.
    pub fn in_memory() -> Self {
        IntegralStore {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(()),
        }
    }

    /// Opens (or prepares to create) a store file, verifying every segment.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let mut bytes = Vec::new();
            File::open(path)?.read_to_end(&mut bytes)?;
            let corrupt = |what: &str| Error::Integrity(format!("{}: {what}", path.display()));
            if bytes.len() < 8 || &bytes[..8] != STORE_MAGIC {
                return Err(corrupt("bad magic"));
            }
            let mut pos = 8;
            while pos < bytes.len() {
                let count_bytes = bytes.get(pos..pos + 4).ok_or_else(|| corrupt("truncated segment"))?;
                let count = u32::from_le_bytes(count_bytes.try_into().unwrap()) as usize;
                let body_end = pos + 4 + count * RECORD_BYTES;
                let digest = bytes
                    .get(body_end..body_end + 32)
                    .ok_or_else(|| corrupt("truncated segment"))?;
                if Sha256::digest(&bytes[pos..body_end]).as_slice() != digest {
                    return Err(corrupt("segment checksum mismatch"));
                }
                for rec in bytes[pos + 4..body_end].chunks_exact(RECORD_BYTES) {
                    let (key, value) = decode_record(rec).map_err(|e| corrupt(&e))?;
                    entries.entry(key).or_insert(value);
                }
                pos = body_end + 32;
            }
        }
        Ok(IntegralStore {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            writer: Mutex::new(()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value of the unsigned canonical integral, if present.
    pub fn get(&self, orders: &[u8; 6], grid_hash: &[u8; 32]) -> Option<IntegralValue> {
        self.entries
            .read()
            .expect("store lock")
            .get(&(*orders, *grid_hash))
            .copied()
    }

    /// Signed lookup of an arbitrary tuple.
    pub fn lookup(&self, k: &SixTuple, grid_hash: &[u8; 32]) -> Result<IntegralValue> {
        let key = canonicalize(k);
        self.get(&key.orders, grid_hash)
            .map(|v| v.with_sign(key.sign))
            .ok_or_else(|| Error::MissingIntegral(key.label()))
    }

    /// Persists one segment, then publishes the values to readers.
    pub fn insert_batch(&self, values: &[([u8; 6], IntegralValue)]) -> Result<()> {
        if values.is_empty() {
            return Ok(());
        }
        let _guard = self.writer.lock().expect("writer lock");
        if let Some(path) = &self.path {
            let mut seg = Vec::with_capacity(4 + values.len() * RECORD_BYTES + 32);
            seg.extend_from_slice(&(values.len() as u32).to_le_bytes());
            for (orders, v) in values {
                seg.extend(orders.iter().map(|&o| o as i8 as u8));
                seg.extend_from_slice(&v.grid_hash);
                for x in [v.value.hi(), v.value.lo(), v.error_bound] {
                    seg.extend_from_slice(&x.to_le_bytes());
                }
            }
            let digest = Sha256::digest(&seg);
            seg.extend_from_slice(&digest);
            let fresh = !path.exists();
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            if fresh {
                f.write_all(STORE_MAGIC)?;
            }
            f.write_all(&seg)?;
            f.sync_data()?;
        }
        let mut map = self.entries.write().expect("store lock");
        for (orders, v) in values {
            map.entry((*orders, v.grid_hash)).or_insert(*v);
        }
        Ok(())
    }
}

fn decode_record(rec: &[u8]) -> std::result::Result<(StoreKey, IntegralValue), String> {
    let mut orders = [0u8; 6];
    for (o, &b) in orders.iter_mut().zip(rec) {
        let v = b as i8;
        if v < 0 || v as usize > MAX_ORDER {
            return Err(format!("bad order {v}"));
        }
        *o = v as u8;
    }
    let mut hash = [0u8; 32];
    hash.copy_from_slice(&rec[6..38]);
    let f = |i: usize| f64::from_le_bytes(rec[38 + 8 * i..46 + 8 * i].try_into().unwrap());
    let value = IntegralValue {
        value: ExtReal::from_parts(f(0), f(1)),
        error_bound: f(2),
        grid_hash: hash,
    };
    Ok(((orders, hash), value))
}

/// Crude magnitude guard: `|I| <= S^2/2 + (R - S) + 1`.
fn plausible(v: &ExtReal, cfg: &RunConfig) -> bool {
    let s = cfg.split.to_f64();
    v.is_finite() && v.abs().to_f64() <= s * s / 2.0 + cfg.tail_start.to_f64() + 1.0
}

/// `I` for any `3 <= p <= 6` orders with an even sum, without the store.
/// For `p != 6` the bounds use the same constants with the factor count
/// adjusted.
pub fn compute_i_general(k: &[i32], cfg: &RunConfig) -> Result<IntegralValue> {
    let p = k.len();
    if !(3..=6).contains(&p) {
        return Err(Error::Domain(format!(
            "{p} factors: need 3..=6 (the two-factor moment diverges)"
        )));
    }
    let head = cfg.head_grid()?;
    let mid = cfg.mid_grid()?;
    let tail = compute_tail(k, cfg.tail_start.to_ext(), cfg.conservative_e4)?;
    let h = integrate_segment(k, &head, ColumnSource::Compute)?;
    let m = integrate_segment(k, &mid, ColumnSource::Compute)?;
    let value = h.value + m.value + tail.main;
    if !plausible(&value, cfg) {
        return Err(Error::Domain(format!("implausible value {value} for {k:?}")));
    }
    Ok(IntegralValue {
        value,
        error_bound: round_up(h.error_bound + m.error_bound + tail.error_bound()),
        grid_hash: cfg.grid_hash()?,
    })
}

/// Signed `I_k`, computed through (and cached in) `store`.
pub fn compute_i(k: &SixTuple, cfg: &RunConfig, store: &IntegralStore) -> Result<IntegralValue> {
    let out = batch_compute([*k], cfg, store)?;
    if let Some((key, msg)) = out.failures.first() {
        return Err(Error::Domain(format!("{}: {msg}", key.label())));
    }
    store.lookup(k, &cfg.grid_hash()?)
}

/// Result of [`batch_compute`]. Values are unsigned canonical integrals.
#[derive(Debug, Default)]
pub struct BatchOutcome {
    pub values: BTreeMap<CanonicalKey, IntegralValue>,
    pub failures: Vec<(CanonicalKey, String)>,
    pub computed: usize,
    pub cache_hits: usize,
    pub grid_passes: usize,
}

fn open_sources(cfg: &RunConfig, head: &GridSpec, mid: &GridSpec) -> Result<Option<(GridCache, GridCache)>> {
    if !cfg.use_grid_cache {
        return Ok(None);
    }
    let open = |name: &str, spec: &GridSpec| -> Result<GridCache> {
        let c = GridCache::open(&cfg.cache_dir.join(name)).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("grid cache {name} unavailable ({io}); run tabulate first")),
            other => other,
        })?;
        if c.spec().canonical() != spec.canonical() {
            return Err(Error::Config(format!("grid cache {name} is for a different grid")));
        }
        Ok(c)
    };
    Ok(Some((open("head.grid", head)?, open("mid.grid", mid)?)))
}

/// Evaluates every missing integral among `tuples` with shared grid passes of
/// at most `cfg.batch_size` integrals. Each pass is persisted before the next
/// begins.
pub fn batch_compute<I>(tuples: I, cfg: &RunConfig, store: &IntegralStore) -> Result<BatchOutcome>
where
    I: IntoIterator<Item = SixTuple>,
{
    cfg.validate()?;
    let hash = cfg.grid_hash()?;
    let keys: BTreeSet<CanonicalKey> = tuples.into_iter().map(|t| canonicalize(&t).unsigned()).collect();
    let mut out = BatchOutcome::default();
    let mut pending = Vec::new();
    let r0 = cfg.tail_start.to_ext();
    for key in keys {
        if let Some(v) = store.get(&key.orders, &hash) {
            out.values.insert(key, v);
            out.cache_hits += 1;
            continue;
        }
        let k = key.orders.map(i32::from);
        if key.orders[5] as usize > cfg.n_max {
            out.failures
                .push((key, format!("order {} above n_max {}", key.orders[5], cfg.n_max)));
            continue;
        }
        match compute_tail(&k, r0, cfg.conservative_e4) {
            Ok(t) => pending.push((key, t)),
            Err(e) => out.failures.push((key, e.to_string())),
        }
    }
    if pending.is_empty() {
        return Ok(out);
    }
    let head = cfg.head_grid()?;
    let mid = cfg.mid_grid()?;
    let caches = open_sources(cfg, &head, &mid)?;
    let (hs, ms) = match &caches {
        Some((h, m)) => (ColumnSource::Cache(h), ColumnSource::Cache(m)),
        None => (ColumnSource::Compute, ColumnSource::Compute),
    };
    for part in pending.chunks(cfg.batch_size) {
        let orders: Vec<Vec<u8>> = part.iter().map(|(k, _)| k.orders.to_vec()).collect();
        let batch = MomentBatch::new(&orders);
        let (hv, mv) = cfg.install(|| -> Result<_> {
            Ok((batch.integrate(&head, hs)?, batch.integrate(&mid, ms)?))
        })??;
        out.grid_passes += 1;
        let mut records = Vec::with_capacity(part.len());
        for ((key, tail), (h, m)) in part.iter().zip(hv.into_iter().zip(mv)) {
            let k = key.orders.map(i32::from);
            let value = h + m + tail.main;
            if !plausible(&value, cfg) {
                out.failures.push((*key, format!("implausible value {value}")));
                continue;
            }
            let bound = round_up(segment_bound(&k, &head) + segment_bound(&k, &mid) + tail.error_bound());
            let v = IntegralValue {
                value,
                error_bound: bound,
                grid_hash: hash,
            };
            records.push((key.orders, v));
            out.values.insert(*key, v);
        }
        store.insert_batch(&records)?;
        out.computed += records.len();
    }
    Ok(out)
}
