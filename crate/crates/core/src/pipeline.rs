//! The staged commands behind the `qcert` binary.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bessel::write_grid_cache;
use crate::certify::{certify_block, write_rowmap_csv, write_spectrum_csv, write_table_tsv, rowmap_domain, BlockCertificate};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::integrals::{batch_compute, BatchOutcome, IntegralStore, SixTuple};
use crate::qform::{assemble_from_store, block_indices, block_tuples, build_index_sets, entry_tuples, q_entry, IndexSets, IndexTriple, QBlock};

/// Environment variable that overrides the cache directory.
pub const CACHE_DIR_ENV: &str = "QCERT_CACHE_DIR";

/// Exclusive hold on a cache directory, released on drop.
#[derive(Debug)]
pub struct CacheLock {
    path: PathBuf,
}

impl CacheLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(CacheLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "cache directory {} is locked by another run (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for CacheLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn selected_degrees(cfg: &RunConfig, sets: &IndexSets) -> Result<Vec<i32>> {
    let all: Vec<i32> = sets.blocks.keys().copied().collect();
    let chosen: Vec<i32> = all.iter().copied().filter(|d| cfg.blocks.includes(*d)).collect();
    if let crate::config::BlockSelector::List(v) = &cfg.blocks {
        if let Some(d) = v.iter().find(|d| !sets.blocks.contains_key(d)) {
            return Err(Error::Config(format!(
                "no block with degree {d} at bandwidth {}",
                cfg.bandwidth
            )));
        }
    }
    Ok(chosen)
}

fn failures_to_error(out: &BatchOutcome) -> Result<()> {
    if out.failures.is_empty() {
        return Ok(());
    }
    let list: Vec<String> = out
        .failures
        .iter()
        .take(5)
        .map(|(k, m)| format!("{}: {m}", k.label()))
        .collect();
    Err(Error::MissingIntegral(format!(
        "{} integrals failed, first: {}",
        out.failures.len(),
        list.join("; ")
    )))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TabulateReport {
    pub head_written: bool,
    pub mid_written: bool,
    pub head_columns: u64,
    pub mid_columns: u64,
}

/// Writes both grid tabulations to the cache directory. Valid existing
/// files are kept.
pub fn cmd_tabulate(cfg: &RunConfig) -> Result<TabulateReport> {
    cfg.validate()?;
    let _lock = CacheLock::acquire(&cfg.cache_dir)?;
    let head = cfg.head_grid()?;
    let mid = cfg.mid_grid()?;
    let (hw, mw) = cfg.install(|| -> Result<_> {
        Ok((
            write_grid_cache(&cfg.cache_dir.join("head.grid"), &head)?,
            write_grid_cache(&cfg.cache_dir.join("mid.grid"), &mid)?,
        ))
    })??;
    Ok(TabulateReport {
        head_written: hw,
        mid_written: mw,
        head_columns: head.column_count(),
        mid_columns: mid.column_count(),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IntegralsReport {
    /// Distinct canonical integrals needed by the selected blocks.
    pub requested: usize,
    pub computed: usize,
    pub cache_hits: usize,
    pub grid_passes: usize,
    /// `(key, reason)` for integrals that could not be computed.
    pub failures: Vec<(String, String)>,
}

fn populate(cfg: &RunConfig, sets: &IndexSets, degrees: &[i32], store: &IntegralStore) -> Result<BatchOutcome> {
    let mut tuples: BTreeSet<SixTuple> = BTreeSet::new();
    for &d in degrees {
        tuples.extend(block_tuples(&block_indices(sets, d, false)?)?);
    }
    batch_compute(tuples, cfg, store)
}

/// Computes and persists every integral the selected blocks need.
pub fn cmd_integrals(cfg: &RunConfig) -> Result<IntegralsReport> {
    cfg.validate()?;
    let _lock = CacheLock::acquire(&cfg.cache_dir)?;
    let sets = build_index_sets(cfg.bandwidth)?;
    let degrees = selected_degrees(cfg, &sets)?;
    let store = IntegralStore::open(&cfg.store_path())?;
    let out = populate(cfg, &sets, &degrees, &store)?;
    Ok(IntegralsReport {
        requested: out.values.len() + out.failures.len(),
        computed: out.computed,
        cache_hits: out.cache_hits,
        grid_passes: out.grid_passes,
        failures: out
            .failures
            .iter()
            .map(|(k, m)| (k.label(), m.clone()))
            .collect(),
    })
}

fn assemble_locked(cfg: &RunConfig, store: &IntegralStore) -> Result<Vec<QBlock>> {
    let sets = build_index_sets(cfg.bandwidth)?;
    let degrees = selected_degrees(cfg, &sets)?;
    failures_to_error(&populate(cfg, &sets, &degrees, store)?)?;
    let hash = cfg.grid_hash()?;
    cfg.install(|| {
        degrees
            .iter()
            .map(|&d| assemble_from_store(&sets, d, false, store, &hash))
            .collect::<Result<Vec<_>>>()
    })?
}

fn block_path(cfg: &RunConfig, d: i32) -> PathBuf {
    cfg.output_dir.join("blocks").join(format!("D{d:03}.tsv"))
}

/// Assembles the selected blocks and writes one TSV dump per block.
pub fn cmd_assemble(cfg: &RunConfig) -> Result<Vec<QBlock>> {
    cfg.validate()?;
    let _lock = CacheLock::acquire(&cfg.cache_dir)?;
    let store = IntegralStore::open(&cfg.store_path())?;
    let blocks = assemble_locked(cfg, &store)?;
    for b in &blocks {
        write_file(&block_path(cfg, b.degree), |w| b.write_tsv(w))?;
    }
    Ok(blocks)
}

#[derive(Clone, Debug)]
pub struct CertifyOutcome {
    pub certificates: Vec<BlockCertificate>,
    pub table_path: PathBuf,
}

impl CertifyOutcome {
    pub fn all_certified(&self) -> bool {
        self.certificates.iter().all(|c| c.certified)
    }

    pub fn uncertified(&self) -> impl Iterator<Item = &BlockCertificate> {
        self.certificates.iter().filter(|c| !c.certified)
    }
}

/// Assembles and certifies the selected blocks, writing `table.tsv`, the
/// block dumps and a copy of the configuration.
pub fn cmd_certify(cfg: &RunConfig) -> Result<CertifyOutcome> {
    cfg.validate()?;
    let _lock = CacheLock::acquire(&cfg.cache_dir)?;
    let store = IntegralStore::open(&cfg.store_path())?;
    let blocks = assemble_locked(cfg, &store)?;
    let certificates = cfg.install(|| blocks.par_iter().map(certify_block).collect::<Result<Vec<_>>>())??;
    for b in &blocks {
        write_file(&block_path(cfg, b.degree), |w| b.write_tsv(w))?;
    }
    let table_path = cfg.output_dir.join("table.tsv");
    write_file(&table_path, |w| write_table_tsv(w, cfg, &certificates))?;
    write_file(&cfg.output_dir.join("config.txt"), |w| {
        w.write_all(cfg.provenance_string().as_bytes())?;
        Ok(())
    })?;
    Ok(CertifyOutcome {
        certificates,
        table_path,
    })
}

/// Writes the ascending spectrum of block `degree` regardless of the block
/// selection in `cfg`.
pub fn report_spectrum(cfg: &RunConfig, degree: i32) -> Result<PathBuf> {
    let mut cfg = cfg.clone();
    cfg.blocks = crate::config::BlockSelector::List(vec![degree]);
    cfg.validate()?;
    let _lock = CacheLock::acquire(&cfg.cache_dir)?;
    let store = IntegralStore::open(&cfg.store_path())?;
    let block = assemble_locked(&cfg, &store)?.remove(0);
    let cert = certify_block(&block)?;
    let path = cfg.output_dir.join(format!("spectrum_D{degree:03}.csv"));
    write_file(&path, |w| write_spectrum_csv(w, &cfg, &cert))?;
    Ok(path)
}

/// Writes the row `Q(m0, n)` over the hexagonal `(n1, n2)` domain.
pub fn report_rowmap(cfg: &RunConfig, m0: &IndexTriple) -> Result<PathBuf> {
    cfg.validate()?;
    let sets = build_index_sets(cfg.bandwidth)?;
    if !sets.x.contains(m0) {
        return Err(Error::Domain(format!("{m0} is not an index at bandwidth {}", cfg.bandwidth)));
    }
    let _lock = CacheLock::acquire(&cfg.cache_dir)?;
    let store = IntegralStore::open(&cfg.store_path())?;
    let cells = rowmap_domain(cfg.bandwidth, m0.degree());
    let mut tuples = BTreeSet::new();
    for (_, _, n) in &cells {
        tuples.extend(entry_tuples(m0, n)?);
    }
    failures_to_error(&batch_compute(tuples, cfg, &store)?)?;
    let hash = cfg.grid_hash()?;
    let values = cells
        .iter()
        .map(|(n1, n2, n)| Ok((*n1, *n2, q_entry(m0, n, |k| store.lookup(k, &hash))?.0)))
        .collect::<Result<Vec<_>>>()?;
    let [a, b, c] = m0.0;
    let path = cfg.output_dir.join(format!("rowmap_{a}_{b}_{c}.csv"));
    write_file(&path, |w| write_rowmap_csv(w, cfg, m0, &values))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = CacheLock::acquire(dir.path()).unwrap();
        assert!(matches!(CacheLock::acquire(dir.path()), Err(Error::Config(_))));
        drop(a);
        CacheLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn unknown_blocks_rejected() {
        let mut cfg = RunConfig::default();
        cfg.bandwidth = 4;
        cfg.n_max = 9;
        cfg.blocks = "14".parse().unwrap();
        let sets = build_index_sets(4).unwrap();
        assert!(selected_degrees(&cfg, &sets).is_err());
        cfg.blocks = "10,12".parse().unwrap();
        assert_eq!(selected_degrees(&cfg, &sets).unwrap(), vec![10, 12]);
    }
}
