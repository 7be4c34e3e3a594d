//! On-disk grid tabulation.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "QCBGRID1" | u32 version | u16 len + start | u16 len + end | u16 len + step
//! | u32 n_max | u64 columns | columns * (r.hi r.lo (J_0.hi J_0.lo) ... (J_nmax.hi J_nmax.lo))
//! | SHA-256 of everything above
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{compute_columns, BesselColumn, GridSpec};
use crate::error::{Error, Result};
use crate::hiprec::ExtReal;

const MAGIC: &[u8; 8] = b"QCBGRID1";
const VERSION: u32 = 1;
const WRITE_CHUNK: u64 = 1 << 14;

fn header_bytes(spec: &GridSpec, columns: u64) -> Vec<u8> {
    let mut h = Vec::new();
    h.extend_from_slice(MAGIC);
    h.extend_from_slice(&VERSION.to_le_bytes());
    for s in [
        spec.start.to_string(),
        spec.end.to_string(),
        spec.step.to_string(),
    ] {
        h.extend_from_slice(&(s.len() as u16).to_le_bytes());
        h.extend_from_slice(s.as_bytes());
    }
    h.extend_from_slice(&(spec.n_max as u32).to_le_bytes());
    h.extend_from_slice(&columns.to_le_bytes());
    h
}

fn push_ext(buf: &mut Vec<u8>, x: ExtReal) {
    buf.extend_from_slice(&x.hi().to_le_bytes());
    buf.extend_from_slice(&x.lo().to_le_bytes());
}

fn read_f64(b: &[u8]) -> f64 {
    f64::from_le_bytes(b[..8].try_into().expect("8 bytes"))
}

/// Tabulates `spec` to `path`. A partially written file is removed on
/// failure. Returns `false` (and does nothing) when a valid cache for the
/// same spec already exists.
pub fn write_grid_cache(path: &Path, spec: &GridSpec) -> Result<bool> {
    if path.exists() {
        if let Ok(existing) = GridCache::open(path) {
            if existing.spec() == spec {
                return Ok(false);
            }
        }
    }
    let tmp = path.with_extension("partial");
    let res = write_inner(&tmp, spec).and_then(|_| fs::rename(&tmp, path).map_err(Error::from));
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map(|_| true)
}

fn write_inner(path: &Path, spec: &GridSpec) -> Result<()> {
    let columns = spec.column_count();
    let mut hasher = Sha256::new();
    let mut out = BufWriter::new(File::create(path)?);
    let header = header_bytes(spec, columns);
    hasher.update(&header);
    out.write_all(&header)?;
    let first = spec.first_index();
    let last = first + columns;
    let mut i = first;
    let mut buf = Vec::new();
    while i < last {
        let j = (i + WRITE_CHUNK).min(last);
        buf.clear();
        for col in compute_columns(spec, i, j) {
            push_ext(&mut buf, col.r);
            for &v in col.values() {
                push_ext(&mut buf, v);
            }
        }
        hasher.update(&buf);
        out.write_all(&buf)?;
        i = j;
    }
    out.write_all(&hasher.finalize())?;
    out.flush()?;
    Ok(())
}

/// A verified, randomly accessible grid tabulation.
#[derive(Debug)]
pub struct GridCache {
    path: PathBuf,
    file: File,
    spec: GridSpec,
    columns: u64,
    data_offset: u64,
}

impl GridCache {
    /// Opens and verifies the checksum of a cache file.
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = File::open(path)?;
        let len = file.metadata()?.len();
        let corrupt = |what: &str| Error::Integrity(format!("{}: {what}", path.display()));
        let mut head = vec![0u8; 4096.min(len as usize)];
        file.read_exact(&mut head)?;
        if head.len() < 12 || &head[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        if u32::from_le_bytes(head[8..12].try_into().unwrap()) != VERSION {
            return Err(corrupt("unsupported version"));
        }
        let mut pos = 12;
        let mut fields = Vec::new();
        for _ in 0..3 {
            let l = u16::from_le_bytes(
                head.get(pos..pos + 2).ok_or_else(|| corrupt("short header"))?.try_into().unwrap(),
            ) as usize;
            pos += 2;
            let s = head.get(pos..pos + l).ok_or_else(|| corrupt("short header"))?;
            fields.push(String::from_utf8(s.to_vec()).map_err(|_| corrupt("bad header text"))?);
            pos += l;
        }
        let tail = head.get(pos..pos + 12).ok_or_else(|| corrupt("short header"))?;
        let n_max = u32::from_le_bytes(tail[..4].try_into().unwrap()) as usize;
        let columns = u64::from_le_bytes(tail[4..12].try_into().unwrap());
        let spec = GridSpec::parse(&fields[0], &fields[1], &fields[2], n_max)
            .map_err(|e| corrupt(&e.to_string()))?;
        if spec.column_count() != columns {
            return Err(corrupt("column count does not match grid"));
        }
        let data_offset = (pos + 12) as u64;
        let col_bytes = 16 * (n_max as u64 + 2);
        if len != data_offset + columns * col_bytes + 32 {
            return Err(corrupt("file length mismatch"));
        }
        // checksum pass
        let mut hasher = Sha256::new();
        let mut off = 0u64;
        let mut buf = vec![0u8; 1 << 20];
        let body = len - 32;
        while off < body {
            let n = ((body - off) as usize).min(buf.len());
            file.read_exact_at(&mut buf[..n], off)?;
            hasher.update(&buf[..n]);
            off += n as u64;
        }
        let mut digest = [0u8; 32];
        file.read_exact_at(&mut digest, body)?;
        if hasher.finalize().as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        Ok(GridCache {
            path: path.to_path_buf(),
            file,
            spec,
            columns,
            data_offset,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn column_count(&self) -> u64 {
        self.columns
    }

    /// Reads columns by global grid index, `first..last`.
    pub fn read_columns(&self, first: u64, last: u64) -> Result<Vec<BesselColumn>> {
        let base = self.spec.first_index();
        if first < base || last > base + self.columns || first > last {
            return Err(Error::Domain(format!("column range {first}..{last} outside cache")));
        }
        let n = self.spec.n_max + 1;
        let col_bytes = 16 * (n + 1);
        let mut buf = vec![0u8; col_bytes * (last - first) as usize];
        self.file
            .read_exact_at(&mut buf, self.data_offset + (first - base) * col_bytes as u64)?;
        Ok(buf
            .chunks_exact(col_bytes)
            .map(|c| {
                let ext = |k: usize| ExtReal::from_parts(read_f64(&c[16 * k..]), read_f64(&c[16 * k + 8..]));
                BesselColumn::new(ext(0), (1..=n).map(ext).collect())
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::compute_columns;

    #[test]
    fn round_trip_and_idempotence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.bin");
        let spec = GridSpec::parse("0", "3", "0.25", 7).unwrap();
        assert!(write_grid_cache(&path, &spec).unwrap());
        assert!(!write_grid_cache(&path, &spec).unwrap());
        let cache = GridCache::open(&path).unwrap();
        assert_eq!(cache.column_count(), 12);
        let cols = cache.read_columns(1, 13).unwrap();
        assert_eq!(cols, compute_columns(&spec, 1, 13));
        assert!(cache.read_columns(0, 2).is_err());
    }

    #[test]
    fn detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.bin");
        let spec = GridSpec::parse("1", "2", "0.5", 3).unwrap();
        write_grid_cache(&path, &spec).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let k = bytes.len() - 40;
        bytes[k] ^= 1;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(GridCache::open(&path), Err(Error::Integrity(_))));
    }
}
