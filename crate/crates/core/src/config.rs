//! Run configuration: a flat `key = value` text format with exact decimals.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::bessel::{GridSpec, MAX_ORDER};
use crate::error::{Error, Result};
use crate::Decimal;

/// Which degree blocks to process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BlockSelector {
    All,
    List(Vec<i32>),
}

impl BlockSelector {
    pub fn includes(&self, d: i32) -> bool {
        match self {
            BlockSelector::All => true,
            BlockSelector::List(v) => v.contains(&d),
        }
    }
}

impl FromStr for BlockSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(BlockSelector::All);
        }
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if let Some((a, b)) = part.split_once("..") {
                let a: i32 = a.trim().parse().map_err(|_| bad("blocks", part))?;
                let b: i32 = b.trim().parse().map_err(|_| bad("blocks", part))?;
                out.extend((a..=b).filter(|d| d % 2 == 0));
            } else {
                out.push(part.parse().map_err(|_| bad("blocks", part))?);
            }
        }
        out.sort_unstable();
        out.dedup();
        if out.is_empty() {
            return Err(bad("blocks", s));
        }
        Ok(BlockSelector::List(out))
    }
}

impl std::fmt::Display for BlockSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BlockSelector::All => f.write_str("all"),
            BlockSelector::List(v) => {
                let parts: Vec<String> = v.iter().map(|d| d.to_string()).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value for {key}: {value:?}"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Bandwidth `N`, even, at most 30.
    pub bandwidth: i32,
    /// Head/mid split point `S`.
    pub split: Decimal,
    /// Tail start `R`.
    pub tail_start: Decimal,
    pub head_step: Decimal,
    pub mid_step: Decimal,
    /// Highest Bessel order tabulated.
    pub n_max: usize,
    /// Worker threads, 0 for all available cores.
    pub workers: usize,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    pub blocks: BlockSelector,
    /// Multiply `E4` by `7/6`.
    pub conservative_e4: bool,
    /// Tabulate grids to disk first instead of streaming them.
    pub use_grid_cache: bool,
    /// Most integrals per shared grid pass; each pass is checkpointed.
    pub batch_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            bandwidth: 30,
            split: Decimal::from_int(3600),
            tail_start: Decimal::from_int(63000),
            head_step: Decimal::new(3, 3),
            mid_step: Decimal::new(5, 2),
            n_max: MAX_ORDER,
            workers: 0,
            cache_dir: PathBuf::from(".qcert"),
            output_dir: PathBuf::from("reports"),
            blocks: BlockSelector::All,
            conservative_e4: false,
            use_grid_cache: false,
            batch_size: 20_000,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.bandwidth;
        if !(2..=30).contains(&n) || n % 2 != 0 {
            return Err(Error::Config(format!("bandwidth must be even in 2..=30, got {n}")));
        }
        if self.n_max > MAX_ORDER {
            return Err(Error::Config(format!("n_max {} exceeds {MAX_ORDER}", self.n_max)));
        }
        if self.n_max < 2 * n as usize + 1 {
            return Err(Error::Config(format!(
                "n_max {} too small for bandwidth {n} (needs {})",
                self.n_max,
                2 * n + 1
            )));
        }
        if self.split <= Decimal::from_int(1) || self.tail_start <= self.split {
            return Err(Error::Config("need 1 < split < tail_start".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.head_grid()?.check_panels(crate::quad::PANEL_WIDTH)?;
        self.mid_grid()?.check_panels(crate::quad::PANEL_WIDTH)?;
        Ok(())
    }

    pub fn head_grid(&self) -> Result<GridSpec> {
        GridSpec::new(Decimal::from_int(0), self.split, self.head_step, self.n_max)
    }

    pub fn mid_grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.split, self.tail_start, self.mid_step, self.n_max)
    }

    /// Identifies every setting that changes a cached integral value or its
    /// bound. The order cap is excluded: it only limits which integrals can
    /// be computed.
    pub fn grid_hash(&self) -> Result<[u8; 32]> {
        let text = format!(
            "qcert-grid-v1\nhead={}\nmid={}\ntail_start={}\ne4={}\n",
            self.head_grid()?.canonical(),
            self.mid_grid()?.canonical(),
            self.tail_start,
            if self.conservative_e4 { "conservative" } else { "standard" }
        );
        Ok(Sha256::digest(text.as_bytes()).into())
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Like [`RunConfig::to_kv_string`] without the execution-only keys
    /// (`workers`, `cache_dir`, `output_dir`), so reports do not depend on
    /// where or how wide a run was.
    pub fn provenance_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            if !matches!(k, "workers" | "cache_dir" | "output_dir") {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("bandwidth", self.bandwidth.to_string()),
            ("split", self.split.to_string()),
            ("tail_start", self.tail_start.to_string()),
            ("head_step", self.head_step.to_string()),
            ("mid_step", self.mid_step.to_string()),
            ("n_max", self.n_max.to_string()),
            ("workers", self.workers.to_string()),
            ("cache_dir", self.cache_dir.display().to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("blocks", self.blocks.to_string()),
            ("conservative_e4", self.conservative_e4.to_string()),
            ("use_grid_cache", self.use_grid_cache.to_string()),
            ("batch_size", self.batch_size.to_string()),
        ]
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key = value, got {line:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Sets a single option by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| bad(key, v))
        }
        match key {
            "bandwidth" => self.bandwidth = parse(key, value)?,
            "split" => self.split = parse(key, value)?,
            "tail_start" => self.tail_start = parse(key, value)?,
            "head_step" => self.head_step = parse(key, value)?,
            "mid_step" => self.mid_step = parse(key, value)?,
            "n_max" => self.n_max = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "cache_dir" => self.cache_dir = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "blocks" => self.blocks = value.parse()?,
            "conservative_e4" => self.conservative_e4 = parse(key, value)?,
            "use_grid_cache" => self.use_grid_cache = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn store_path(&self) -> PathBuf {
        self.cache_dir.join("integrals.store")
    }

    /// Runs `f` on a pool with the configured number of workers.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.bandwidth = 8;
        cfg.blocks = "84..90".parse().unwrap();
        cfg.head_step = "0.0015".parse().unwrap();
        let back = RunConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.blocks, BlockSelector::List(vec![84, 86, 88, 90]));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_kv_str("bandwidth = 7").unwrap().validate().is_err());
        assert!(RunConfig::from_kv_str("nope = 1").is_err());
        assert!(RunConfig::from_kv_str("split 3").is_err());
        assert!(RunConfig::from_kv_str("mid_step = 0.07").unwrap().validate().is_err());
        assert!(RunConfig::from_kv_str("n_max = 20").unwrap().validate().is_err());
        assert!(RunConfig::from_kv_str("n_max = 20\nbandwidth = 8").unwrap().validate().is_ok());
    }

    #[test]
    fn hash_tracks_geometry_not_order_cap() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.n_max = 40;
        b.bandwidth = 8;
        b.workers = 3;
        assert_eq!(a.grid_hash().unwrap(), b.grid_hash().unwrap());
        b.head_step = "0.0015".parse().unwrap();
        assert_ne!(a.grid_hash().unwrap(), b.grid_hash().unwrap());
        let mut c = a.clone();
        c.conservative_e4 = true;
        assert_ne!(a.grid_hash().unwrap(), c.grid_hash().unwrap());
    }
}
