use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qcert_core::pipeline::{self, CACHE_DIR_ENV};
use qcert_core::qform::IndexTriple;
use qcert_core::{Error, RunConfig};

/// Certify positivity of the sextic Bessel-moment quadratic form block by
/// block.
#[derive(Parser, Debug)]
#[command(name = "qcert", version)]
struct Cli {
    #[command(flatten)]
    opts: ConfigArgs,

    #[command(subcommand)]
    command: Command,
}

/// Every flag overrides the matching key of the config file.
#[derive(Args, Debug)]
struct ConfigArgs {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// bandwidth N (even, at most 30)
    #[arg(long, global = true)]
    bandwidth: Option<String>,
    /// head/mid split point S
    #[arg(long, global = true)]
    split: Option<String>,
    /// tail start R
    #[arg(long, global = true)]
    tail_start: Option<String>,
    #[arg(long, global = true)]
    head_step: Option<String>,
    #[arg(long, global = true)]
    mid_step: Option<String>,
    /// highest Bessel order tabulated
    #[arg(long, global = true)]
    n_max: Option<String>,
    /// worker threads, 0 for all cores
    #[arg(long, global = true)]
    workers: Option<String>,
    #[arg(long, global = true, env = CACHE_DIR_ENV)]
    cache_dir: Option<String>,
    #[arg(long, global = true)]
    output_dir: Option<String>,
    /// "all" or a list such as 84..90 or 0,2,4
    #[arg(long, global = true)]
    blocks: Option<String>,
    /// scale E4 by 7/6
    #[arg(long, global = true)]
    conservative_e4: bool,
    /// read columns from tabulated grids instead of recomputing them
    #[arg(long, global = true)]
    use_grid_cache: bool,
    /// integrals per shared grid pass
    #[arg(long, global = true)]
    batch_size: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                RunConfig::from_kv_str(&text)?
            }
            None => RunConfig::default(),
        };
        let pairs = [
            ("bandwidth", &self.bandwidth),
            ("split", &self.split),
            ("tail_start", &self.tail_start),
            ("head_step", &self.head_step),
            ("mid_step", &self.mid_step),
            ("n_max", &self.n_max),
            ("workers", &self.workers),
            ("cache_dir", &self.cache_dir),
            ("output_dir", &self.output_dir),
            ("blocks", &self.blocks),
            ("batch_size", &self.batch_size),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        if self.conservative_e4 {
            cfg.conservative_e4 = true;
        }
        if self.use_grid_cache {
            cfg.use_grid_cache = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate both Bessel grids to the cache directory
    Tabulate,
    /// Compute every integral the selected blocks need
    Integrals,
    /// Assemble the selected blocks and dump them as TSV
    Assemble,
    /// Assemble, certify and write the block table
    Certify,
    /// Extra report files
    #[command(subcommand)]
    Report(Report),
    /// Print the resolved configuration
    ShowConfig,
}

#[derive(Subcommand, Debug)]
enum Report {
    /// Ascending eigenvalues of one block
    Spectrum {
        #[arg(long)]
        block: i32,
    },
    /// One row of Q over the (n1, n2) domain
    Rowmap {
        #[arg(long, allow_hyphen_values = true)]
        m0: String,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = cli.opts.resolve()?;
    match cli.command {
        Command::ShowConfig => print!("{}", cfg.to_kv_string()),
        Command::Tabulate => {
            let r = pipeline::cmd_tabulate(&cfg)?;
            println!(
                "head grid: {} columns ({})",
                r.head_columns,
                if r.head_written { "written" } else { "already valid" }
            );
            println!(
                "mid grid: {} columns ({})",
                r.mid_columns,
                if r.mid_written { "written" } else { "already valid" }
            );
        }
        Command::Integrals => {
            let r = pipeline::cmd_integrals(&cfg)?;
            println!(
                "{} integrals: {} computed, {} cached, {} grid passes",
                r.requested, r.computed, r.cache_hits, r.grid_passes
            );
            for (k, m) in &r.failures {
                eprintln!("failed {k}: {m}");
            }
            if !r.failures.is_empty() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Assemble => {
            for b in pipeline::cmd_assemble(&cfg)? {
                println!("D={} dim={}", b.degree, b.dim());
            }
        }
        Command::Certify => {
            let out = pipeline::cmd_certify(&cfg)?;
            println!("D\tdim\tlambda_min\tschur_bound\tmargin\tcertified");
            for c in &out.certificates {
                println!(
                    "{}\t{}\t{:.5}\t{:.3e}\t{:.3e}\t{}",
                    c.degree,
                    c.dim,
                    c.lambda_table(),
                    c.schur_bound,
                    c.margin,
                    c.certified
                );
            }
            println!("table written to {}", out.table_path.display());
            if !out.all_certified() {
                for c in out.uncertified() {
                    eprintln!("block D={} not certified (margin {:e})", c.degree, c.margin);
                }
                return Ok(ExitCode::from(1));
            }
        }
        Command::Report(Report::Spectrum { block }) => {
            println!("{}", pipeline::report_spectrum(&cfg, block)?.display());
        }
        Command::Report(Report::Rowmap { m0 }) => {
            let m0: IndexTriple = m0.parse()?;
            println!("{}", pipeline::report_rowmap(&cfg, &m0)?.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Integrity(_)) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
