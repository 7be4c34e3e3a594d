//! Eigenvalues of the assembled blocks, the row-sum bound on the error
//! matrix, and the report files built from them.

use std::io::Write;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hiprec::ExtReal;
use crate::qform::{IndexTriple, QBlock};
use crate::quad::round_up;

/// Largest matrix accepted by [`symmetric_eigen`].
pub const MAX_EIGEN_DIM: usize = 512;
const OFF_DIAGONAL_TOL: f64 = 1e-20;
const SYMMETRY_TOL: f64 = 1e-25;
const RESIDUAL_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct Eigen {
    /// Ascending.
    pub values: Vec<ExtReal>,
    /// Unit eigenvector of `values[0]`.
    pub min_vector: Vec<ExtReal>,
    /// `‖A v - λ_min v‖_2` against the input matrix.
    pub residual: f64,
    pub sweeps: usize,
}

fn frobenius(a: &[Vec<ExtReal>]) -> f64 {
    a.iter()
        .flat_map(|r| r.iter())
        .map(|x| x.hi() * x.hi())
        .sum::<f64>()
        .sqrt()
}

fn off_diagonal(a: &[Vec<ExtReal>]) -> f64 {
    let mut s = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            if i != j {
                s += x.hi() * x.hi();
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi in extended precision.
pub fn symmetric_eigen(matrix: &[Vec<ExtReal>]) -> Result<Eigen> {
    let n = matrix.len();
    if n == 0 || n > MAX_EIGEN_DIM {
        return Err(Error::Domain(format!("dimension {n} outside 1..={MAX_EIGEN_DIM}")));
    }
    if matrix.iter().any(|r| r.len() != n) {
        return Err(Error::Domain("matrix is not square".into()));
    }
    let norm = frobenius(matrix);
    for i in 0..n {
        for j in 0..i {
            if (matrix[i][j] - matrix[j][i]).abs().to_f64() > SYMMETRY_TOL * norm.max(1.0) {
                return Err(Error::Domain(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut a = matrix.to_vec();
    let mut v = vec![vec![ExtReal::ZERO; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = ExtReal::ONE;
    }
    let mut sweeps = 0;
    while off_diagonal(&a) > OFF_DIAGONAL_TOL * norm {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Domain(format!("Jacobi did not converge in {MAX_SWEEPS} sweeps")));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.is_zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / apq.mul_f64(2.0);
                let t = if theta.abs().hi() > 1e100 {
                    theta.mul_f64(2.0).recip()
                } else {
                    let root = (theta.square() + ExtReal::ONE).sqrt()?;
                    let t = (theta.abs() + root).recip();
                    if theta.hi() < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = (t.square() + ExtReal::ONE).sqrt()?.recip();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let (akp, akq) = (a[k][p], a[k][q]);
                    let np = c * akp - s * akq;
                    let nq = s * akp + c * akq;
                    a[k][p] = np;
                    a[p][k] = np;
                    a[k][q] = nq;
                    a[q][k] = nq;
                }
                a[p][p] -= t * apq;
                a[q][q] += t * apq;
                a[p][q] = ExtReal::ZERO;
                a[q][p] = ExtReal::ZERO;
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).expect("finite eigenvalues"));
    let values: Vec<ExtReal> = order.iter().map(|&i| a[i][i]).collect();
    let min_vector: Vec<ExtReal> = v.iter().map(|row| row[order[0]]).collect();
    let lambda = values[0];
    let residual = matrix
        .iter()
        .zip(&min_vector)
        .map(|(row, &vi)| {
            let av: ExtReal = row.iter().zip(&min_vector).map(|(&x, &y)| x * y).sum();
            let r = (av - lambda * vi).to_f64();
            r * r
        })
        .sum::<f64>()
        .sqrt();
    Ok(Eigen {
        values,
        min_vector,
        residual,
        sweeps,
    })
}

/// Largest row sum of a nonnegative matrix, rounded up so it bounds the
/// exact sum.
pub fn schur_rowsum(err: &[Vec<f64>]) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, row) in err.iter().enumerate() {
        if let Some(x) = row.iter().find(|x| !(**x >= 0.0)) {
            return Err(Error::Domain(format!("negative or NaN error entry {x} in row {i}")));
        }
        let s: f64 = row.iter().sum();
        // f64 summation of n terms loses at most (n - 1) ulps relative
        worst = worst.max(s * (1.0 + (row.len() as f64 + 1.0) * f64::EPSILON));
    }
    Ok(if worst == 0.0 { 0.0 } else { round_up(worst) })
}

/// Truncates toward zero to `places` decimal places.
pub fn truncate_decimals(x: f64, places: i32) -> f64 {
    let s = 10f64.powi(places);
    (x * s).trunc() / s
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockCertificate {
    pub degree: i32,
    pub dim: usize,
    pub lambda_min: f64,
    pub schur_bound: f64,
    /// `lambda_min - schur_bound`.
    pub margin: f64,
    pub residual: f64,
    pub matrix_norm: f64,
    pub certified: bool,
    /// All eigenvalues, ascending.
    pub spectrum: Vec<ExtReal>,
}

impl BlockCertificate {
    /// `lambda_min` truncated to five decimals, the precision of the
    /// published table.
    pub fn lambda_table(&self) -> f64 {
        truncate_decimals(self.lambda_min, 5)
    }
}

pub fn certify_block(block: &QBlock) -> Result<BlockCertificate> {
    let eig = symmetric_eigen(&block.values)?;
    let schur_bound = schur_rowsum(&block.err)?;
    let lambda_min = eig.values[0].to_f64();
    let norm = frobenius(&block.values);
    let margin = lambda_min - schur_bound;
    Ok(BlockCertificate {
        degree: block.degree,
        dim: block.dim(),
        lambda_min,
        schur_bound,
        margin,
        residual: eig.residual,
        matrix_norm: norm,
        certified: margin > 0.0 && eig.residual <= RESIDUAL_TOL * norm,
        spectrum: eig.values,
    })
}

fn write_config_header<W: Write>(w: &mut W, cfg: &RunConfig) -> Result<()> {
    for line in cfg.provenance_string().lines() {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

/// Table of certificates, one row per block.
pub fn write_table_tsv<W: Write>(mut w: W, cfg: &RunConfig, certs: &[BlockCertificate]) -> Result<()> {
    write_config_header(&mut w, cfg)?;
    writeln!(w, "D\tdim\tlambda_min\tlambda_min_5dp\tschur_bound\tmargin\tresidual\tcertified")?;
    for c in certs {
        writeln!(
            w,
            "{}\t{}\t{:.17e}\t{:.5}\t{:e}\t{:e}\t{:e}\t{}",
            c.degree,
            c.dim,
            c.lambda_min,
            c.lambda_table(),
            c.schur_bound,
            c.margin,
            c.residual,
            c.certified
        )?;
    }
    Ok(())
}

/// Ascending eigenvalues of one block.
pub fn write_spectrum_csv<W: Write>(mut w: W, cfg: &RunConfig, cert: &BlockCertificate) -> Result<()> {
    write_config_header(&mut w, cfg)?;
    writeln!(w, "# degree = {}", cert.degree)?;
    writeln!(w, "index,eigenvalue")?;
    for (i, v) in cert.spectrum.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, v.to_sci_string(32))?;
    }
    Ok(())
}

/// `(n1, n2)` cells of the hexagonal domain for degree `degree`: even
/// `n1, n2, n3 = degree - n1 - n2`, all in `[-N, N]`. Each cell maps to the
/// sorted triple that indexes `Q`.
pub fn rowmap_domain(bandwidth: i32, degree: i32) -> Vec<(i32, i32, IndexTriple)> {
    let mut out = Vec::new();
    for n1 in (-bandwidth..=bandwidth).step_by(2) {
        for n2 in (-bandwidth..=bandwidth).step_by(2) {
            let n3 = degree - n1 - n2;
            if n3.abs() <= bandwidth && n3 % 2 == 0 {
                let mut s = [n1, n2, n3];
                s.sort_unstable();
                out.push((n1, n2, IndexTriple(s)));
            }
        }
    }
    out
}

/// Row `Q(m0, ·)` as `(n1, n2, value)` triples.
pub fn write_rowmap_csv<W: Write>(
    mut w: W,
    cfg: &RunConfig,
    m0: &IndexTriple,
    cells: &[(i32, i32, ExtReal)],
) -> Result<()> {
    write_config_header(&mut w, cfg)?;
    writeln!(w, "# m0 = {m0}")?;
    writeln!(w, "n1,n2,value")?;
    for (n1, n2, v) in cells {
        writeln!(w, "{n1},{n2},{}", v.to_sci_string(32))?;
    }
    Ok(())
}
