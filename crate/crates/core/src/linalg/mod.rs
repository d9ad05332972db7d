//! Sparse linear algebra: CSR storage, subassembled operators, direct
//! factorizations and restarted GMRES.

mod csr;
mod factor;
mod gmres;
mod unassembled;

use std::io::Write;
use std::path::Path;

pub use csr::CsrMatrix;
pub use factor::{factorize, Factorization, SparseCholesky, SparseLu};
pub use gmres::{gmres, GmresResult, GmresSettings, GmresStatus};
pub use unassembled::UnassembledMatrix;

#[derive(Debug, thiserror::Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("matrix is singular (pivot {pivot})")]
    Singular { pivot: usize },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),
    #[error("direct solver backend: {0}")]
    Backend(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// A square linear map.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Approximate inverse used as right preconditioner.
pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv(x, y);
    }
}

/// Exact inverse through a direct factorization.
pub struct DirectPreconditioner(pub Box<dyn Factorization>);

impl Preconditioner for DirectPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.0.solve_in_place(z);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Writes a matrix in MatrixMarket coordinate format (1-based indices).
pub fn write_matrix_market(a: &CsrMatrix, path: &Path) -> Result<(), LinalgError> {
    let io = |source| LinalgError::Io { path: path.display().to_string(), source };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "%%MatrixMarket matrix coordinate real general").map_err(io)?;
    writeln!(f, "{} {} {}", a.nrows(), a.ncols(), a.nnz()).map_err(io)?;
    for r in 0..a.nrows() {
        for (c, v) in a.row(r) {
            writeln!(f, "{} {} {:.17e}", r + 1, c + 1, v).map_err(io)?;
        }
    }
    f.flush().map_err(io)
}

/// Writes every local block as `<stem>_<i>.mtx` plus `<stem>_<i>.map` with the
/// local-to-global index list.
pub fn write_unassembled_matrix_market(a: &UnassembledMatrix, dir: &Path, stem: &str) -> Result<(), LinalgError> {
    for i in 0..a.n_subdomains() {
        write_matrix_market(a.block(i), &dir.join(format!("{stem}_{i}.mtx")))?;
        let path = dir.join(format!("{stem}_{i}.map"));
        let io = |source| LinalgError::Io { path: path.display().to_string(), source };
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io)?);
        for g in a.local_to_global(i) {
            writeln!(f, "{g}").map_err(io)?;
        }
        f.flush().map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_market_output() {
        let dir = tempfile::tempdir().unwrap();
        let a = CsrMatrix::from_dense(2, 2, &[1.0, 0.0, -2.0, 3.0]);
        let p = dir.path().join("a.mtx");
        write_matrix_market(&a, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "2 2 3");
        assert!(lines[3].starts_with("2 1 -2.0"));
    }
}
