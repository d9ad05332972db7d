//! Sparse direct factorizations.
//!
//! The numeric kernels are `faer`'s supernodal LU (row partial pivoting,
//! COLAMD column ordering) and supernodal Cholesky (AMD ordering). Both are
//! hidden behind [`Factorization`] so that other direct solvers can be slotted
//! in without touching the preconditioners.

use faer::linalg::solvers::{Solve, SolveCore};
use faer::sparse::{SparseRowMat, SymbolicSparseRowMat};
use faer::{Conj, MatMut, Side};

use super::{CsrMatrix, LinalgError};

/// A factorized square operator.
pub trait Factorization: Send + Sync {
    fn dim(&self) -> usize;

    /// Whether the factorization exploited symmetry.
    fn is_symmetric(&self) -> bool;

    /// Overwrites `rhs` with A⁻¹ rhs.
    fn solve_in_place(&self, rhs: &mut [f64]);

    /// Overwrites `rhs` with A⁻ᵀ rhs.
    fn solve_transpose_in_place(&self, rhs: &mut [f64]);

    /// Solves for `ncols` right-hand sides stored column-major in `rhs`.
    fn solve_columns_in_place(&self, rhs: &mut [f64], ncols: usize) {
        let n = self.dim();
        assert_eq!(rhs.len(), n * ncols);
        for col in rhs.chunks_mut(n) {
            self.solve_in_place(col);
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

fn to_faer(a: &CsrMatrix) -> Result<SparseRowMat<usize, f64>, LinalgError> {
    let symbolic = SymbolicSparseRowMat::new_checked(
        a.nrows(),
        a.ncols(),
        a.row_ptr().to_vec(),
        None,
        a.col_idx().to_vec(),
    );
    Ok(SparseRowMat::new(symbolic, a.values().to_vec()))
}

fn faer_generic(e: impl std::fmt::Debug) -> LinalgError {
    LinalgError::Backend(format!("{e:?}"))
}

/// LU factorization with partial pivoting and a fill-reducing column ordering.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinalgError> {
        check_square(a)?;
        let m = to_faer(a)?;
        let lu = m.sp_lu().map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => LinalgError::Singular { pivot: index },
            other => faer_generic(other),
        })?;
        let f = Self { n: a.nrows(), lu };
        probe_regular(a, &f)?;
        Ok(f)
    }
}

impl Factorization for SparseLu {
    fn dim(&self) -> usize {
        self.n
    }

    fn is_symmetric(&self) -> bool {
        false
    }

    fn solve_in_place(&self, rhs: &mut [f64]) {
        self.solve_columns_in_place(rhs, 1);
    }

    fn solve_transpose_in_place(&self, rhs: &mut [f64]) {
        let n = self.n;
        let m = MatMut::from_column_major_slice_mut(rhs, n, 1);
        self.lu.solve_transpose_in_place_with_conj(Conj::No, m);
    }

    fn solve_columns_in_place(&self, rhs: &mut [f64], ncols: usize) {
        let n = self.n;
        assert_eq!(rhs.len(), n * ncols);
        if n == 0 {
            return;
        }
        let m = MatMut::from_column_major_slice_mut(rhs, n, ncols);
        self.lu.solve_in_place(m);
    }
}

/// Cholesky LLᵀ factorization for symmetric positive definite matrices.
pub struct SparseCholesky {
    n: usize,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl SparseCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinalgError> {
        check_square(a)?;
        let m = to_faer(a)?;
        let m = m.to_col_major().map_err(faer_generic)?;
        let llt = m.sp_cholesky(Side::Lower).map_err(|e| match e {
            faer::sparse::linalg::LltError::Numeric(n) => LinalgError::NotPositiveDefinite(format!("{n:?}")),
            other => faer_generic(other),
        })?;
        let f = Self { n: a.nrows(), llt };
        probe_regular(a, &f)?;
        Ok(f)
    }
}

impl Factorization for SparseCholesky {
    fn dim(&self) -> usize {
        self.n
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn solve_in_place(&self, rhs: &mut [f64]) {
        self.solve_columns_in_place(rhs, 1);
    }

    fn solve_transpose_in_place(&self, rhs: &mut [f64]) {
        self.solve_in_place(rhs);
    }

    fn solve_columns_in_place(&self, rhs: &mut [f64], ncols: usize) {
        let n = self.n;
        assert_eq!(rhs.len(), n * ncols);
        if n == 0 {
            return;
        }
        let m = MatMut::from_column_major_slice_mut(rhs, n, ncols);
        self.llt.solve_in_place(m);
    }
}

fn check_square(a: &CsrMatrix) -> Result<(), LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::ShapeMismatch { expected: a.nrows(), found: a.ncols() });
    }
    Ok(())
}

/// Detects numerically singular factors: the backend divides by exact zero pivots
/// silently, so a probe solve must come back finite and consistent.
fn probe_regular(a: &CsrMatrix, f: &dyn Factorization) -> Result<(), LinalgError> {
    let n = a.nrows();
    if n == 0 {
        return Ok(());
    }
    let b: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let x = f.solve(&b);
    if let Some(pivot) = x.iter().position(|v| !v.is_finite()) {
        return Err(LinalgError::Singular { pivot });
    }
    let ax = a.mul_vec(&x);
    let res: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(res <= 1e-3 * nb) {
        let pivot = ax
            .iter()
            .zip(&b)
            .enumerate()
            .max_by(|(_, (p, q)), (_, (r, s))| (*p - *q).abs().total_cmp(&(*r - *s).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        return Err(LinalgError::Singular { pivot });
    }
    Ok(())
}

/// Factorizes `a`; with `symmetric` set a Cholesky factorization is attempted
/// first and LU is used when the matrix turns out not to be positive definite.
pub fn factorize(a: &CsrMatrix, symmetric: bool) -> Result<Box<dyn Factorization>, LinalgError> {
    faer::set_global_parallelism(faer::Par::Seq);
    if symmetric {
        match SparseCholesky::new(a) {
            Ok(f) => return Ok(Box::new(f)),
            Err(LinalgError::NotPositiveDefinite(_)) | Err(LinalgError::Singular { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(Box::new(SparseLu::new(a)?))
}
