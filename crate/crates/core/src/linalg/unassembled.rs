//! Subassembled operators: `A = Σᵢ Rᵢᵀ A⁽ⁱ⁾ Rᵢ` with the local blocks kept apart.

use rayon::prelude::*;

use super::{CsrMatrix, LinalgError, LinearOperator};

#[derive(Debug, Clone)]
pub struct UnassembledMatrix {
    n_global: usize,
    blocks: Vec<CsrMatrix>,
    local_to_global: Vec<Vec<usize>>,
    block_size: usize,
    near_nullspace: Option<Vec<Vec<f64>>>,
}

impl UnassembledMatrix {
    pub fn new(
        n_global: usize,
        blocks: Vec<CsrMatrix>,
        local_to_global: Vec<Vec<usize>>,
        block_size: usize,
    ) -> Result<Self, LinalgError> {
        if blocks.len() != local_to_global.len() {
            return Err(LinalgError::ShapeMismatch { expected: blocks.len(), found: local_to_global.len() });
        }
        for (b, map) in blocks.iter().zip(&local_to_global) {
            if b.nrows() != map.len() || b.ncols() != map.len() {
                return Err(LinalgError::ShapeMismatch { expected: map.len(), found: b.nrows() });
            }
            if let Some(&g) = map.iter().find(|&&g| g >= n_global) {
                return Err(LinalgError::InvalidStructure(format!("global index {g} out of range")));
            }
        }
        Ok(Self { n_global, blocks, local_to_global, block_size, near_nullspace: None })
    }

    /// Attaches near-nullspace vectors; each is normalized to unit length.
    pub fn with_near_nullspace(mut self, mut modes: Vec<Vec<f64>>) -> Self {
        for m in &mut modes {
            assert_eq!(m.len(), self.n_global);
            let nrm = super::norm2(m);
            if nrm > 0.0 {
                m.iter_mut().for_each(|v| *v /= nrm);
            }
        }
        self.near_nullspace = Some(modes);
        self
    }

    pub fn n_global(&self) -> usize {
        self.n_global
    }

    pub fn n_subdomains(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[CsrMatrix] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &CsrMatrix {
        &self.blocks[i]
    }

    pub fn local_to_global(&self, i: usize) -> &[usize] {
        &self.local_to_global[i]
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn near_nullspace(&self) -> Option<&[Vec<f64>]> {
        self.near_nullspace.as_deref()
    }

    /// y = Σᵢ Rᵢᵀ A⁽ⁱ⁾ Rᵢ x
    pub fn spmv(&self, x: &[f64], y: &mut [f64]) -> Result<(), LinalgError> {
        if x.len() != self.n_global {
            return Err(LinalgError::ShapeMismatch { expected: self.n_global, found: x.len() });
        }
        if y.len() != self.n_global {
            return Err(LinalgError::ShapeMismatch { expected: self.n_global, found: y.len() });
        }
        let locals: Vec<Vec<f64>> = self
            .blocks
            .par_iter()
            .zip(self.local_to_global.par_iter())
            .map(|(a, map)| {
                let xl: Vec<f64> = map.iter().map(|&g| x[g]).collect();
                a.mul_vec(&xl)
            })
            .collect();
        y.iter_mut().for_each(|v| *v = 0.0);
        for (yl, map) in locals.iter().zip(&self.local_to_global) {
            for (&g, v) in map.iter().zip(yl) {
                y[g] += v;
            }
        }
        Ok(())
    }

    /// Sums the local blocks into one global CSR matrix.
    pub fn assemble(&self) -> CsrMatrix {
        let nnz: usize = self.blocks.iter().map(|b| b.nnz()).sum();
        let mut trip = Vec::with_capacity(nnz);
        for (a, map) in self.blocks.iter().zip(&self.local_to_global) {
            for r in 0..a.nrows() {
                trip.extend(a.row(r).map(|(c, v)| (map[r], map[c], v)));
            }
        }
        CsrMatrix::from_triplets(self.n_global, self.n_global, &trip)
    }

    /// Number of subdomains touching each global index.
    pub fn multiplicity(&self) -> Vec<usize> {
        let mut m = vec![0usize; self.n_global];
        for map in &self.local_to_global {
            for &g in map {
                m[g] += 1;
            }
        }
        m
    }
}

impl LinearOperator for UnassembledMatrix {
    fn dim(&self) -> usize {
        self.n_global
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv(x, y).expect("operator shape");
    }
}
