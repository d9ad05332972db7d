//! Aggregation-based algebraic multigrid for block (elasticity) systems.
//!
//! Nodes are condensed from the dof blocks, aggregated along strong
//! connections, and the tentative prolongator is the aggregate-wise
//! orthonormalization of the near-nullspace (rigid-body modes), so every
//! mode is reproduced exactly on the coarse level.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, factorize, norm2, CsrMatrix, Factorization, LinalgError, Preconditioner};

#[derive(Debug, thiserror::Error)]
pub enum AmgError {
    #[error("invalid AMG setting: {0}")]
    InvalidConfig(String),
    #[error("near-nullspace has {found} rows, operator has {expected}")]
    NullspaceMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoother {
    /// Damped block Jacobi, damping 4/(3ρ(D⁻¹A)).
    Jacobi,
    /// Symmetric node-block Gauss-Seidel (forward then backward sweep).
    Sgs,
}

impl fmt::Display for Smoother {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Smoother::Jacobi => "jacobi",
            Smoother::Sgs => "sgs",
        })
    }
}

impl FromStr for Smoother {
    type Err = AmgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jacobi" => Ok(Smoother::Jacobi),
            "sgs" => Ok(Smoother::Sgs),
            other => Err(AmgError::InvalidConfig(format!("unknown smoother '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmgSettings {
    pub eps: f64,
    pub max_levels: usize,
    pub smoother: Smoother,
    /// Strong if the condensed entry a_ij ≥ ε a_ii, instead of the block-norm test.
    pub literal_strength_rule: bool,
    /// Smooth the tentative prolongator with one damped Jacobi step.
    pub smoothed_aggregation: bool,
    /// Stop coarsening once a level has at most this many dofs.
    pub coarse_size: usize,
}

impl Default for AmgSettings {
    fn default() -> Self {
        Self {
            eps: 0.08,
            max_levels: 10,
            smoother: Smoother::Sgs,
            literal_strength_rule: false,
            smoothed_aggregation: false,
            coarse_size: 500,
        }
    }
}

impl AmgSettings {
    pub fn validate(&self) -> Result<(), AmgError> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(AmgError::InvalidConfig(format!("eps = {}", self.eps)));
        }
        if self.max_levels == 0 {
            return Err(AmgError::InvalidConfig("max_levels must be at least 1".into()));
        }
        Ok(())
    }
}

/// Node blocks of a level: node `k` owns dofs `ptr[k]..ptr[k+1]`.
#[derive(Debug, Clone)]
pub struct NodeBlocks {
    pub ptr: Vec<usize>,
}

impl NodeBlocks {
    pub fn uniform(n_dofs: usize, block_size: usize) -> Self {
        Self { ptr: (0..=n_dofs / block_size).map(|k| k * block_size).collect() }
    }

    pub fn n_nodes(&self) -> usize {
        self.ptr.len() - 1
    }

    fn node_of_dofs(&self) -> Vec<usize> {
        let mut out = vec![0; *self.ptr.last().unwrap()];
        for k in 0..self.n_nodes() {
            out[self.ptr[k]..self.ptr[k + 1]].iter_mut().for_each(|v| *v = k);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    pub aggregate_of_node: Vec<usize>,
    pub n_aggregates: usize,
}

impl Aggregates {
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.n_aggregates];
        for (node, &a) in self.aggregate_of_node.iter().enumerate() {
            m[a].push(node);
        }
        m
    }
}

/// Condensed node graph: Frobenius norms (or literal scalar values) of each block.
fn condensed(a: &CsrMatrix, blocks: &NodeBlocks, literal: bool) -> Vec<Vec<(usize, f64)>> {
    let node_of = blocks.node_of_dofs();
    let mut rows: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); blocks.n_nodes()];
    for r in 0..a.nrows() {
        let i = node_of[r];
        let ri = r - blocks.ptr[i];
        for (c, v) in a.row(r) {
            let j = node_of[c];
            let cj = c - blocks.ptr[j];
            let e = rows[i].entry(j).or_insert(0.0);
            if literal {
                if ri == cj {
                    *e += v;
                }
            } else {
                *e += v * v;
            }
        }
    }
    rows.into_iter().map(|m| m.into_iter().map(|(j, v)| (j, if literal { v } else { v.sqrt() })).collect()).collect()
}

/// Symmetric strong-connection graph (without self loops).
pub fn strength_graph(a: &CsrMatrix, blocks: &NodeBlocks, eps: f64, literal: bool) -> Vec<Vec<usize>> {
    let g = condensed(a, blocks, literal);
    let n = g.len();
    let diag: Vec<f64> = (0..n).map(|i| g[i].iter().find(|(j, _)| *j == i).map_or(0.0, |(_, v)| *v)).collect();
    let mut strong = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, v) in &g[i] {
            if i == j {
                continue;
            }
            let is_strong = if literal { v >= eps * diag[i] } else { v >= eps * (diag[i] * diag[j]).sqrt() };
            if is_strong {
                strong[i].push(j);
                strong[j].push(i);
            }
        }
    }
    for s in &mut strong {
        s.sort_unstable();
        s.dedup();
    }
    strong
}

/// Greedy aggregation in three passes: roots whose strong neighbourhood is
/// untouched, then attachment of leftovers to a neighbouring aggregate,
/// then aggregates formed from whatever remains.
pub fn aggregate(strong: &[Vec<usize>]) -> Aggregates {
    let n = strong.len();
    const NONE: usize = usize::MAX;
    let mut agg = vec![NONE; n];
    let mut count = 0;
    for i in 0..n {
        if agg[i] != NONE || strong[i].is_empty() || strong[i].iter().any(|&j| agg[j] != NONE) {
            continue;
        }
        agg[i] = count;
        for &j in &strong[i] {
            agg[j] = count;
        }
        count += 1;
    }
    let snapshot = agg.clone();
    for i in 0..n {
        if agg[i] == NONE {
            if let Some(&j) = strong[i].iter().find(|&&j| snapshot[j] != NONE) {
                agg[i] = snapshot[j];
            }
        }
    }
    for i in 0..n {
        if agg[i] != NONE {
            continue;
        }
        agg[i] = count;
        for &j in &strong[i] {
            if agg[j] == NONE {
                agg[j] = count;
            }
        }
        count += 1;
    }
    Aggregates { aggregate_of_node: agg, n_aggregates: count }
}

pub fn strength_and_aggregate(a: &CsrMatrix, eps: f64, block_size: usize, literal: bool) -> Aggregates {
    assert_eq!(a.nrows() % block_size, 0);
    aggregate(&strength_graph(a, &NodeBlocks::uniform(a.nrows(), block_size), eps, literal))
}

/// Tentative prolongator and coarse near-nullspace. Each aggregate's
/// restriction of the modes is orthonormalized with column dropping, so
/// the coarse block size is the local rank.
fn tentative(
    blocks: &NodeBlocks,
    aggs: &Aggregates,
    modes: &[Vec<f64>],
) -> (CsrMatrix, Vec<Vec<f64>>, NodeBlocks) {
    let k = modes.len();
    let members = aggs.members();
    let mut triplets = Vec::new();
    let mut coarse_modes_cols: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut ptr = vec![0];
    for nodes in &members {
        let dofs: Vec<usize> = nodes.iter().flat_map(|&v| blocks.ptr[v]..blocks.ptr[v + 1]).collect();
        let b = DMatrix::from_fn(dofs.len(), k, |i, j| modes[j][dofs[i]]);
        let scale = b.column_iter().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut q: Vec<nalgebra::DVector<f64>> = Vec::new();
        for j in 0..k {
            let mut v = b.column(j).into_owned();
            for _ in 0..2 {
                for u in &q {
                    let p = u.dot(&v);
                    v.axpy(-p, u, 1.0);
                }
            }
            let nv = v.norm();
            if nv > 1e-10 * scale {
                q.push(v / nv);
            }
        }
        let col0 = *ptr.last().unwrap();
        for (c, u) in q.iter().enumerate() {
            for (i, &d) in dofs.iter().enumerate() {
                if u[i] != 0.0 {
                    triplets.push((d, col0 + c, u[i]));
                }
            }
            for (j, col) in coarse_modes_cols.iter_mut().enumerate() {
                col.push(u.dot(&b.column(j)));
            }
        }
        ptr.push(col0 + q.len());
    }
    let nc = *ptr.last().unwrap();
    let n = *blocks.ptr.last().unwrap();
    (CsrMatrix::from_triplets(n, nc, &triplets), coarse_modes_cols, NodeBlocks { ptr })
}

fn block_inverses(a: &CsrMatrix, blocks: &NodeBlocks) -> Vec<DMatrix<f64>> {
    (0..blocks.n_nodes())
        .map(|k| {
            let (lo, hi) = (blocks.ptr[k], blocks.ptr[k + 1]);
            let d = DMatrix::from_fn(hi - lo, hi - lo, |i, j| a.get(lo + i, lo + j));
            d.clone().try_inverse().unwrap_or_else(|| {
                DMatrix::from_diagonal(&d.diagonal().map(|v| if v != 0.0 { 1.0 / v } else { 0.0 }))
            })
        })
        .collect()
}

fn apply_block_inverse(inv: &[DMatrix<f64>], blocks: &NodeBlocks, r: &[f64], out: &mut [f64]) {
    for (k, m) in inv.iter().enumerate() {
        let lo = blocks.ptr[k];
        for i in 0..m.nrows() {
            out[lo + i] = (0..m.ncols()).map(|j| m[(i, j)] * r[lo + j]).sum();
        }
    }
}

/// Spectral radius estimate of D⁻¹A by power iteration.
fn jacobi_radius(a: &CsrMatrix, inv: &[DMatrix<f64>], blocks: &NodeBlocks) -> f64 {
    let n = a.nrows();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut ax = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut lambda = 1.0;
    for _ in 0..15 {
        let nx = norm2(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        a.spmv(&x, &mut ax);
        apply_block_inverse(inv, blocks, &ax, &mut y);
        lambda = norm2(&y);
        std::mem::swap(&mut x, &mut y);
    }
    lambda.max(f64::MIN_POSITIVE)
}

struct Level {
    a: CsrMatrix,
    blocks: NodeBlocks,
    /// Prolongation to this level from the next coarser one.
    p: Option<CsrMatrix>,
    r: Option<CsrMatrix>,
    block_inv: Vec<DMatrix<f64>>,
    omega: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AmgStats {
    pub level_sizes: Vec<usize>,
    pub level_nnz: Vec<usize>,
    pub operator_complexity: f64,
}

pub struct AmgHierarchy {
    levels: Vec<Level>,
    coarse: Box<dyn Factorization>,
    smoother: Smoother,
    modes_per_level: Vec<Vec<Vec<f64>>>,
    pub eps: f64,
}

/// Hierarchy for a 3-dof-per-node operator with rigid-body modes of `coords`.
pub fn build_hierarchy(a: &CsrMatrix, coords: &[[f64; 3]], settings: &AmgSettings) -> Result<AmgHierarchy, AmgError> {
    build_hierarchy_with_nullspace(a, &crate::fem::rigid_body_modes(coords), 3, settings)
}

pub fn build_hierarchy_with_nullspace(
    a: &CsrMatrix,
    nullspace: &[Vec<f64>],
    block_size: usize,
    settings: &AmgSettings,
) -> Result<AmgHierarchy, AmgError> {
    settings.validate()?;
    if block_size == 0 || a.nrows() % block_size != 0 {
        return Err(AmgError::InvalidConfig(format!("block size {block_size} does not divide {}", a.nrows())));
    }
    if let Some(m) = nullspace.iter().find(|m| m.len() != a.nrows()) {
        return Err(AmgError::NullspaceMismatch { expected: a.nrows(), found: m.len() });
    }
    let mut levels = Vec::new();
    let mut modes_per_level = vec![nullspace.to_vec()];
    let mut cur = a.clone();
    let mut blocks = NodeBlocks::uniform(a.nrows(), block_size);
    let mut modes = nullspace.to_vec();
    while levels.len() + 1 < settings.max_levels && cur.nrows() > settings.coarse_size {
        let strong = strength_graph(&cur, &blocks, settings.eps, settings.literal_strength_rule);
        let aggs = aggregate(&strong);
        let (mut p, coarse_modes, coarse_blocks) = tentative(&blocks, &aggs, &modes);
        if (cur.nrows() as f64) < 1.1 * p.ncols() as f64 || p.ncols() == 0 {
            break;
        }
        let block_inv = block_inverses(&cur, &blocks);
        let rho = jacobi_radius(&cur, &block_inv, &blocks);
        if settings.smoothed_aggregation {
            // P ← (I − ω D⁻¹A) P
            let ap = cur.matmul(&p);
            let mut dinv_trip = Vec::new();
            for (k, m) in block_inv.iter().enumerate() {
                let lo = blocks.ptr[k];
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        dinv_trip.push((lo + i, lo + j, m[(i, j)]));
                    }
                }
            }
            let dinv = CsrMatrix::from_triplets(cur.nrows(), cur.nrows(), &dinv_trip);
            p = p.add_scaled(-4.0 / (3.0 * rho), &dinv.matmul(&ap));
        }
        let r = p.transpose();
        let next = r.matmul(&cur).matmul(&p);
        levels.push(Level { a: cur, blocks, p: Some(p), r: Some(r), block_inv, omega: 4.0 / (3.0 * rho) });
        cur = next;
        blocks = coarse_blocks;
        modes = coarse_modes;
        modes_per_level.push(modes.clone());
    }
    let coarse = factorize(&cur, false)?;
    levels.push(Level { a: cur, blocks, p: None, r: None, block_inv: Vec::new(), omega: 1.0 });
    Ok(AmgHierarchy { levels, coarse, smoother: settings.smoother, modes_per_level, eps: settings.eps })
}

impl AmgHierarchy {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn operator(&self, level: usize) -> &CsrMatrix {
        &self.levels[level].a
    }

    /// Prolongation from level `level + 1` to `level`.
    pub fn prolongation(&self, level: usize) -> Option<&CsrMatrix> {
        self.levels[level].p.as_ref()
    }

    /// Near-nullspace basis represented on `level`.
    pub fn modes(&self, level: usize) -> &[Vec<f64>] {
        &self.modes_per_level[level]
    }

    pub fn stats(&self) -> AmgStats {
        let level_sizes: Vec<usize> = self.levels.iter().map(|l| l.a.nrows()).collect();
        let level_nnz: Vec<usize> = self.levels.iter().map(|l| l.a.nnz()).collect();
        let operator_complexity = level_nnz.iter().sum::<usize>() as f64 / level_nnz[0] as f64;
        AmgStats { level_sizes, level_nnz, operator_complexity }
    }

    /// One smoothing sweep on `A x = b`, updating `x`.
    pub fn smooth(&self, level: usize, b: &[f64], x: &mut [f64]) {
        let l = &self.levels[level];
        match self.smoother {
            Smoother::Sgs => {
                let mut s = Vec::new();
                let mut sweep = |k: usize, x: &mut [f64]| {
                    let (lo, hi) = (l.blocks.ptr[k], l.blocks.ptr[k + 1]);
                    s.clear();
                    for i in lo..hi {
                        let mut v = b[i];
                        for (j, aij) in l.a.row(i) {
                            if j < lo || j >= hi {
                                v -= aij * x[j];
                            }
                        }
                        s.push(v);
                    }
                    let m = &l.block_inv[k];
                    for i in 0..hi - lo {
                        x[lo + i] = (0..hi - lo).map(|j| m[(i, j)] * s[j]).sum();
                    }
                };
                for k in 0..l.blocks.n_nodes() {
                    sweep(k, x);
                }
                for k in (0..l.blocks.n_nodes()).rev() {
                    sweep(k, x);
                }
            }
            Smoother::Jacobi => {
                let mut r = b.to_vec();
                l.a.spmv_add(-1.0, x, &mut r);
                let mut d = vec![0.0; r.len()];
                apply_block_inverse(&l.block_inv, &l.blocks, &r, &mut d);
                x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += l.omega * di);
            }
        }
    }

    fn cycle(&self, level: usize, b: &[f64], x: &mut [f64]) {
        if level + 1 == self.levels.len() {
            x.copy_from_slice(b);
            self.coarse.solve_in_place(x);
            return;
        }
        let l = &self.levels[level];
        x.iter_mut().for_each(|v| *v = 0.0);
        self.smooth(level, b, x);
        let mut res = b.to_vec();
        l.a.spmv_add(-1.0, x, &mut res);
        let r = l.r.as_ref().unwrap();
        let mut bc = vec![0.0; r.nrows()];
        r.spmv(&res, &mut bc);
        let mut xc = vec![0.0; bc.len()];
        self.cycle(level + 1, &bc, &mut xc);
        l.p.as_ref().unwrap().spmv_add(1.0, &xc, x);
        self.smooth(level, b, x);
    }

    /// One V(1,1) cycle from a zero initial guess.
    pub fn vcycle(&self, r: &[f64], z: &mut [f64]) {
        self.cycle(0, r, z);
    }

    /// Largest relative deviation of `A_{l+1} x` from `Pᵀ A_l P x` over random `x`.
    pub fn galerkin_defect(&self, level: usize, x: &[f64]) -> f64 {
        let l = &self.levels[level];
        let (p, r) = (l.p.as_ref().unwrap(), l.r.as_ref().unwrap());
        let coarse = &self.levels[level + 1].a;
        let direct = coarse.mul_vec(x);
        let via = r.mul_vec(&l.a.mul_vec(&p.mul_vec(x)));
        let diff: Vec<f64> = direct.iter().zip(&via).map(|(a, b)| a - b).collect();
        norm2(&diff) / norm2(&via).max(f64::MIN_POSITIVE)
    }

    /// ‖P Pᵀ v − v‖/‖v‖ for the prolongation below `level`; P has orthonormal columns.
    pub fn range_defect(&self, level: usize, v: &[f64]) -> f64 {
        let l = &self.levels[level];
        let (p, r) = (l.p.as_ref().unwrap(), l.r.as_ref().unwrap());
        let back = p.mul_vec(&r.mul_vec(v));
        let diff: Vec<f64> = back.iter().zip(v).map(|(a, b)| a - b).collect();
        norm2(&diff) / norm2(v).max(f64::MIN_POSITIVE)
    }

    /// Energy-type error measure used by smoother tests: ‖e‖ after `sweeps`.
    pub fn smoother_error_history(&self, level: usize, x_exact: &[f64], sweeps: usize) -> Vec<f64> {
        let a = &self.levels[level].a;
        let b = a.mul_vec(x_exact);
        let mut x = vec![0.0; b.len()];
        let mut hist = Vec::with_capacity(sweeps + 1);
        let err = |x: &[f64]| {
            let e: Vec<f64> = x.iter().zip(x_exact).map(|(a, b)| a - b).collect();
            dot(&e, &a.mul_vec(&e)).max(0.0).sqrt()
        };
        hist.push(err(&x));
        for _ in 0..sweeps {
            self.smooth(level, &b, &mut x);
            hist.push(err(&x));
        }
        hist
    }
}

impl Preconditioner for AmgHierarchy {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.vcycle(r, z);
    }
}

#[cfg(test)]
mod tests;
