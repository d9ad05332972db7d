use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{agglomerate_coarse, build_primal_space, build_scaling, BddcError, BddcSettings, PrimalSpace, ScalingWeights};
use crate::linalg::{dot, factorize, CsrMatrix, Factorization, LinearOperator, Preconditioner, UnassembledMatrix};
use crate::mesh::{InterfaceSets, BLOCK_SIZE};

struct Subdomain {
    n: usize,
    l2g: Vec<usize>,
    interior: Vec<usize>,
    gamma: Vec<usize>,
    /// Compact interface index of each entry of `gamma`.
    gamma_compact: Vec<usize>,
    weights: Vec<f64>,
    a_ii: Option<Box<dyn Factorization>>,
    a_ig: CsrMatrix,
    a_gi: CsrMatrix,
    a_gg: CsrMatrix,
    /// LU of [[K, s·Cᵀ], [s·C, 0]].
    saddle: Box<dyn Factorization>,
    primal_dofs: Vec<usize>,
    /// Coarse basis, column-major n × n_c.
    phi: Vec<f64>,
}

impl Subdomain {
    fn nc(&self) -> usize {
        self.primal_dofs.len()
    }

    fn interior_solve(&self, rhs: &mut [f64]) {
        if let Some(f) = &self.a_ii {
            f.solve_in_place(rhs);
        }
    }
}

enum CoarseSolver {
    None,
    Direct(Box<dyn Factorization>),
    Nested(Box<BddcPrecond>),
}

#[derive(Debug, Clone, Serialize)]
pub struct BddcStats {
    pub levels: usize,
    pub n_subdomains: usize,
    pub n_interface_dofs: usize,
    pub n_primal: usize,
    pub symmetric: bool,
    /// Subdomain count of the coarse level, when it is itself BDDC.
    pub coarse_subdomains: Option<usize>,
}

/// Two-level or multilevel BDDC preconditioner; immutable once built.
pub struct BddcPrecond {
    n_global: usize,
    gamma_dofs: Vec<usize>,
    subdomains: Vec<Subdomain>,
    coarse: CoarseSolver,
    coarse_matrix: Option<CsrMatrix>,
    primal: PrimalSpace,
    scaling: ScalingWeights,
    stats: BddcStats,
}

/// Probe `⟨Ax, y⟩ = ⟨x, Ay⟩` on 20 random pairs.
fn probe_symmetric(a: &CsrMatrix, seed: u64) -> bool {
    let n = a.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (ax, ay) = (a.mul_vec(&x), a.mul_vec(&y));
        let scale = crate::linalg::norm2(&ax) * crate::linalg::norm2(&y) + f64::MIN_POSITIVE;
        if (dot(&ax, &y) - dot(&x, &ay)).abs() > 1e-10 * scale {
            return false;
        }
    }
    true
}

/// Saddle-point matrix with constraint rows scaled to the mean diagonal of `k`;
/// returns the scale.
fn local_saddle(k: &CsrMatrix, rows: &[Vec<(usize, f64)>]) -> (CsrMatrix, f64) {
    let n = k.nrows();
    let diag = k.diagonal();
    let s = (diag.iter().map(|v| v.abs()).sum::<f64>() / n.max(1) as f64).max(f64::MIN_POSITIVE);
    let mut t = Vec::with_capacity(k.nnz() + 2 * rows.iter().map(|r| r.len()).sum::<usize>());
    for i in 0..n {
        for (j, v) in k.row(i) {
            t.push((i, j, v));
        }
    }
    for (r, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            t.push((n + r, j, s * v));
            t.push((j, n + r, s * v));
        }
    }
    (CsrMatrix::from_triplets(n + rows.len(), n + rows.len(), &t), s)
}

fn build_subdomain(
    s: usize,
    k: &CsrMatrix,
    l2g: &[usize],
    interface: &InterfaceSets,
    scaling: &ScalingWeights,
    primal: &PrimalSpace,
    compact: &[usize],
    symmetric: bool,
) -> Result<(Subdomain, Vec<f64>), BddcError> {
    let n = l2g.len();
    let nodes = &interface.subdomain_nodes[s];
    let mut interior = Vec::new();
    let mut gamma = Vec::new();
    for (p, &node) in nodes.iter().enumerate() {
        let list = if interface.is_interface(node) { &mut gamma } else { &mut interior };
        list.extend((0..BLOCK_SIZE).map(|c| BLOCK_SIZE * p + c));
    }
    let mut pos_i = vec![usize::MAX; n];
    let mut pos_g = vec![usize::MAX; n];
    for (a, &i) in interior.iter().enumerate() {
        pos_i[i] = a;
    }
    for (a, &g) in gamma.iter().enumerate() {
        pos_g[g] = a;
    }
    let a_ii_mat = k.extract(&interior, &pos_i, interior.len());
    let a_ii = if interior.is_empty() {
        None
    } else {
        Some(factorize(&a_ii_mat, symmetric).map_err(|_| BddcError::SingularLocal { subdomain: s, what: "interior block" })?)
    };
    let a_ig = k.extract(&interior, &pos_g, gamma.len());
    let a_gi = k.extract(&gamma, &pos_i, interior.len());
    let a_gg = k.extract(&gamma, &pos_g, gamma.len());
    let gamma_compact: Vec<usize> = gamma.iter().map(|&g| compact[l2g[g]]).collect();
    let weights: Vec<f64> = scaling.weights[s].iter().map(|&(_, w)| w).collect();
    debug_assert!(scaling.weights[s].iter().map(|&(d, _)| d).eq(gamma.iter().copied()));

    let lc = &primal.local[s];
    let nc = lc.len();
    let (saddle_mat, scale) = local_saddle(k, &lc.rows);
    let saddle = factorize(&saddle_mat, false).map_err(|_| BddcError::SingularLocal { subdomain: s, what: "constrained Neumann problem" })?;

    let m = n + nc;
    let mut rhs = vec![0.0; m * nc];
    for r in 0..nc {
        rhs[r * m + n + r] = scale;
    }
    saddle.solve_columns_in_place(&mut rhs, nc);
    let mut phi = vec![0.0; n * nc];
    for r in 0..nc {
        phi[r * n..(r + 1) * n].copy_from_slice(&rhs[r * m..r * m + n]);
    }
    // local coarse matrix Φᵀ K Φ, row-major
    let mut s_loc = vec![0.0; nc * nc];
    let mut kphi = vec![0.0; n];
    for c in 0..nc {
        k.spmv(&phi[c * n..(c + 1) * n], &mut kphi);
        for r in 0..nc {
            s_loc[r * nc + c] = dot(&phi[r * n..(r + 1) * n], &kphi);
        }
    }
    let sub = Subdomain {
        n,
        l2g: l2g.to_vec(),
        interior,
        gamma,
        gamma_compact,
        weights,
        a_ii,
        a_ig,
        a_gi,
        a_gg,
        saddle,
        primal_dofs: lc.primal_dofs.clone(),
        phi,
    };
    Ok((sub, s_loc))
}

/// Builds the preconditioner for `a`, whose blocks must be numbered as
/// three dofs per node of `interface.subdomain_nodes`.
pub fn build_bddc(a: &UnassembledMatrix, interface: &InterfaceSets, settings: &BddcSettings) -> Result<BddcPrecond, BddcError> {
    settings.validate()?;
    let ns = interface.n_subdomains();
    if a.n_subdomains() != ns || a.n_global() != interface.n_dofs() {
        return Err(BddcError::Inconsistent(format!(
            "{} blocks over {} dofs vs {ns} subdomains over {} dofs",
            a.n_subdomains(),
            a.n_global(),
            interface.n_dofs()
        )));
    }
    for s in 0..ns {
        let expect = interface.subdomain_nodes[s].iter().flat_map(|&n| (0..BLOCK_SIZE).map(move |c| BLOCK_SIZE * n + c));
        if !a.local_to_global(s).iter().copied().eq(expect) {
            return Err(BddcError::Inconsistent(format!("dof numbering of subdomain {s}")));
        }
    }
    let symmetric = a.blocks().par_iter().enumerate().all(|(s, b)| probe_symmetric(b, s as u64));
    let scaling = build_scaling(interface);
    let primal = build_primal_space(interface, &settings.primal)?;
    let gamma_dofs = interface.gamma_dofs();
    let mut compact = vec![usize::MAX; a.n_global()];
    for (k, &g) in gamma_dofs.iter().enumerate() {
        compact[g] = k;
    }

    let built: Vec<(Subdomain, Vec<f64>)> = (0..ns)
        .into_par_iter()
        .map(|s| build_subdomain(s, a.block(s), a.local_to_global(s), interface, &scaling, &primal, &compact, symmetric))
        .collect::<Result<_, _>>()?;
    let (subdomains, s_locs): (Vec<Subdomain>, Vec<Vec<f64>>) = built.into_iter().unzip();

    let n_primal = primal.n_primal();
    let mut coarse_subdomains = None;
    let (coarse, coarse_matrix) = if n_primal == 0 {
        (CoarseSolver::None, None)
    } else {
        let mut t = Vec::new();
        for (sub, sl) in subdomains.iter().zip(&s_locs) {
            let nc = sub.nc();
            for r in 0..nc {
                for c in 0..nc {
                    t.push((sub.primal_dofs[r], sub.primal_dofs[c], sl[r * nc + c]));
                }
            }
        }
        let s_pp = CsrMatrix::from_triplets(n_primal, n_primal, &t);
        let groups = if settings.levels >= 3 { agglomerate_coarse(interface, settings.agglomeration_factor)? } else { vec![0; ns] };
        let n_groups = groups.iter().max().map_or(0, |g| g + 1);
        let solver = if settings.levels >= 3 && n_groups > 1 {
            let nested = build_coarse_level(&primal, &subdomains, &s_locs, &groups, n_groups, settings)?;
            coarse_subdomains = Some(n_groups);
            CoarseSolver::Nested(Box::new(nested))
        } else {
            let sym = symmetric && probe_symmetric(&s_pp, 99);
            CoarseSolver::Direct(factorize(&s_pp, sym).map_err(|_| BddcError::SingularLocal { subdomain: usize::MAX, what: "coarse matrix" })?)
        };
        (solver, Some(s_pp))
    };
    let levels = match &coarse {
        CoarseSolver::Nested(_) => 3,
        _ => 2,
    };
    let stats = BddcStats {
        levels,
        n_subdomains: ns,
        n_interface_dofs: gamma_dofs.len(),
        n_primal,
        symmetric,
        coarse_subdomains,
    };
    Ok(BddcPrecond { n_global: a.n_global(), gamma_dofs, subdomains, coarse, coarse_matrix, primal, scaling, stats })
}

/// The coarse matrix is subassembled by subdomain; its agglomerates become
/// the subdomains of a second BDDC level whose nodes are primal entities.
fn build_coarse_level(
    primal: &PrimalSpace,
    subdomains: &[Subdomain],
    s_locs: &[Vec<f64>],
    groups: &[usize],
    n_groups: usize,
    settings: &BddcSettings,
) -> Result<BddcPrecond, BddcError> {
    let n_ent = primal.entities.len();
    let mut agg_entities: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
    for (s, sub) in subdomains.iter().enumerate() {
        agg_entities[groups[s]].extend(sub.primal_dofs.iter().map(|&p| p / BLOCK_SIZE));
    }
    for l in &mut agg_entities {
        l.sort_unstable();
        l.dedup();
    }
    let mut blocks = Vec::with_capacity(n_groups);
    let mut l2g = Vec::with_capacity(n_groups);
    for (g, ents) in agg_entities.iter().enumerate() {
        let n = BLOCK_SIZE * ents.len();
        let mut t = Vec::new();
        for (s, sub) in subdomains.iter().enumerate().filter(|(s, _)| groups[*s] == g) {
            let nc = sub.nc();
            let loc: Vec<usize> = sub
                .primal_dofs
                .iter()
                .map(|&p| BLOCK_SIZE * ents.binary_search(&(p / BLOCK_SIZE)).unwrap() + p % BLOCK_SIZE)
                .collect();
            for r in 0..nc {
                for c in 0..nc {
                    t.push((loc[r], loc[c], s_locs[s][r * nc + c]));
                }
            }
        }
        blocks.push(CsrMatrix::from_triplets(n, n, &t));
        l2g.push(ents.iter().flat_map(|&e| (0..BLOCK_SIZE).map(move |c| BLOCK_SIZE * e + c)).collect());
    }
    let a2 = UnassembledMatrix::new(BLOCK_SIZE * n_ent, blocks, l2g, BLOCK_SIZE)?;
    let coords: Vec<[f64; 3]> = primal.entities.iter().map(|e| e.centroid).collect();
    let iface2 = InterfaceSets::from_sharing(agg_entities, n_ent, &coords, None);
    let mut s2 = *settings;
    s2.levels = 2;
    build_bddc(&a2, &iface2, &s2)
}

impl BddcPrecond {
    pub fn stats(&self) -> &BddcStats {
        &self.stats
    }

    pub fn primal_space(&self) -> &PrimalSpace {
        &self.primal
    }

    pub fn scaling(&self) -> &ScalingWeights {
        &self.scaling
    }

    /// Global dofs of the interface, defining the compact Γ ordering.
    pub fn gamma_dofs(&self) -> &[usize] {
        &self.gamma_dofs
    }

    pub fn n_global(&self) -> usize {
        self.n_global
    }

    /// Assembled coarse matrix S_ΠΠ.
    pub fn coarse_matrix(&self) -> Option<&CsrMatrix> {
        self.coarse_matrix.as_ref()
    }

    /// Coarse basis of subdomain `s`, column-major (local dofs × local primal dofs),
    /// with the global primal dof of each column.
    pub fn coarse_basis(&self, s: usize) -> (&[f64], &[usize]) {
        (&self.subdomains[s].phi, &self.subdomains[s].primal_dofs)
    }

    pub fn schur_operator(&self) -> SchurOperator<'_> {
        SchurOperator { m: self }
    }

    fn coarse_solve(&self, r: &[f64]) -> Vec<f64> {
        match &self.coarse {
            CoarseSolver::None => Vec::new(),
            CoarseSolver::Direct(f) => f.solve(r),
            CoarseSolver::Nested(m) => {
                let mut z = vec![0.0; r.len()];
                m.precondition_full_system(r, &mut z);
                z
            }
        }
    }

    /// `z_Γ = R_Dᵀ S̃_Γ⁻¹ R_D r_Γ` on compact interface vectors.
    pub fn apply_bddc(&self, r: &[f64], z: &mut [f64]) {
        assert_eq!(r.len(), self.gamma_dofs.len());
        z.iter_mut().for_each(|v| *v = 0.0);
        if r.is_empty() {
            return;
        }
        let n_primal = self.primal.n_primal();
        let dual: Vec<(Vec<f64>, Vec<f64>)> = self
            .subdomains
            .par_iter()
            .map(|sub| {
                let mut rhs = vec![0.0; sub.n + sub.nc()];
                for (k, &g) in sub.gamma.iter().enumerate() {
                    rhs[g] = sub.weights[k] * r[sub.gamma_compact[k]];
                }
                let coarse: Vec<f64> = (0..sub.nc()).map(|c| dot(&sub.phi[c * sub.n..(c + 1) * sub.n], &rhs[..sub.n])).collect();
                sub.saddle.solve_in_place(&mut rhs);
                rhs.truncate(sub.n);
                (rhs, coarse)
            })
            .collect();
        let mut r_pi = vec![0.0; n_primal];
        for (sub, (_, c)) in self.subdomains.iter().zip(&dual) {
            for (k, &p) in sub.primal_dofs.iter().enumerate() {
                r_pi[p] += c[k];
            }
        }
        let u_pi = self.coarse_solve(&r_pi);
        let parts: Vec<Vec<f64>> = self
            .subdomains
            .par_iter()
            .zip(dual)
            .map(|(sub, (mut w, _))| {
                for (k, &p) in sub.primal_dofs.iter().enumerate() {
                    let u = u_pi[p];
                    for (wi, phi) in w.iter_mut().zip(&sub.phi[k * sub.n..(k + 1) * sub.n]) {
                        *wi += u * phi;
                    }
                }
                sub.gamma.iter().enumerate().map(|(k, &g)| sub.weights[k] * w[g]).collect()
            })
            .collect();
        for (sub, part) in self.subdomains.iter().zip(parts) {
            for (k, v) in part.into_iter().enumerate() {
                z[sub.gamma_compact[k]] += v;
            }
        }
    }

    /// Block factorization of `A⁻¹` with the interface solve replaced by BDDC.
    pub fn precondition_full_system(&self, r: &[f64], z: &mut [f64]) {
        assert_eq!(r.len(), self.n_global);
        let interior: Vec<(Vec<f64>, Vec<f64>)> = self
            .subdomains
            .par_iter()
            .map(|sub| {
                let mut x: Vec<f64> = sub.interior.iter().map(|&i| r[sub.l2g[i]]).collect();
                sub.interior_solve(&mut x);
                let mut corr = vec![0.0; sub.gamma.len()];
                sub.a_gi.spmv(&x, &mut corr);
                (x, corr)
            })
            .collect();
        let mut g: Vec<f64> = self.gamma_dofs.iter().map(|&d| r[d]).collect();
        for (sub, (_, corr)) in self.subdomains.iter().zip(&interior) {
            for (k, v) in corr.iter().enumerate() {
                g[sub.gamma_compact[k]] -= v;
            }
        }
        let mut z_g = vec![0.0; g.len()];
        self.apply_bddc(&g, &mut z_g);
        let finals: Vec<Vec<f64>> = self
            .subdomains
            .par_iter()
            .zip(interior)
            .map(|(sub, (mut x, _))| {
                let zg: Vec<f64> = sub.gamma_compact.iter().map(|&k| z_g[k]).collect();
                let mut y = vec![0.0; sub.interior.len()];
                sub.a_ig.spmv(&zg, &mut y);
                sub.interior_solve(&mut y);
                x.iter_mut().zip(&y).for_each(|(a, b)| *a -= b);
                x
            })
            .collect();
        z.iter_mut().for_each(|v| *v = 0.0);
        for (k, &d) in self.gamma_dofs.iter().enumerate() {
            z[d] = z_g[k];
        }
        for (sub, x) in self.subdomains.iter().zip(finals) {
            for (a, &i) in sub.interior.iter().enumerate() {
                z[sub.l2g[i]] = x[a];
            }
        }
    }
}

impl Preconditioner for BddcPrecond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.precondition_full_system(r, z);
    }
}

/// `S_Γ = A_ΓΓ − A_ΓI A_II⁻¹ A_IΓ` acting on compact interface vectors.
pub struct SchurOperator<'a> {
    m: &'a BddcPrecond,
}

impl LinearOperator for SchurOperator<'_> {
    fn dim(&self) -> usize {
        self.m.gamma_dofs.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let parts: Vec<Vec<f64>> = self
            .m
            .subdomains
            .par_iter()
            .map(|sub| {
                let xg: Vec<f64> = sub.gamma_compact.iter().map(|&k| x[k]).collect();
                let mut out = vec![0.0; sub.gamma.len()];
                sub.a_gg.spmv(&xg, &mut out);
                if !sub.interior.is_empty() {
                    let mut t = vec![0.0; sub.interior.len()];
                    sub.a_ig.spmv(&xg, &mut t);
                    sub.interior_solve(&mut t);
                    sub.a_gi.spmv_add(-1.0, &t, &mut out);
                }
                out
            })
            .collect();
        y.iter_mut().for_each(|v| *v = 0.0);
        for (sub, p) in self.m.subdomains.iter().zip(parts) {
            for (k, v) in p.into_iter().enumerate() {
                y[sub.gamma_compact[k]] += v;
            }
        }
    }
}

impl<'a> SchurOperator<'a> {
    pub fn preconditioner(&self) -> &'a BddcPrecond {
        self.m
    }
}

/// Adapter applying `apply_bddc` through the `Preconditioner` trait.
pub struct InterfacePreconditioner<'a>(pub &'a BddcPrecond);

impl Preconditioner for InterfacePreconditioner<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.0.apply_bddc(r, z);
    }
}
