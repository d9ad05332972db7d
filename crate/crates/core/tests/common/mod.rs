//! Shared fixtures and a dense reference construction of the BDDC operator.
//!
//! The reference works in a change of basis in which every primal average is
//! an explicit coordinate: for a class with nodes n₁…nₘ and component c,
//! u(n₁) = ū − Σⱼ₌₂ δⱼ and u(nⱼ) = ū + δⱼ, so ū is the average and the δⱼ
//! are dual. Pointwise vertices are primal coordinates as they are. The
//! operator is then assembled from the dual/primal block formulas with
//! dense inverses.

#![allow(dead_code)]

use cardiomech::constitutive::GuccioneParams;
use cardiomech::fem::{BoundaryParams, FemModel, FemSettings, LoadProgram, PressureMode, Ramp, RobinParams};
use cardiomech::linalg::UnassembledMatrix;
use cardiomech::mesh::{
    build_beam_mesh, build_ellipsoid_mesh, classify_interface, partition_rcb, partition_structured, ClassKind,
    EllipsoidGeometry, HexMesh, InterfaceClass, InterfaceSets, Partition,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Problem {
    pub name: String,
    pub a: UnassembledMatrix,
    pub iface: InterfaceSets,
}

pub fn random_vec(n: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn robin(k_perp: f64, k_par: f64) -> RobinParams {
    RobinParams { k_perp, k_par, c_perp: 0.0, c_par: 0.0 }
}

fn jacobian(name: String, mesh: &HexMesh, part: &Partition, settings: &FemSettings, amp: f64) -> Problem {
    let model = FemModel::new(mesh, part, settings).unwrap();
    let d = if amp > 0.0 { random_vec(model.n_dofs(), amp, 17) } else { vec![0.0; model.n_dofs()] };
    let dt = 1e-3;
    let a = model.assemble_jacobian(&d, &d, dt, 0.1).unwrap();
    let iface = classify_interface(part, model.dofmap(), mesh);
    Problem { name, a, iface }
}

pub fn beam_settings(order: usize, mode: PressureMode, density: f64) -> FemSettings {
    FemSettings {
        order,
        quadrature: None,
        material: GuccioneParams::default(),
        density,
        boundary: BoundaryParams {
            robin_base: Some(robin(2e5, 2e4)),
            robin_epi: None,
            loads: LoadProgram { pressure: Ramp { amplitude: 4.0, ramp_time: 0.1 }, activation: Ramp::ZERO },
            pressure_mode: mode,
        },
    }
}

pub fn ellipsoid_settings(order: usize, gamma: f64) -> FemSettings {
    FemSettings {
        order,
        quadrature: None,
        material: GuccioneParams::default(),
        density: 1e-3,
        boundary: BoundaryParams {
            robin_base: Some(robin(1e5, 1e4)),
            robin_epi: Some(robin(1e3, 1e2)),
            loads: LoadProgram {
                pressure: Ramp { amplitude: 2.0, ramp_time: 0.1 },
                activation: Ramp { amplitude: gamma, ramp_time: 0.1 },
            },
            pressure_mode: PressureMode::Follower,
        },
    }
}

pub fn beam_problem(n: [usize; 3], p: [usize; 3], order: usize, mode: PressureMode, density: f64, amp: f64) -> Problem {
    let mesh = build_beam_mesh(n[0], n[1], n[2]).unwrap();
    let part = partition_structured(&mesh, p[0], p[1], p[2]).unwrap();
    let name = format!("beam{n:?}/{p:?} Q{order} {mode:?}");
    jacobian(name, &mesh, &part, &beam_settings(order, mode, density), amp)
}

pub fn ellipsoid_problem(nc: usize, nt: usize, na: usize, n_sub: usize, order: usize, gamma: f64, amp: f64) -> Problem {
    let mesh = build_ellipsoid_mesh(nc, nt, na, &EllipsoidGeometry::default()).unwrap();
    let part = partition_rcb(&mesh, n_sub).unwrap();
    let name = format!("ellipsoid({nc},{nt},{na})/{n_sub} Q{order} γ={gamma}");
    jacobian(name, &mesh, &part, &ellipsoid_settings(order, gamma), amp)
}

/// Benchmark Jacobians with at most 2000 dofs: beam and ventricle, Q1 and
/// Q2, dead and follower pressure, structured and bisection partitions.
pub fn small_suite() -> Vec<Problem> {
    vec![
        beam_problem([4, 2, 2], [2, 1, 1], 1, PressureMode::Follower, 1e-3, 1e-3),
        beam_problem([8, 2, 2], [2, 2, 1], 1, PressureMode::Follower, 1e-3, 1e-3),
        beam_problem([8, 4, 4], [2, 2, 2], 1, PressureMode::Dead, 0.0, 0.0),
        beam_problem([8, 4, 4], [4, 2, 2], 1, PressureMode::Follower, 1e-3, 1e-3),
        beam_problem([16, 2, 2], [8, 1, 1], 1, PressureMode::Follower, 0.0, 1e-3),
        beam_problem([4, 2, 2], [2, 2, 2], 2, PressureMode::Follower, 1e-3, 1e-3),
        ellipsoid_problem(12, 2, 6, 4, 1, 0.0, 1e-4),
        ellipsoid_problem(16, 2, 8, 8, 1, 0.5, 1e-4),
    ]
}

#[derive(Clone, Copy, PartialEq)]
enum Coord {
    Interior,
    Dual,
    /// Global primal coordinate.
    Primal(usize),
}

/// Which classes are primal and how, by class kind.
#[derive(Clone, Copy)]
pub struct OracleConfig {
    pub vertices: bool,
    pub edges: bool,
    pub faces: bool,
}

pub const VEF: OracleConfig = OracleConfig { vertices: true, edges: true, faces: true };

/// Interface-to-interface BDDC operator, indexed like `iface.gamma_dofs()`.
pub fn dense_bddc(a: &UnassembledMatrix, iface: &InterfaceSets, cfg: OracleConfig) -> DMatrix<f64> {
    let gamma = iface.gamma_dofs();
    let ng = gamma.len();
    let mut slot = vec![usize::MAX; iface.n_dofs()];
    for (k, &d) in gamma.iter().enumerate() {
        slot[d] = k;
    }

    // Global change of basis T (columns = new coordinates, same slots) and
    // the role of each slot.
    let mut t = DMatrix::<f64>::identity(ng, ng);
    let mut role = vec![Coord::Dual; ng];
    let mut n_primal = 0;
    for class in &iface.classes {
        let on = match class.kind {
            ClassKind::Vertex => cfg.vertices,
            ClassKind::Edge => cfg.edges,
            ClassKind::Face => cfg.faces,
        };
        if !on {
            continue;
        }
        for c in 0..3 {
            let slots: Vec<usize> = class.nodes.iter().map(|&n| slot[3 * n + c]).collect();
            let first = slots[0];
            role[first] = Coord::Primal(n_primal);
            n_primal += 1;
            for &s in &slots {
                t[(s, first)] = 1.0;
            }
            for &s in &slots[1..] {
                t[(first, s)] = -1.0;
            }
        }
    }

    let mut dual_index = Vec::new(); // (subdomain, slot) of every dual coordinate of Ṽ_Γ
    let mut blocks = Vec::new(); // per subdomain: dual block, Ψ_Δ, local primal ids, dual offsets
    let mut s_pp = DMatrix::<f64>::zeros(n_primal, n_primal);
    for s in 0..a.n_subdomains() {
        let l2g = a.local_to_global(s);
        let n = l2g.len();
        let k = DMatrix::from_row_slice(n, n, &a.block(s).to_dense());
        let mut ti = DMatrix::<f64>::identity(n, n);
        let mut roles = vec![Coord::Interior; n];
        for (li, &gi) in l2g.iter().enumerate() {
            if slot[gi] == usize::MAX {
                continue;
            }
            roles[li] = role[slot[gi]];
            for (lj, &gj) in l2g.iter().enumerate() {
                if slot[gj] != usize::MAX {
                    ti[(li, lj)] = t[(slot[gi], slot[gj])];
                }
            }
        }
        let kh = ti.transpose() * &k * &ti;
        let r: Vec<usize> = (0..n).filter(|&i| !matches!(roles[i], Coord::Primal(_))).collect();
        let p: Vec<usize> = (0..n).filter(|&i| matches!(roles[i], Coord::Primal(_))).collect();
        let pid: Vec<usize> = p.iter().map(|&i| if let Coord::Primal(q) = roles[i] { q } else { unreachable!() }).collect();
        let sub = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |i, j| kh[(rows[i], cols[j])]);
        let krr_inv = sub(&r, &r).try_inverse().expect("singular constrained local problem");
        let krp = sub(&r, &p);
        let psi = &krr_inv * &krp;
        let local_pp = sub(&p, &p) - sub(&p, &r) * &psi;
        for (a_, &qa) in pid.iter().enumerate() {
            for (b_, &qb) in pid.iter().enumerate() {
                s_pp[(qa, qb)] += local_pp[(a_, b_)];
            }
        }
        let dpos: Vec<usize> = (0..r.len()).filter(|&i| roles[r[i]] == Coord::Dual).collect();
        let offset = dual_index.len();
        for &i in &dpos {
            dual_index.push((s, slot[l2g[r[i]]]));
        }
        let dual_block = DMatrix::from_fn(dpos.len(), dpos.len(), |i, j| krr_inv[(dpos[i], dpos[j])]);
        let psi_d = DMatrix::from_fn(dpos.len(), p.len(), |i, j| psi[(dpos[i], j)]);
        blocks.push((dual_block, psi_d, pid, offset));
    }

    let nd = dual_index.len();
    let dim = nd + n_primal;
    let mut phi = DMatrix::<f64>::zeros(dim, n_primal);
    let mut s_tilde_inv = DMatrix::<f64>::zeros(dim, dim);
    for (dual_block, psi_d, pid, offset) in &blocks {
        let m = dual_block.nrows();
        s_tilde_inv.view_mut((*offset, *offset), (m, m)).copy_from(dual_block);
        for i in 0..m {
            for (j, &q) in pid.iter().enumerate() {
                phi[(offset + i, q)] -= psi_d[(i, j)];
            }
        }
    }
    for q in 0..n_primal {
        phi[(nd + q, q)] = 1.0;
    }
    if n_primal > 0 {
        let s_inv = s_pp.try_inverse().expect("singular coarse matrix");
        s_tilde_inv += &phi * s_inv * phi.transpose();
    }

    let mut r_d = DMatrix::<f64>::zeros(dim, ng);
    for (row, &(_, sl)) in dual_index.iter().enumerate() {
        r_d[(row, sl)] = 1.0 / iface.multiplicity[gamma[sl] / 3] as f64;
    }
    for sl in 0..ng {
        if let Coord::Primal(q) = role[sl] {
            r_d[(nd + q, sl)] = 1.0;
        }
    }
    let m_hat = r_d.transpose() * s_tilde_inv * &r_d;
    &t * m_hat * t.transpose()
}

/// Dense Schur complement `S_Γ` of the assembled matrix, indexed like `iface.gamma_dofs()`.
pub fn dense_schur(a: &UnassembledMatrix, iface: &InterfaceSets) -> DMatrix<f64> {
    let n = a.n_global();
    let full = DMatrix::from_row_slice(n, n, &a.assemble().to_dense());
    let g = iface.gamma_dofs();
    let i: Vec<usize> = (0..n).filter(|d| g.binary_search(d).is_err()).collect();
    let sub = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |r, c| full[(rows[r], cols[c])]);
    let aii_inv = sub(&i, &i).try_inverse().unwrap();
    sub(&g, &g) - sub(&g, &i) * aii_inv * sub(&i, &g)
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Primal functionals for the constraint-space reference: pointwise vertices,
/// per-component averages on edges and faces, and optionally the rotations
/// of each face about its centroid.
#[derive(Clone, Copy)]
pub struct ConstraintConfig {
    pub vertices: bool,
    pub edges: bool,
    pub faces: bool,
    pub face_rotations: bool,
}

/// Global rows spanning the primal functionals of one class.
fn class_functionals(class: &InterfaceClass, coords: &[[f64; 3]], cfg: ConstraintConfig) -> Vec<Vec<(usize, f64)>> {
    let on = match class.kind {
        ClassKind::Vertex => cfg.vertices,
        ClassKind::Edge => cfg.edges,
        ClassKind::Face => cfg.faces,
    };
    if !on {
        return Vec::new();
    }
    let mut rows = Vec::new();
    if class.kind == ClassKind::Vertex {
        for &n in &class.nodes {
            rows.extend((0..3).map(|c| vec![(3 * n + c, 1.0)]));
        }
        return rows;
    }
    rows.extend((0..3).map(|c| class.nodes.iter().map(|&n| (3 * n + c, 1.0)).collect()));
    if class.kind == ClassKind::Face && cfg.face_rotations {
        let m = class.nodes.len() as f64;
        let mut centroid = [0.0; 3];
        for &n in &class.nodes {
            for d in 0..3 {
                centroid[d] += coords[n][d] / m;
            }
        }
        for axis in 0..3 {
            let (p, q) = ((axis + 1) % 3, (axis + 2) % 3);
            // e_axis × y has component q equal to y_p and component p equal to -y_q
            rows.push(
                class
                    .nodes
                    .iter()
                    .flat_map(|&n| {
                        let y = [0, 1, 2].map(|d| coords[n][d] - centroid[d]);
                        [(3 * n + p, -y[q]), (3 * n + q, y[p])]
                    })
                    .collect(),
            );
        }
    }
    rows
}

/// Interface-to-interface BDDC operator built from its variational
/// definition: `Ṽ_Γ` is the null space of the primal continuity conditions
/// on the product of subdomain interface spaces, `S̃` is the Galerkin
/// restriction of the local Schur complements to it, and the result is
/// `R̃_Dᵀ S̃⁻¹ R̃_D` with counting scaling. Indexed like `iface.gamma_dofs()`.
/// The dual/coarse splitting of `S̃⁻¹` is exact only for symmetric
/// operators, so comparisons are restricted to those.
pub fn dense_bddc_by_constraints(a: &UnassembledMatrix, iface: &InterfaceSets, cfg: ConstraintConfig) -> DMatrix<f64> {
    let gamma = iface.gamma_dofs();
    let ng = gamma.len();
    let mut slot = vec![usize::MAX; iface.n_dofs()];
    for (k, &d) in gamma.iter().enumerate() {
        slot[d] = k;
    }
    // product space: per subdomain, its interface dofs in local order
    let mut offsets = Vec::new();
    let mut local_gamma: Vec<Vec<(usize, usize)>> = Vec::new(); // (local index, global dof)
    let mut nw = 0;
    for s in 0..a.n_subdomains() {
        let lg: Vec<(usize, usize)> =
            a.local_to_global(s).iter().enumerate().filter(|(_, &g)| slot[g] != usize::MAX).map(|(l, &g)| (l, g)).collect();
        offsets.push(nw);
        nw += lg.len();
        local_gamma.push(lg);
    }
    let mut s_blk = DMatrix::<f64>::zeros(nw, nw);
    for s in 0..a.n_subdomains() {
        let n = a.local_to_global(s).len();
        let k = DMatrix::from_row_slice(n, n, &a.block(s).to_dense());
        let g: Vec<usize> = local_gamma[s].iter().map(|&(l, _)| l).collect();
        let i: Vec<usize> = (0..n).filter(|l| g.binary_search(l).is_err()).collect();
        let sub = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |x, y| k[(r[x], c[y])]);
        let mut schur = sub(&g, &g);
        if !i.is_empty() {
            schur -= sub(&g, &i) * sub(&i, &i).try_inverse().expect("singular interior block") * sub(&i, &g);
        }
        s_blk.view_mut((offsets[s], offsets[s]), (g.len(), g.len())).copy_from(&schur);
    }
    // continuity: C_q w_i - π_q = 0 for every functional q and sharing subdomain i
    let mut functionals = Vec::new();
    for class in &iface.classes {
        for row in class_functionals(class, &iface.coords, cfg) {
            functionals.push((row, class.subdomains.clone()));
        }
    }
    let np = functionals.len();
    let mut cons = Vec::new();
    for (q, (row, subs)) in functionals.iter().enumerate() {
        for &s in subs {
            let mut c = DVector::<f64>::zeros(nw + np);
            for &(g, v) in row {
                let pos = local_gamma[s].binary_search_by_key(&g, |&(_, gg)| gg).expect("class dof outside subdomain");
                c[offsets[s] + pos] += v;
            }
            c[nw + q] = -1.0;
            cons.push(c);
        }
    }
    let z = if cons.is_empty() {
        DMatrix::<f64>::identity(nw + np, nw + np)
    } else {
        let cmat = DMatrix::from_fn(cons.len(), nw + np, |r, c| cons[r][c]);
        let svd = (cmat.transpose() * &cmat).symmetric_eigen();
        let tol = 1e-10 * svd.eigenvalues.max();
        let keep: Vec<usize> = (0..nw + np).filter(|&k| svd.eigenvalues[k] <= tol).collect();
        DMatrix::from_fn(nw + np, keep.len(), |r, c| svd.eigenvectors[(r, keep[c])])
    };
    let mut s_full = DMatrix::<f64>::zeros(nw + np, nw + np);
    s_full.view_mut((0, 0), (nw, nw)).copy_from(&s_blk);
    let s_tilde = z.transpose() * s_full * &z;
    let s_tilde_inv = s_tilde.try_inverse().expect("singular partially assembled Schur complement");
    let mut r_d = DMatrix::<f64>::zeros(nw + np, ng);
    for s in 0..a.n_subdomains() {
        for (pos, &(_, g)) in local_gamma[s].iter().enumerate() {
            r_d[(offsets[s] + pos, slot[g])] = 1.0 / iface.multiplicity[g / 3] as f64;
        }
    }
    let zr = z.transpose() * &r_d;
    zr.transpose() * s_tilde_inv * zr
}
