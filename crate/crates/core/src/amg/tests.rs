use super::*;
use crate::constitutive::GuccioneParams;
use crate::fem::{BoundaryParams, FemModel, FemSettings, LoadProgram, PressureMode, Ramp, RobinParams};
use crate::linalg::{gmres, GmresSettings};
use crate::mesh::{build_beam_mesh, partition_structured};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn laplace_1d(n: usize) -> CsrMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 2.0));
        if i > 0 {
            t.push((i, i - 1, -1.0));
        }
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
        }
    }
    CsrMatrix::from_triplets(n, n, &t)
}

fn laplace_3d(m: usize) -> CsrMatrix {
    let id = |i: usize, j: usize, k: usize| i + m * (j + m * k);
    let mut t = Vec::new();
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                let r = id(i, j, k);
                t.push((r, r, 6.0));
                let mut nb = |c: usize| t.push((r, c, -1.0));
                if i > 0 {
                    nb(id(i - 1, j, k));
                }
                if i + 1 < m {
                    nb(id(i + 1, j, k));
                }
                if j > 0 {
                    nb(id(i, j - 1, k));
                }
                if j + 1 < m {
                    nb(id(i, j + 1, k));
                }
                if k > 0 {
                    nb(id(i, j, k - 1));
                }
                if k + 1 < m {
                    nb(id(i, j, k + 1));
                }
            }
        }
    }
    CsrMatrix::from_triplets(m * m * m, m * m * m, &t)
}

fn random(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Assembled beam Jacobian at the reference state and the node coordinates.
fn beam(n: [usize; 3], mode: PressureMode) -> (CsrMatrix, Vec<[f64; 3]>) {
    let mesh = build_beam_mesh(n[0], n[1], n[2]).unwrap();
    let part = partition_structured(&mesh, 1, 1, 1).unwrap();
    let settings = FemSettings {
        order: 1,
        quadrature: None,
        material: GuccioneParams::default(),
        density: 0.0,
        boundary: BoundaryParams {
            robin_base: Some(RobinParams { k_perp: 2e5, k_par: 2e4, c_perp: 0.0, c_par: 0.0 }),
            robin_epi: None,
            loads: LoadProgram { pressure: Ramp { amplitude: 4.0, ramp_time: 0.0 }, activation: Ramp::ZERO },
            pressure_mode: mode,
        },
    };
    let model = FemModel::new(&mesh, &part, &settings).unwrap();
    let z = vec![0.0; model.n_dofs()];
    let a = model.assemble_jacobian(&z, &z, 1.0, 1.0).unwrap().assemble();
    (a, model.dofmap().node_coords().to_vec())
}

#[test]
fn laplacian_aggregates_by_hand() {
    let a = laplace_1d(9);
    let aggs = strength_and_aggregate(&a, 0.25, 1, false);
    assert_eq!(aggs.aggregate_of_node, vec![0, 0, 1, 1, 1, 2, 2, 2, 2]);
}

#[test]
fn diagonal_matrix_gives_singletons() {
    let a = CsrMatrix::from_triplets(6, 6, &(0..6).map(|i| (i, i, 1.0 + i as f64)).collect::<Vec<_>>());
    let aggs = strength_and_aggregate(&a, 0.08, 1, false);
    assert_eq!(aggs.n_aggregates, 6);
    assert_eq!(aggs.aggregate_of_node, (0..6).collect::<Vec<_>>());
}

#[test]
fn zero_threshold_gives_maximal_aggregates() {
    let dense: Vec<f64> = (0..25).map(|k| if k % 6 == 0 { 4.0 } else { 1e-6 }).collect();
    let a = CsrMatrix::from_dense(5, 5, &dense);
    assert_eq!(strength_and_aggregate(&a, 0.0, 1, false).n_aggregates, 1);
    assert_eq!(strength_and_aggregate(&a, 0.08, 1, false).n_aggregates, 5);
}

#[test]
fn every_node_in_exactly_one_aggregate() {
    let (a, _) = beam([8, 2, 2], PressureMode::Follower);
    let aggs = strength_and_aggregate(&a, 0.08, 3, false);
    assert_eq!(aggs.aggregate_of_node.len(), a.nrows() / 3);
    assert!(aggs.aggregate_of_node.iter().all(|&g| g < aggs.n_aggregates));
    assert!(aggs.members().iter().all(|m| !m.is_empty()));
}

#[test]
fn beam_hierarchy_coarsens_and_keeps_rigid_modes() {
    let (a, coords) = beam([16, 4, 4], PressureMode::Dead);
    let h = build_hierarchy(&a, &coords, &AmgSettings { coarse_size: 50, ..Default::default() }).unwrap();
    assert!(h.n_levels() >= 2);
    let sizes = h.stats().level_sizes;
    assert!(sizes[0] as f64 >= 2.0 * sizes[1] as f64, "{sizes:?}");
    for l in 0..h.n_levels() - 1 {
        for m in h.modes(l) {
            assert!(h.range_defect(l, m) < 1e-10, "level {l}");
        }
        let x = random(h.operator(l + 1).nrows(), l as u64);
        assert!(h.galerkin_defect(l, &x) < 1e-12);
    }
}

#[test]
fn single_level_is_a_direct_solve() {
    let (a, coords) = beam([4, 2, 2], PressureMode::Follower);
    let h = build_hierarchy(&a, &coords, &AmgSettings { max_levels: 1, ..Default::default() }).unwrap();
    assert_eq!(h.n_levels(), 1);
    let r = random(a.nrows(), 3);
    let mut z = vec![0.0; r.len()];
    h.vcycle(&r, &mut z);
    let direct = crate::linalg::factorize(&a, false).unwrap().solve(&r);
    let diff: Vec<f64> = z.iter().zip(&direct).map(|(x, y)| x - y).collect();
    assert!(norm2(&diff) <= 1e-12 * norm2(&direct));
}

#[test]
fn vcycle_is_linear() {
    let (a, coords) = beam([16, 2, 2], PressureMode::Follower);
    let h = build_hierarchy(&a, &coords, &AmgSettings { coarse_size: 30, ..Default::default() }).unwrap();
    assert!(h.n_levels() >= 2);
    let n = a.nrows();
    let (r1, r2) = (random(n, 1), random(n, 2));
    let comb: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
    let (mut z1, mut z2, mut z) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    h.vcycle(&r1, &mut z1);
    h.vcycle(&r2, &mut z2);
    h.vcycle(&comb, &mut z);
    let scale = norm2(&z);
    for i in 0..n {
        assert!((z[i] - 2.0 * z1[i] + 0.5 * z2[i]).abs() <= 1e-12 * scale);
    }
}

#[test]
fn poisson_preconditioned_gmres_converges_quickly() {
    let a = laplace_3d(10);
    let ones = vec![vec![1.0; a.nrows()]];
    for smoother in [Smoother::Sgs, Smoother::Jacobi] {
        let settings = AmgSettings { smoother, coarse_size: 20, ..Default::default() };
        let h = build_hierarchy_with_nullspace(&a, &ones, 1, &settings).unwrap();
        assert!(h.n_levels() >= 2);
        let b = random(a.nrows(), 5);
        let res = gmres(&a, &h, &b, &GmresSettings { rtol: 1e-8, ..Default::default() });
        assert!(res.converged() && res.iterations <= 30, "{smoother}: {}", res.iterations);
    }
}

#[test]
fn smoothers_do_not_increase_energy_error() {
    let (beam_a, coords) = beam([8, 2, 2], PressureMode::Dead);
    let poisson = laplace_3d(6);
    for smoother in [Smoother::Sgs, Smoother::Jacobi] {
        let settings = AmgSettings { smoother, coarse_size: 10, ..Default::default() };
        let hs = [
            build_hierarchy(&beam_a, &coords, &settings).unwrap(),
            build_hierarchy_with_nullspace(&poisson, &[vec![1.0; poisson.nrows()]], 1, &settings).unwrap(),
        ];
        for h in &hs {
            let x = random(h.operator(0).nrows(), 8);
            let hist = h.smoother_error_history(0, &x, 10);
            for w in hist.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{smoother}: {hist:?}");
            }
        }
    }
}

#[test]
fn literal_rule_and_smoothed_aggregation_build() {
    let (a, coords) = beam([8, 2, 2], PressureMode::Follower);
    for s in [
        AmgSettings { literal_strength_rule: true, coarse_size: 30, ..Default::default() },
        AmgSettings { smoothed_aggregation: true, coarse_size: 30, ..Default::default() },
    ] {
        let h = build_hierarchy(&a, &coords, &s).unwrap();
        let b = random(a.nrows(), 9);
        let res = gmres(&a, &h, &b, &GmresSettings { rtol: 1e-8, ..Default::default() });
        assert!(res.converged());
    }
    assert!("gauss".parse::<Smoother>().is_err());
    assert!(AmgSettings { eps: -1.0, ..Default::default() }.validate().is_err());
}
