use super::*;
use crate::mesh::{build_beam_mesh, build_ellipsoid_mesh, partition_rcb, partition_structured, EllipsoidGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn beam_params(pressure: f64, gamma: f64, robin: bool, mode: PressureMode) -> FemSettings {
    let r = RobinParams { k_perp: 2e3, k_par: 2e2, c_perp: 10.0, c_par: 2.0 };
    FemSettings {
        order: 1,
        quadrature: None,
        material: GuccioneParams::default(),
        density: 1e-3,
        boundary: BoundaryParams {
            robin_base: robin.then_some(r),
            robin_epi: robin.then_some(r),
            loads: LoadProgram {
                pressure: Ramp { amplitude: pressure, ramp_time: 0.0 },
                activation: Ramp { amplitude: gamma, ramp_time: 0.0 },
            },
            pressure_mode: mode,
        },
    }
}

fn random_vec(n: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

#[test]
fn zero_state_has_zero_residual() {
    let m = build_beam_mesh(2, 1, 1).unwrap();
    let p = partition_structured(&m, 1, 1, 1).unwrap();
    let model = FemModel::new(&m, &p, &beam_params(0.0, 0.0, false, PressureMode::Follower)).unwrap();
    let z = vec![0.0; model.n_dofs()];
    let r = model.residual(&z, &z, &z, 1e-3, 0.0).unwrap();
    assert!(r.iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn rigid_translation_has_zero_residual() {
    let m = build_beam_mesh(1, 1, 1).unwrap();
    let p = partition_structured(&m, 1, 1, 1).unwrap();
    let model = FemModel::new(&m, &p, &beam_params(0.0, 0.0, false, PressureMode::Follower)).unwrap();
    let d: Vec<f64> = (0..model.n_dofs()).map(|i| [0.01, -0.02, 0.005][i % 3]).collect();
    let r = model.residual(&d, &d, &d, 1e-3, 0.0).unwrap();
    assert!(r.iter().all(|v| v.abs() < 1e-10), "{r:?}");
}

#[test]
fn traction_examples() {
    let n = Vector3::new(0.0, 0.0, 1.0);
    let robin = RobinParams { k_perp: 7.0, k_par: 3.0, c_perp: 1.0, c_par: 1.0 };
    let b = BoundaryParams {
        robin_epi: Some(robin),
        loads: LoadProgram { pressure: Ramp { amplitude: 4.0, ramp_time: 0.0 }, activation: Ramp::ZERO },
        ..Default::default()
    };
    let z = Vector3::zeros();
    let i = Matrix3::identity();
    assert_eq!(boundary_traction(Region::Epi, &z, &z, &i, &n, &b, 0.0), z);
    assert!((boundary_traction(Region::Endo, &z, &z, &i, &n, &b, 0.0) - 4.0 * n).norm() < 1e-15);
    assert!((boundary_traction(Region::Epi, &n, &z, &i, &n, &b, 0.0) - 7.0 * n).norm() < 1e-15);
    let tang = Vector3::new(1.0, 0.0, 0.0);
    assert!((boundary_traction(Region::Epi, &tang, &z, &i, &n, &b, 0.0) - 3.0 * tang).norm() < 1e-15);
}

#[test]
fn ramp_values() {
    let r = Ramp { amplitude: 4.0, ramp_time: 0.1 };
    assert_eq!(r.value(0.0), 0.0);
    assert!((r.value(0.05) - 2.0).abs() < 1e-15);
    assert_eq!(r.value(0.1), 4.0);
    assert_eq!(r.value(3.0), 4.0);
}

#[test]
fn follower_face_form_matches_nanson() {
    // Homogeneous deformation: the face force must equal p J F⁻ᵀ N A.
    let m = build_beam_mesh(1, 1, 1).unwrap();
    let p = partition_structured(&m, 1, 1, 1).unwrap();
    let model = FemModel::new(&m, &p, &beam_params(3.0, 0.0, false, PressureMode::Follower)).unwrap();
    let f = Matrix3::new(1.1, 0.2, 0.05, -0.1, 0.95, 0.1, 0.03, 0.07, 1.2);
    let mut d = vec![0.0; model.n_dofs()];
    for (n, x) in model.dofmap().node_coords().iter().enumerate() {
        let u = (f - Matrix3::identity()) * Vector3::from(*x);
        d[3 * n..3 * n + 3].copy_from_slice(u.as_slice());
    }
    let zero_p = FemModel::new(&m, &p, &beam_params(0.0, 0.0, false, PressureMode::Follower)).unwrap();
    let r1 = model.residual(&d, &d, &d, 1.0, 0.0).unwrap();
    let r0 = zero_p.residual(&d, &d, &d, 1.0, 0.0).unwrap();
    let mut total = Vector3::zeros();
    for n in 0..model.dofmap().n_nodes() {
        total += Vector3::new(r1[3 * n] - r0[3 * n], r1[3 * n + 1] - r0[3 * n + 1], r1[3 * n + 2] - r0[3 * n + 2]);
    }
    // endo face z = 0 has N = -e_z and reference area 10
    let expected = 3.0 * f.determinant() * f.try_inverse().unwrap().transpose() * Vector3::new(0.0, 0.0, -1.0) * 10.0;
    assert!((total - expected).norm() < 1e-10 * expected.norm(), "{total} vs {expected}");
}

fn fd_check(model: &FemModel, d: &[f64], d1: &[f64], d2: &[f64], dt: f64, t: f64, seed: u64) -> f64 {
    let jac = model.assemble_jacobian(d, d1, dt, t).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let v = random_vec(d.len(), 1.0, seed + k);
        let scale = d.iter().map(|x| x.abs()).fold(1e-3, f64::max);
        let eps = 1e-6 * scale;
        let dp: Vec<f64> = d.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
        let dm: Vec<f64> = d.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
        let rp = model.residual(&dp, d1, d2, dt, t).unwrap();
        let rm = model.residual(&dm, d1, d2, dt, t).unwrap();
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let mut jv = vec![0.0; d.len()];
        jac.spmv(&v, &mut jv).unwrap();
        let num: f64 = fd.iter().zip(&jv).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = jv.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    worst
}

#[test]
fn jacobian_matches_central_differences_q1_and_q2() {
    let m = build_beam_mesh(2, 1, 1).unwrap();
    let p = partition_structured(&m, 2, 1, 1).unwrap();
    for order in [1, 2] {
        let mut s = beam_params(40.0, 300.0, true, PressureMode::Follower);
        s.order = order;
        let model = FemModel::new(&m, &p, &s).unwrap();
        let n = model.n_dofs();
        let d = random_vec(n, 0.05, 1);
        let d1 = random_vec(n, 0.05, 2);
        let d2 = random_vec(n, 0.05, 3);
        let err = fd_check(&model, &d, &d1, &d2, 1e-3, 0.5, 10);
        assert!(err < 1e-5, "order {order}: {err}");
    }
}

#[test]
fn jacobian_on_curved_mesh() {
    let g = EllipsoidGeometry::default();
    let m = build_ellipsoid_mesh(6, 1, 3, &g).unwrap();
    let p = partition_rcb(&m, 2).unwrap();
    let mut s = beam_params(2500.0, 6e4, true, PressureMode::Follower);
    s.density = 1000.0;
    let model = FemModel::new(&m, &p, &s).unwrap();
    let n = model.n_dofs();
    let d = random_vec(n, 5e-4, 4);
    let d1 = random_vec(n, 5e-4, 5);
    let err = fd_check(&model, &d, &d1, &d1, 1e-3, 1.0, 20);
    assert!(err < 1e-5, "{err}");
}

#[test]
fn dead_load_jacobian_is_symmetric() {
    let m = build_beam_mesh(3, 1, 2).unwrap();
    let p = partition_structured(&m, 1, 1, 1).unwrap();
    let mut s = beam_params(4.0, 0.0, true, PressureMode::Dead);
    s.boundary.robin_base = Some(RobinParams { k_perp: 10.0, k_par: 1.0, c_perp: 0.0, c_par: 0.0 });
    let model = FemModel::new(&m, &p, &s).unwrap();
    let z = vec![0.0; model.n_dofs()];
    let a = model.assemble_jacobian(&z, &z, 1e-3, 1.0).unwrap().assemble();
    assert!(a.asymmetry() < 1e-10);
    let d = random_vec(model.n_dofs(), 0.05, 9);
    let a = model.assemble_jacobian(&d, &z, 1e-3, 1.0).unwrap().assemble();
    assert!(a.asymmetry() < 1e-10);
}

#[test]
fn follower_asymmetry_confined_to_endo_rows() {
    let m = build_beam_mesh(3, 1, 2).unwrap();
    let p = partition_structured(&m, 1, 1, 1).unwrap();
    let model = FemModel::new(&m, &p, &beam_params(4.0, 0.0, false, PressureMode::Follower)).unwrap();
    let d = random_vec(model.n_dofs(), 0.05, 11);
    let z = vec![0.0; model.n_dofs()];
    let a = model.assemble_jacobian(&d, &z, 1e-3, 1.0).unwrap().assemble();
    assert!(a.asymmetry() > 1e-8);
    let coords = model.dofmap().node_coords();
    let at = a.transpose();
    for r in 0..a.nrows() {
        for (c, v) in a.row(r) {
            if (v - at.get(r, c)).abs() > 1e-10 * v.abs().max(1.0) {
                assert!(coords[r / 3][2] == 0.0 && coords[c / 3][2] == 0.0);
            }
        }
    }
}

#[test]
fn subassembled_residual_and_jacobian_match_single_subdomain() {
    let m = build_beam_mesh(4, 2, 2).unwrap();
    let single = partition_structured(&m, 1, 1, 1).unwrap();
    let s = beam_params(4.0, 100.0, true, PressureMode::Follower);
    let reference = FemModel::new(&m, &single, &s).unwrap();
    let n = reference.n_dofs();
    let d = random_vec(n, 0.05, 21);
    let d1 = random_vec(n, 0.05, 22);
    let v = random_vec(n, 1.0, 23);
    let r_ref = reference.residual(&d, &d1, &d1, 1e-3, 1.0).unwrap();
    let a_ref = reference.assemble_jacobian(&d, &d1, 1e-3, 1.0).unwrap();
    let mut y_ref = vec![0.0; n];
    a_ref.spmv(&v, &mut y_ref).unwrap();
    for part in [partition_structured(&m, 2, 1, 1).unwrap(), partition_structured(&m, 2, 2, 2).unwrap(), partition_rcb(&m, 3).unwrap()] {
        let model = FemModel::new(&m, &part, &s).unwrap();
        assert_eq!(model.n_dofs(), n);
        let r = model.residual(&d, &d1, &d1, 1e-3, 1.0).unwrap();
        let scale = r_ref.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(r.iter().zip(&r_ref).all(|(a, b)| (a - b).abs() <= 1e-12 * scale));
        let a = model.assemble_jacobian(&d, &d1, 1e-3, 1.0).unwrap();
        let mut y = vec![0.0; n];
        a.spmv(&v, &mut y).unwrap();
        let scale = y_ref.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(y.iter().zip(&y_ref).all(|(a, b)| (a - b).abs() <= 1e-12 * scale));
    }
}

#[test]
fn rigid_modes_are_in_kernel_of_reference_stiffness() {
    let m = build_beam_mesh(2, 2, 1).unwrap();
    let p = partition_structured(&m, 1, 1, 1).unwrap();
    let mut s = beam_params(0.0, 0.0, false, PressureMode::Follower);
    s.density = 0.0;
    let model = FemModel::new(&m, &p, &s).unwrap();
    let z = vec![0.0; model.n_dofs()];
    let a = model.assemble_jacobian(&z, &z, 1.0, 0.0).unwrap();
    let scale = a.assemble().values().iter().map(|v| v.abs()).fold(0.0, f64::max);
    for mode in model.rigid_body_modes() {
        let mut y = vec![0.0; model.n_dofs()];
        a.spmv(&mode, &mut y).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-10 * scale));
    }
}

#[test]
fn inverted_element_is_reported() {
    let m = build_beam_mesh(2, 1, 1).unwrap();
    let p = partition_structured(&m, 1, 1, 1).unwrap();
    let model = FemModel::new(&m, &p, &beam_params(0.0, 0.0, false, PressureMode::Follower)).unwrap();
    let mut d = vec![0.0; model.n_dofs()];
    for (n, x) in model.dofmap().node_coords().iter().enumerate() {
        d[3 * n + 2] = -2.0 * x[2];
    }
    assert!(matches!(model.residual(&d, &d, &d, 1.0, 0.0), Err(FemError::ElementInversion { .. })));
}
