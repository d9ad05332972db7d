//! Guccione passive law and fiber active stress.
//!
//! Strain energy
//!
//! ```text
//! Ψ(F) = C/2 (exp(Q) − 1) + B/2 (J − 1) ln J
//! Q    = Σ_ab w_ab E_ab²,   E_ab = a·E b,  a, b ∈ {f, s, n}
//! ```
//!
//! with `E = ½(FᵀF − I)`. The first Piola stress is `P = F S + B/2 (J ln J + J − 1) F⁻ᵀ`
//! where `S = C exp(Q) R (W∘Ê) Rᵀ`, `R = [f s n]` and `Ê = Rᵀ E R`. The active
//! part is `γ (F f ⊗ f) / |F f|`.
//!
//! Tangents are stored as 9×9 matrices with row `3i + J` and column `3k + L`
//! holding ∂P_iJ/∂F_kL.

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

pub type Tangent = SMatrix<f64, 9, 9>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConstitutiveError {
    #[error("non-positive Jacobian determinant J = {0:e} (element inversion)")]
    NonPositiveJacobian(f64),
    #[error("degenerate fiber stretch |F f| = 0")]
    DegenerateFiber,
    #[error("invalid material parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuccioneParams {
    /// Stress scale (Pa).
    pub c: f64,
    /// Bulk penalty (Pa).
    pub bulk: f64,
    pub b_ff: f64,
    pub b_ss: f64,
    pub b_nn: f64,
    pub b_fs: f64,
    pub b_fn: f64,
    pub b_sn: f64,
}

impl Default for GuccioneParams {
    fn default() -> Self {
        Self { c: 2000.0, bulk: 50000.0, b_ff: 8.0, b_ss: 2.0, b_nn: 2.0, b_fs: 4.0, b_fn: 4.0, b_sn: 2.0 }
    }
}

impl GuccioneParams {
    pub fn validate(&self) -> Result<(), ConstitutiveError> {
        let pos = [("C", self.c), ("B", self.bulk)];
        for (name, value) in pos {
            if !(value > 0.0) {
                return Err(ConstitutiveError::InvalidParameter { name, value });
            }
        }
        let nonneg = [
            ("b_ff", self.b_ff),
            ("b_ss", self.b_ss),
            ("b_nn", self.b_nn),
            ("b_fs", self.b_fs),
            ("b_fn", self.b_fn),
            ("b_sn", self.b_sn),
        ];
        for (name, value) in nonneg {
            if !(value >= 0.0) {
                return Err(ConstitutiveError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    fn weights(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.b_ff, self.b_fs, self.b_fn, //
            self.b_fs, self.b_ss, self.b_sn, //
            self.b_fn, self.b_sn, self.b_nn,
        )
    }
}

/// Orthonormal material frame: fiber, sheet and sheet-normal directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberFrame {
    pub f: Vector3<f64>,
    pub s: Vector3<f64>,
    pub n: Vector3<f64>,
}

impl FiberFrame {
    pub fn cartesian() -> Self {
        Self { f: Vector3::x(), s: Vector3::y(), n: Vector3::z() }
    }

    /// Gram-Schmidt on (f, s) with n = f × s.
    pub fn orthonormalized(f: Vector3<f64>, s: Vector3<f64>) -> Self {
        let f = f.normalize();
        let s = (s - f * f.dot(&s)).normalize();
        let n = f.cross(&s);
        Self { f, s, n }
    }

    /// Columns f, s, n.
    pub fn rotation(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.f, self.s, self.n])
    }

    /// Largest deviation of RᵀR from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let r = self.rotation();
        (r.transpose() * r - Matrix3::identity()).abs().max()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DeformationState {
    pub f: Matrix3<f64>,
    pub j: f64,
    pub e: Matrix3<f64>,
    pub frame: FiberFrame,
}

impl DeformationState {
    pub fn new(f: Matrix3<f64>, frame: FiberFrame) -> Self {
        let e = 0.5 * (f.transpose() * f - Matrix3::identity());
        Self { f, j: f.determinant(), e, frame }
    }

    fn check(&self) -> Result<(), ConstitutiveError> {
        if self.j > 0.0 && self.j.is_finite() {
            Ok(())
        } else {
            Err(ConstitutiveError::NonPositiveJacobian(self.j))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ActiveState {
    /// Activation magnitude (Pa).
    pub gamma: f64,
    /// Reference fiber direction (unit).
    pub fiber: Vector3<f64>,
}

/// Frame quantities shared by the energy, stress and tangent.
struct Invariants {
    rot: Matrix3<f64>,
    w: Matrix3<f64>,
    e_hat: Matrix3<f64>,
    q: f64,
}

fn invariants(state: &DeformationState, p: &GuccioneParams) -> Invariants {
    let rot = state.frame.rotation();
    let e_hat = rot.transpose() * state.e * rot;
    let w = p.weights();
    let q = w.component_mul(&e_hat).component_mul(&e_hat).sum();
    Invariants { rot, w, e_hat, q }
}

/// Strain energy density (Pa).
pub fn psi(state: &DeformationState, p: &GuccioneParams) -> Result<f64, ConstitutiveError> {
    state.check()?;
    let inv = invariants(state, p);
    let j = state.j;
    Ok(0.5 * p.c * inv.q.exp_m1() + 0.5 * p.bulk * (j - 1.0) * j.ln())
}

/// Passive first Piola-Kirchhoff stress ∂Ψ/∂F.
pub fn piola_passive(state: &DeformationState, p: &GuccioneParams) -> Result<Matrix3<f64>, ConstitutiveError> {
    state.check()?;
    let inv = invariants(state, p);
    Ok(passive_from(state, p, &inv))
}

fn passive_from(state: &DeformationState, p: &GuccioneParams, inv: &Invariants) -> Matrix3<f64> {
    let g = inv.rot * inv.w.component_mul(&inv.e_hat) * inv.rot.transpose();
    let s = p.c * inv.q.exp() * g;
    let j = state.j;
    let f_inv_t = state.f.try_inverse().expect("J > 0").transpose();
    state.f * s + 0.5 * p.bulk * (j * j.ln() + j - 1.0) * f_inv_t
}

/// Active stress γ (F f ⊗ f)/|F f|.
pub fn piola_active(f: &Matrix3<f64>, act: &ActiveState) -> Result<Matrix3<f64>, ConstitutiveError> {
    let a = f * act.fiber;
    let len = a.norm();
    if len == 0.0 {
        return Err(ConstitutiveError::DegenerateFiber);
    }
    Ok(act.gamma / len * a * act.fiber.transpose())
}

/// Total stress and its consistent linearization.
pub fn stress_and_tangent(
    state: &DeformationState,
    p: &GuccioneParams,
    act: Option<&ActiveState>,
) -> Result<(Matrix3<f64>, Tangent), ConstitutiveError> {
    state.check()?;
    let inv = invariants(state, p);
    let f = &state.f;
    let j = state.j;
    let g = inv.rot * inv.w.component_mul(&inv.e_hat) * inv.rot.transpose();
    let eq = inv.q.exp();
    let s = p.c * eq * g;
    let f_inv_t = f.try_inverse().expect("J > 0").transpose();
    let vol = 0.5 * p.bulk * (j * j.ln() + j - 1.0);
    let dvol = 0.5 * p.bulk * (j.ln() + 2.0);
    let mut stress = f * s + vol * f_inv_t;

    let active = match act {
        Some(a) if a.gamma != 0.0 => {
            let fa = f * a.fiber;
            let len = fa.norm();
            if len == 0.0 {
                return Err(ConstitutiveError::DegenerateFiber);
            }
            stress += a.gamma / len * fa * a.fiber.transpose();
            Some((a, fa, len))
        }
        _ => None,
    };

    let mut tangent = Tangent::zeros();
    for k in 0..3 {
        for l in 0..3 {
            let mut df = Matrix3::zeros();
            df[(k, l)] = 1.0;
            let fdf = f.transpose() * df;
            let de = 0.5 * (fdf + fdf.transpose());
            let de_hat = inv.rot.transpose() * de * inv.rot;
            let dq = 2.0 * inv.w.component_mul(&inv.e_hat).component_mul(&de_hat).sum();
            let dg = inv.rot * inv.w.component_mul(&de_hat) * inv.rot.transpose();
            let ds = p.c * eq * (dq * g + dg);
            let trace_term = f_inv_t[(k, l)];
            let mut dp = df * s + f * ds + dvol * j * trace_term * f_inv_t
                - vol * f_inv_t * df.transpose() * f_inv_t;
            if let Some((a, fa, len)) = active {
                let dfa = df * a.fiber;
                dp += a.gamma * (dfa / len - fa * (fa.dot(&dfa) / len.powi(3))) * a.fiber.transpose();
            }
            for i in 0..3 {
                for jj in 0..3 {
                    tangent[(3 * i + jj, 3 * k + l)] = dp[(i, jj)];
                }
            }
        }
    }
    Ok((stress, tangent))
}

/// dP/dF of passive plus optional active stress.
pub fn tangent(
    state: &DeformationState,
    p: &GuccioneParams,
    act: Option<&ActiveState>,
) -> Result<Tangent, ConstitutiveError> {
    stress_and_tangent(state, p, act).map(|(_, t)| t)
}

/// Contracts a tangent with a direction: (A : ΔF)_iJ.
pub fn apply_tangent(a: &Tangent, df: &Matrix3<f64>) -> Matrix3<f64> {
    let mut v = SMatrix::<f64, 9, 1>::zeros();
    for k in 0..3 {
        for l in 0..3 {
            v[3 * k + l] = df[(k, l)];
        }
    }
    let r = a * v;
    Matrix3::from_fn(|i, j| r[3 * i + j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut ChaCha8Rng) -> FiberFrame {
        let v = |rng: &mut ChaCha8Rng| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        FiberFrame::orthonormalized(v(rng) + Vector3::new(2.0, 0.0, 0.0), v(rng) + Vector3::new(0.0, 2.0, 0.0))
    }

    fn random_f(rng: &mut ChaCha8Rng, amp: f64) -> Matrix3<f64> {
        Matrix3::identity() + Matrix3::from_fn(|_, _| rng.random_range(-amp..amp))
    }

    fn rotation(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
        *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
    }

    /// Straight-line evaluation of the energy written independently of the module code.
    fn psi_oracle(f: &Matrix3<f64>, fr: &FiberFrame, p: &GuccioneParams) -> f64 {
        let c = f.transpose() * f;
        let e = |a: &Vector3<f64>, b: &Vector3<f64>| 0.5 * (a.dot(&(c * b)) - a.dot(b));
        let (ef, es, en) = (&fr.f, &fr.s, &fr.n);
        let q = p.b_ff * e(ef, ef).powi(2)
            + p.b_ss * e(es, es).powi(2)
            + p.b_nn * e(en, en).powi(2)
            + p.b_fs * (e(ef, es).powi(2) + e(es, ef).powi(2))
            + p.b_fn * (e(ef, en).powi(2) + e(en, ef).powi(2))
            + p.b_sn * (e(es, en).powi(2) + e(en, es).powi(2));
        let j = f.determinant();
        p.c / 2.0 * (q.exp() - 1.0) + p.bulk / 2.0 * (j - 1.0) * j.ln()
    }

    #[test]
    fn identity_is_stress_free() {
        let p = GuccioneParams::default();
        let st = DeformationState::new(Matrix3::identity(), FiberFrame::cartesian());
        assert_eq!(psi(&st, &p).unwrap(), 0.0);
        assert!(piola_passive(&st, &p).unwrap().abs().max() < 1e-14);
    }

    #[test]
    fn uniaxial_closed_form() {
        let p = GuccioneParams::default();
        let lam: f64 = 1.2;
        let st = DeformationState::new(Matrix3::from_diagonal(&Vector3::new(lam, 1.0, 1.0)), FiberFrame::cartesian());
        let q = p.b_ff * (0.5 * (lam * lam - 1.0)).powi(2);
        let expected = p.c / 2.0 * (q.exp() - 1.0) + p.bulk / 2.0 * (lam - 1.0) * lam.ln();
        assert!((psi(&st, &p).unwrap() - expected).abs() < 1e-12 * expected.abs());
    }

    #[test]
    fn shear_matches_straight_line_oracle() {
        let p = GuccioneParams::default();
        let mut f = Matrix3::identity();
        f[(0, 1)] = 0.1;
        let st = DeformationState::new(f, FiberFrame::cartesian());
        let expected = psi_oracle(&f, &FiberFrame::cartesian(), &p);
        assert!((psi(&st, &p).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn rotation_is_energy_and_stress_free() {
        let p = GuccioneParams::default();
        let r = rotation(Vector3::new(1.0, 2.0, -0.5), 0.7);
        let st = DeformationState::new(r, FiberFrame::cartesian());
        assert!(psi(&st, &p).unwrap().abs() < 1e-12);
        assert!(piola_passive(&st, &p).unwrap().abs().max() < 1e-10);
    }

    #[test]
    fn inverted_element_is_rejected() {
        let p = GuccioneParams::default();
        let st = DeformationState::new(Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0)), FiberFrame::cartesian());
        assert!(matches!(psi(&st, &p), Err(ConstitutiveError::NonPositiveJacobian(_))));
        assert!(tangent(&st, &p, None).is_err());
    }

    #[test]
    fn active_stress_examples() {
        let act = ActiveState { gamma: 5.0, fiber: Vector3::x() };
        let p1 = piola_active(&Matrix3::identity(), &act).unwrap();
        let p2 = piola_active(&(2.0 * Matrix3::identity()), &act).unwrap();
        let mut expected = Matrix3::zeros();
        expected[(0, 0)] = 5.0;
        assert!((p1 - expected).abs().max() < 1e-15);
        assert!((p2 - expected).abs().max() < 1e-15);
        let zero = piola_active(&Matrix3::zeros(), &act);
        assert_eq!(zero, Err(ConstitutiveError::DegenerateFiber));
    }

    #[test]
    fn active_stress_annihilates_cross_fiber_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let fr = random_frame(&mut rng);
            let f = random_f(&mut rng, 0.3);
            let act = ActiveState { gamma: 3.0, fiber: fr.f };
            let pa = piola_active(&f, &act).unwrap();
            assert!((pa * fr.s).norm() < 1e-13);
            assert!((pa * fr.n).norm() < 1e-13);
        }
    }

    #[test]
    fn energy_nonnegative_and_objective() {
        let p = GuccioneParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let fr = random_frame(&mut rng);
            let f = random_f(&mut rng, 0.25);
            let st = DeformationState::new(f, fr);
            if st.j <= 0.0 {
                continue;
            }
            let w = psi(&st, &p).unwrap();
            assert!(w >= 0.0);
            let r = rotation(Vector3::new(rng.random(), rng.random(), rng.random()), rng.random_range(0.0..3.0));
            let wr = psi(&DeformationState::new(r * f, fr), &p).unwrap();
            assert!((w - wr).abs() <= 1e-12 * w.max(1.0));
        }
    }

    #[test]
    fn small_strain_limit_matches_quadratic_energy() {
        // Ψ ≈ C/2 Σ w_ab ε_ab² + B/2 (tr H)² for F = I + H, small H.
        let p = GuccioneParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fr = random_frame(&mut rng);
        let quad = |h: &Matrix3<f64>| {
            let eps = 0.5 * (h + h.transpose());
            let r = fr.rotation();
            let eh = r.transpose() * eps * r;
            let w = [[p.b_ff, p.b_fs, p.b_fn], [p.b_fs, p.b_ss, p.b_sn], [p.b_fn, p.b_sn, p.b_nn]];
            let mut q = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    q += w[a][b] * eh[(a, b)].powi(2);
                }
            }
            0.5 * p.c * q + 0.5 * p.bulk * h.trace().powi(2)
        };
        let a0 = tangent(&DeformationState::new(Matrix3::identity(), fr), &p, None).unwrap();
        for _ in 0..10 {
            let h1 = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let h2 = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            // Bilinear form by polarization of the quadratic energy.
            let bil = quad(&(h1 + h2)) - quad(&h1) - quad(&h2);
            let via_tangent = apply_tangent(&a0, &h2).component_mul(&h1).sum();
            assert!((bil - via_tangent).abs() < 1e-9 * bil.abs().max(1.0), "{bil} vs {via_tangent}");
        }
    }

    #[test]
    fn passive_tangent_has_major_symmetry() {
        let p = GuccioneParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let st = DeformationState::new(random_f(&mut rng, 0.3), random_frame(&mut rng));
            if st.j <= 0.0 {
                continue;
            }
            let a = tangent(&st, &p, None).unwrap();
            let scale = a.abs().max();
            assert!((a - a.transpose()).abs().max() < 1e-10 * scale);
        }
    }

    #[test]
    fn directional_derivatives_match_central_differences() {
        let p = GuccioneParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let h = 1e-6;
        for _ in 0..30 {
            let fr = random_frame(&mut rng);
            let f = random_f(&mut rng, 0.2);
            if f.determinant() <= 0.1 {
                continue;
            }
            let dir = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let act = ActiveState { gamma: 40.0, fiber: fr.f };
            let (_, a) = stress_and_tangent(&DeformationState::new(f, fr), &p, Some(&act)).unwrap();
            let passive = piola_passive(&DeformationState::new(f, fr), &p).unwrap();

            let dpsi = (psi_oracle(&(f + h * dir), &fr, &p) - psi_oracle(&(f - h * dir), &fr, &p)) / (2.0 * h);
            let expect = passive.component_mul(&dir).sum();
            assert!((dpsi - expect).abs() < 1e-6 * passive.norm() * dir.norm(), "{dpsi} vs {expect}");

            let total = |g: Matrix3<f64>| stress_and_tangent(&DeformationState::new(g, fr), &p, Some(&act)).unwrap().0;
            let dp = (total(f + h * dir) - total(f - h * dir)) / (2.0 * h);
            let via_tangent = apply_tangent(&a, &dir);
            assert!((dp - via_tangent).norm() < 1e-6 * via_tangent.norm(), "{dp} vs {via_tangent}");
        }
    }
}
