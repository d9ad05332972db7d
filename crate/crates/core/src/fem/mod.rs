//! Q1/Q2 displacement finite elements for the time-discrete momentum balance
//!
//! `F(dⁿ) = ∫ ρ (dⁿ − 2dⁿ⁻¹ + dⁿ⁻²)/Δt² · v + ∫ P(F) : ∇v + ∫_∂Ω g · v`
//!
//! assembled subdomain by subdomain so that the global residual and Jacobian
//! are the sums `Σᵢ Rᵢᵀ rᵢ` and `Σᵢ Rᵢᵀ A⁽ⁱ⁾ Rᵢ`.

mod basis;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use basis::{face_axes, gauss_legendre, lagrange_1d, shape_3d, ElementBasis, FaceRule};

use crate::constitutive::{
    piola_active, piola_passive, stress_and_tangent, ActiveState, ConstitutiveError, DeformationState, FiberFrame,
    GuccioneParams,
};
use crate::linalg::{CsrMatrix, LinalgError, UnassembledMatrix};
use crate::mesh::{trilinear_grad, trilinear_shape, DofMap, HexMesh, MeshError, Partition, Region, BLOCK_SIZE};

#[derive(Debug, thiserror::Error)]
pub enum FemError {
    #[error("element {element} is inverted or degenerate (J = {det:.3e})")]
    ElementInversion { element: usize, det: f64 },
    #[error("element {element}: {source}")]
    Material { element: usize, source: ConstitutiveError },
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: String, value: f64 },
    #[error("vector of length {found}, expected {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Spring and dashpot coefficients split into normal and tangential parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobinParams {
    pub k_perp: f64,
    pub k_par: f64,
    pub c_perp: f64,
    pub c_par: f64,
}

impl RobinParams {
    pub fn validate(&self) -> Result<(), FemError> {
        for (name, value) in [("k_perp", self.k_perp), ("k_par", self.k_par), ("c_perp", self.c_perp), ("c_par", self.c_par)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(FemError::InvalidParameter { name: name.into(), value });
            }
        }
        Ok(())
    }

    /// (N⊗N)(K⊥ d + C⊥ ḋ) + (I − N⊗N)(K∥ d + C∥ ḋ)
    pub fn traction(&self, d: &Vector3<f64>, ddot: &Vector3<f64>, n: &Vector3<f64>) -> Vector3<f64> {
        let a = self.k_perp * d + self.c_perp * ddot;
        let b = self.k_par * d + self.c_par * ddot;
        n * n.dot(&a) + (b - n * n.dot(&b))
    }

    /// ∂g/∂d for a backward-Euler velocity (d − dⁿ⁻¹)/Δt.
    pub fn stiffness(&self, n: &Vector3<f64>, dt: f64) -> Matrix3<f64> {
        let nn = n * n.transpose();
        (self.k_perp + self.c_perp / dt) * nn + (self.k_par + self.c_par / dt) * (Matrix3::identity() - nn)
    }
}

/// `A · min(t, T)/T`; a non-positive ramp time applies the amplitude at once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub amplitude: f64,
    pub ramp_time: f64,
}

impl Ramp {
    pub const ZERO: Ramp = Ramp { amplitude: 0.0, ramp_time: 1.0 };

    pub fn value(&self, t: f64) -> f64 {
        if self.ramp_time <= 0.0 {
            return self.amplitude;
        }
        if t >= self.ramp_time {
            self.amplitude
        } else {
            self.amplitude * t.max(0.0) / self.ramp_time
        }
    }
}

/// Endocardial pressure and fiber activation programs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadProgram {
    pub pressure: Ramp,
    pub activation: Ramp,
}

impl Default for LoadProgram {
    fn default() -> Self {
        Self { pressure: Ramp::ZERO, activation: Ramp::ZERO }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PressureMode {
    /// p J F⁻ᵀ N on the current configuration.
    Follower,
    /// p N on the reference configuration.
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryParams {
    pub robin_base: Option<RobinParams>,
    pub robin_epi: Option<RobinParams>,
    pub loads: LoadProgram,
    pub pressure_mode: PressureMode,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        Self { robin_base: None, robin_epi: None, loads: LoadProgram::default(), pressure_mode: PressureMode::Follower }
    }
}

impl BoundaryParams {
    pub fn validate(&self) -> Result<(), FemError> {
        for r in [self.robin_base, self.robin_epi].into_iter().flatten() {
            r.validate()?;
        }
        Ok(())
    }

    pub fn robin(&self, region: Region) -> Option<&RobinParams> {
        match region {
            Region::Base => self.robin_base.as_ref(),
            Region::Epi => self.robin_epi.as_ref(),
            _ => None,
        }
    }
}

/// Traction `g` at a boundary point, with `n` the unit reference outward normal.
pub fn boundary_traction(
    region: Region,
    d: &Vector3<f64>,
    ddot: &Vector3<f64>,
    f: &Matrix3<f64>,
    n: &Vector3<f64>,
    params: &BoundaryParams,
    t: f64,
) -> Vector3<f64> {
    match region {
        Region::Endo => {
            let p = params.loads.pressure.value(t);
            match params.pressure_mode {
                PressureMode::Follower => {
                    let cof = f.determinant() * f.try_inverse().unwrap_or_else(Matrix3::zeros).transpose();
                    p * cof * n
                }
                PressureMode::Dead => p * n,
            }
        }
        Region::Base | Region::Epi => params.robin(region).map_or_else(Vector3::zeros, |r| r.traction(d, ddot, n)),
        Region::Free => Vector3::zeros(),
    }
}

/// Quadrature data of a hex at its volume points.
#[derive(Debug, Clone)]
struct ElementData {
    /// Physical shape gradients, `[qp * n_nodes + a]`.
    dndx: Vec<[f64; 3]>,
    /// det J · weight per point.
    dv: Vec<f64>,
    frames: Vec<FiberFrame>,
    /// Node ids local to the owning subdomain.
    local: Vec<u32>,
    /// For each (a, b) node pair, the block slot of b in the pattern row of a.
    slot: Vec<u32>,
}

#[derive(Debug, Clone)]
struct FacePoint {
    weight: f64,
    values: Vec<f64>,
    da: Vec<f64>,
    db: Vec<f64>,
    /// Reference tangents and the orientation making ±(X_a × X_b) outward.
    xa: Vector3<f64>,
    xb: Vector3<f64>,
    sign: f64,
}

#[derive(Debug, Clone)]
struct FaceData {
    hex: usize,
    region: Region,
    /// Lexicographic element-node indices on the face.
    nodes: Vec<usize>,
    points: Vec<FacePoint>,
}

#[derive(Debug, Clone)]
struct SubdomainPattern {
    nodes: Vec<usize>,
    /// Sorted neighbor local nodes of each local node.
    neighbors: Vec<Vec<u32>>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

/// Element stiffness/residual accumulator for one subdomain.
struct LocalSystem<'a> {
    pattern: &'a SubdomainPattern,
    values: Vec<f64>,
}

impl LocalSystem<'_> {
    #[inline]
    fn add_block(&mut self, a: usize, slot: usize, blk: &Matrix3<f64>) {
        for i in 0..3 {
            let base = self.pattern.row_ptr[3 * a + i] + 3 * slot;
            for k in 0..3 {
                self.values[base + k] += blk[(i, k)];
            }
        }
    }
}

/// A discretized problem: mesh geometry, material, boundary data and the
/// per-subdomain storage layout.
#[derive(Debug, Clone)]
pub struct FemModel {
    dofmap: DofMap,
    subdomain_of_hex: Vec<usize>,
    material: GuccioneParams,
    density: f64,
    boundary: BoundaryParams,
    basis: ElementBasis,
    elements: Vec<ElementData>,
    faces: Vec<FaceData>,
    patterns: Vec<SubdomainPattern>,
    elements_of: Vec<Vec<usize>>,
    faces_of: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FemSettings {
    pub order: usize,
    /// Gauss points per direction; defaults to order + 1.
    pub quadrature: Option<usize>,
    pub material: GuccioneParams,
    pub density: f64,
    pub boundary: BoundaryParams,
}

impl FemModel {
    pub fn new(mesh: &HexMesh, partition: &Partition, settings: &FemSettings) -> Result<Self, FemError> {
        settings.material.validate().map_err(|source| FemError::Material { element: 0, source })?;
        settings.boundary.validate()?;
        if !(settings.density >= 0.0) {
            return Err(FemError::InvalidParameter { name: "density".into(), value: settings.density });
        }
        let order = settings.order;
        let dofmap = DofMap::new(mesh, partition, order)?;
        let npts = settings.quadrature.unwrap_or(order + 1);
        if !(1..=5).contains(&npts) {
            return Err(FemError::InvalidParameter { name: "quadrature".into(), value: npts as f64 });
        }
        let basis = ElementBasis::with_points(order, npts);
        let n_sub = partition.n_subdomains;
        let nen = basis.n_nodes();

        // Node-level sparsity per subdomain.
        let mut patterns = Vec::with_capacity(n_sub);
        let mut elements_of = vec![Vec::new(); n_sub];
        for (h, &s) in partition.subdomain_of_hex.iter().enumerate() {
            elements_of[s].push(h);
        }
        let local_of = |s: usize, g: usize| dofmap.subdomain_nodes(s).binary_search(&g).expect("node in subdomain") as u32;
        for s in 0..n_sub {
            let nodes = dofmap.subdomain_nodes(s).to_vec();
            let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); nodes.len()];
            for &h in &elements_of[s] {
                let loc: Vec<u32> = dofmap.element_nodes(h).iter().map(|&g| local_of(s, g)).collect();
                for &a in &loc {
                    neighbors[a as usize].extend_from_slice(&loc);
                }
            }
            for l in &mut neighbors {
                l.sort_unstable();
                l.dedup();
            }
            let mut row_ptr = Vec::with_capacity(3 * nodes.len() + 1);
            row_ptr.push(0);
            let mut col_idx = Vec::new();
            for nb in &neighbors {
                for _ in 0..3 {
                    for &b in nb {
                        for k in 0..3 {
                            col_idx.push(3 * b as usize + k);
                        }
                    }
                    row_ptr.push(col_idx.len());
                }
            }
            patterns.push(SubdomainPattern { nodes, neighbors, row_ptr, col_idx });
        }

        let mut elements = Vec::with_capacity(mesh.n_hexes());
        for h in 0..mesh.n_hexes() {
            let s = partition.subdomain_of_hex[h];
            let local: Vec<u32> = dofmap.element_nodes(h).iter().map(|&g| local_of(s, g)).collect();
            let nb = &patterns[s].neighbors;
            let mut slot = Vec::with_capacity(nen * nen);
            for &a in &local {
                for &b in &local {
                    slot.push(nb[a as usize].binary_search(&b).expect("pattern") as u32);
                }
            }
            let mut dndx = Vec::with_capacity(basis.points.len() * nen);
            let mut dv = Vec::with_capacity(basis.points.len());
            let mut frames = Vec::with_capacity(basis.points.len());
            for (q, xi) in basis.points.iter().enumerate() {
                let jac = mesh.jacobian(h, *xi);
                let det = jac.determinant();
                if !(det > 0.0) {
                    return Err(FemError::ElementInversion { element: h, det });
                }
                let jinv_t = jac.try_inverse().expect("det > 0").transpose();
                for g in &basis.grads[q] {
                    let v = jinv_t * Vector3::from(*g);
                    dndx.push([v[0], v[1], v[2]]);
                }
                dv.push(det * basis.weights[q]);
                let nv = trilinear_shape(*xi);
                let mut fv = Vector3::zeros();
                let mut sv = Vector3::zeros();
                for (v, &node) in mesh.hexes[h].iter().enumerate() {
                    fv += nv[v] * mesh.fibers[node].f;
                    sv += nv[v] * mesh.fibers[node].s;
                }
                frames.push(FiberFrame::orthonormalized(fv, sv));
            }
            elements.push(ElementData { dndx, dv, frames, local, slot });
        }

        let mut faces = Vec::new();
        let mut faces_of = vec![Vec::new(); n_sub];
        for bf in &mesh.boundary_faces {
            if bf.region == Region::Free {
                continue;
            }
            let nodes = dofmap.face_local_nodes(bf.local_face);
            let (_, ax_a, ax_b) = face_axes(bf.local_face);
            let rule = FaceRule::new(bf.local_face, npts);
            let mut points = Vec::with_capacity(rule.points.len());
            for (xi, &w) in rule.points.iter().zip(&rule.weights) {
                let (vals, grads) = shape_3d(order, *xi);
                let tg = trilinear_grad(*xi);
                let mut xa = Vector3::zeros();
                let mut xb = Vector3::zeros();
                for (v, &node) in mesh.hexes[bf.hex].iter().enumerate() {
                    let x = Vector3::from(mesh.nodes[node]);
                    xa += tg[v][ax_a] * x;
                    xb += tg[v][ax_b] * x;
                }
                let outward = mesh.face_normal_area(bf.hex, bf.local_face, *xi);
                let sign = if xa.cross(&xb).dot(&outward) >= 0.0 { 1.0 } else { -1.0 };
                points.push(FacePoint {
                    weight: w,
                    values: nodes.iter().map(|&a| vals[a]).collect(),
                    da: nodes.iter().map(|&a| grads[a][ax_a]).collect(),
                    db: nodes.iter().map(|&a| grads[a][ax_b]).collect(),
                    xa,
                    xb,
                    sign,
                });
            }
            faces_of[partition.subdomain_of_hex[bf.hex]].push(faces.len());
            faces.push(FaceData { hex: bf.hex, region: bf.region, nodes, points });
        }

        Ok(Self {
            dofmap,
            subdomain_of_hex: partition.subdomain_of_hex.clone(),
            material: settings.material,
            density: settings.density,
            boundary: settings.boundary,
            basis,
            elements,
            faces,
            patterns,
            elements_of,
            faces_of,
        })
    }

    pub fn dofmap(&self) -> &DofMap {
        &self.dofmap
    }

    pub fn n_dofs(&self) -> usize {
        self.dofmap.n_dofs()
    }

    pub fn n_subdomains(&self) -> usize {
        self.patterns.len()
    }

    pub fn boundary(&self) -> &BoundaryParams {
        &self.boundary
    }

    pub fn set_boundary(&mut self, b: BoundaryParams) {
        self.boundary = b;
    }

    pub fn material(&self) -> &GuccioneParams {
        &self.material
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn subdomain_of_hex(&self) -> &[usize] {
        &self.subdomain_of_hex
    }

    /// Global dofs of subdomain `s` in local order.
    pub fn local_to_global(&self, s: usize) -> Vec<usize> {
        self.patterns[s].nodes.iter().flat_map(|&n| (0..BLOCK_SIZE).map(move |c| BLOCK_SIZE * n + c)).collect()
    }

    /// Six rigid-body modes (translations, rotations about the centroid).
    pub fn rigid_body_modes(&self) -> Vec<Vec<f64>> {
        rigid_body_modes(self.dofmap.node_coords())
    }

    fn check_len(&self, v: &[f64]) -> Result<(), FemError> {
        if v.len() != self.n_dofs() {
            return Err(FemError::ShapeMismatch { expected: self.n_dofs(), found: v.len() });
        }
        Ok(())
    }

    fn gather(&self, h: usize, d: &[f64]) -> Vec<Vector3<f64>> {
        self.dofmap.element_nodes(h).iter().map(|&n| Vector3::new(d[3 * n], d[3 * n + 1], d[3 * n + 2])).collect()
    }

    fn deformation_gradient(&self, h: usize, q: usize, u: &[Vector3<f64>]) -> Matrix3<f64> {
        let nen = u.len();
        let el = &self.elements[h];
        let mut f = Matrix3::identity();
        for (a, ua) in u.iter().enumerate() {
            let g = Vector3::from(el.dndx[q * nen + a]);
            f += ua * g.transpose();
        }
        f
    }

    fn active(&self, h: usize, q: usize, gamma: f64) -> Option<ActiveState> {
        (gamma != 0.0).then(|| ActiveState { gamma, fiber: self.elements[h].frames[q].f })
    }

    fn material_error(element: usize, e: ConstitutiveError) -> FemError {
        match e {
            ConstitutiveError::NonPositiveJacobian(det) => FemError::ElementInversion { element, det },
            source => FemError::Material { element, source },
        }
    }

    /// Residual contributions of every subdomain, in local dof order.
    pub fn assemble_residual(
        &self,
        d: &[f64],
        d_nm1: &[f64],
        d_nm2: &[f64],
        dt: f64,
        t: f64,
    ) -> Result<Vec<Vec<f64>>, FemError> {
        for v in [d, d_nm1, d_nm2] {
            self.check_len(v)?;
        }
        if !(dt > 0.0) {
            return Err(FemError::InvalidParameter { name: "dt".into(), value: dt });
        }
        (0..self.n_subdomains()).into_par_iter().map(|s| self.subdomain_residual(s, d, d_nm1, d_nm2, dt, t)).collect()
    }

    /// Σᵢ Rᵢᵀ rᵢ
    pub fn residual(&self, d: &[f64], d_nm1: &[f64], d_nm2: &[f64], dt: f64, t: f64) -> Result<Vec<f64>, FemError> {
        let parts = self.assemble_residual(d, d_nm1, d_nm2, dt, t)?;
        let mut r = vec![0.0; self.n_dofs()];
        for (s, rl) in parts.iter().enumerate() {
            for (a, &n) in self.patterns[s].nodes.iter().enumerate() {
                for c in 0..3 {
                    r[3 * n + c] += rl[3 * a + c];
                }
            }
        }
        Ok(r)
    }

    fn subdomain_residual(
        &self,
        s: usize,
        d: &[f64],
        d_nm1: &[f64],
        d_nm2: &[f64],
        dt: f64,
        t: f64,
    ) -> Result<Vec<f64>, FemError> {
        let pat = &self.patterns[s];
        let mut r = vec![0.0; 3 * pat.nodes.len()];
        let gamma = self.boundary.loads.activation.value(t);
        let nen = self.basis.n_nodes();
        let inertia = self.density / (dt * dt);
        for &h in &self.elements_of[s] {
            let el = &self.elements[h];
            let u = self.gather(h, d);
            let acc: Vec<Vector3<f64>> = if inertia > 0.0 {
                let u1 = self.gather(h, d_nm1);
                let u2 = self.gather(h, d_nm2);
                (0..nen).map(|a| u[a] - 2.0 * u1[a] + u2[a]).collect()
            } else {
                Vec::new()
            };
            for q in 0..el.dv.len() {
                let f = self.deformation_gradient(h, q, &u);
                let state = DeformationState::new(f, el.frames[q]);
                let mut p = piola_passive(&state, &self.material).map_err(|e| Self::material_error(h, e))?;
                if let Some(act) = self.active(h, q, gamma) {
                    p += piola_active(&f, &act).map_err(|e| Self::material_error(h, e))?;
                }
                let dv = el.dv[q];
                let mut a_q = Vector3::zeros();
                if inertia > 0.0 {
                    for (b, acc_b) in acc.iter().enumerate() {
                        a_q += self.basis.values[q][b] * acc_b;
                    }
                    a_q *= inertia;
                }
                for a in 0..nen {
                    let g = Vector3::from(el.dndx[q * nen + a]);
                    let ra = (p * g + a_q * self.basis.values[q][a]) * dv;
                    let la = el.local[a] as usize;
                    for c in 0..3 {
                        r[3 * la + c] += ra[c];
                    }
                }
            }
        }
        let pressure = self.boundary.loads.pressure.value(t);
        for &fi in &self.faces_of[s] {
            let face = &self.faces[fi];
            let robin = self.boundary.robin(face.region);
            if face.region == Region::Endo && pressure == 0.0 || face.region != Region::Endo && robin.is_none() {
                continue;
            }
            let el = &self.elements[face.hex];
            let u = self.gather(face.hex, d);
            let u1 = self.gather(face.hex, d_nm1);
            for pt in &face.points {
                let force = match (face.region, robin) {
                    (Region::Endo, _) => {
                        let area = match self.boundary.pressure_mode {
                            PressureMode::Follower => {
                                let (xa, xb) = current_tangents(pt, &face.nodes, &u);
                                xa.cross(&xb)
                            }
                            PressureMode::Dead => pt.xa.cross(&pt.xb),
                        };
                        pressure * pt.sign * area
                    }
                    (_, Some(rp)) => {
                        let ref_area = pt.sign * pt.xa.cross(&pt.xb);
                        let ds = ref_area.norm();
                        let n = ref_area / ds;
                        let (mut dq, mut vq) = (Vector3::zeros(), Vector3::zeros());
                        for (i, &a) in face.nodes.iter().enumerate() {
                            dq += pt.values[i] * u[a];
                            vq += pt.values[i] * (u[a] - u1[a]);
                        }
                        rp.traction(&dq, &(vq / dt), &n) * ds
                    }
                    _ => unreachable!(),
                };
                for (i, &a) in face.nodes.iter().enumerate() {
                    let ra = force * (pt.weight * pt.values[i]);
                    let la = el.local[a] as usize;
                    for c in 0..3 {
                        r[3 * la + c] += ra[c];
                    }
                }
            }
        }
        Ok(r)
    }

    /// Per-subdomain Jacobian blocks of the residual at `d`.
    pub fn assemble_jacobian(&self, d: &[f64], d_nm1: &[f64], dt: f64, t: f64) -> Result<UnassembledMatrix, FemError> {
        self.check_len(d)?;
        self.check_len(d_nm1)?;
        if !(dt > 0.0) {
            return Err(FemError::InvalidParameter { name: "dt".into(), value: dt });
        }
        let blocks: Vec<CsrMatrix> =
            (0..self.n_subdomains()).into_par_iter().map(|s| self.subdomain_jacobian(s, d, dt, t)).collect::<Result<_, _>>()?;
        let maps: Vec<Vec<usize>> = (0..self.n_subdomains()).map(|s| self.local_to_global(s)).collect();
        Ok(UnassembledMatrix::new(self.n_dofs(), blocks, maps, BLOCK_SIZE)?.with_near_nullspace(self.rigid_body_modes()))
    }

    fn subdomain_jacobian(&self, s: usize, d: &[f64], dt: f64, t: f64) -> Result<CsrMatrix, FemError> {
        let pat = &self.patterns[s];
        let mut sys = LocalSystem { pattern: pat, values: vec![0.0; pat.col_idx.len()] };
        let gamma = self.boundary.loads.activation.value(t);
        let nen = self.basis.n_nodes();
        let inertia = self.density / (dt * dt);
        let mut g_a = vec![[[0.0f64; 3]; 9]; nen];
        for &h in &self.elements_of[s] {
            let el = &self.elements[h];
            let u = self.gather(h, d);
            for q in 0..el.dv.len() {
                let f = self.deformation_gradient(h, q, &u);
                let state = DeformationState::new(f, el.frames[q]);
                let act = self.active(h, q, gamma);
                let (_, tan) = stress_and_tangent(&state, &self.material, act.as_ref()).map_err(|e| Self::material_error(h, e))?;
                let dv = el.dv[q];
                let grads = &el.dndx[q * nen..(q + 1) * nen];
                // g_a[(i,k)][L] = Σ_J A[iJ,kL] ∂_J N_a
                for (a, ga) in g_a.iter_mut().enumerate() {
                    let gr = grads[a];
                    for i in 0..3 {
                        for k in 0..3 {
                            for l in 0..3 {
                                let c = 3 * k + l;
                                ga[3 * i + k][l] =
                                    tan[(3 * i, c)] * gr[0] + tan[(3 * i + 1, c)] * gr[1] + tan[(3 * i + 2, c)] * gr[2];
                            }
                        }
                    }
                }
                let vals = &self.basis.values[q];
                for a in 0..nen {
                    let la = el.local[a] as usize;
                    for b in 0..nen {
                        let gb = grads[b];
                        let mut blk = Matrix3::zeros();
                        for i in 0..3 {
                            for k in 0..3 {
                                let row = &g_a[a][3 * i + k];
                                blk[(i, k)] = (row[0] * gb[0] + row[1] * gb[1] + row[2] * gb[2]) * dv;
                            }
                        }
                        if inertia > 0.0 {
                            let m = inertia * vals[a] * vals[b] * dv;
                            for i in 0..3 {
                                blk[(i, i)] += m;
                            }
                        }
                        sys.add_block(la, el.slot[a * nen + b] as usize, &blk);
                    }
                }
            }
        }
        let pressure = self.boundary.loads.pressure.value(t);
        for &fi in &self.faces_of[s] {
            let face = &self.faces[fi];
            let el = &self.elements[face.hex];
            let robin = self.boundary.robin(face.region);
            let follower = face.region == Region::Endo && pressure != 0.0 && self.boundary.pressure_mode == PressureMode::Follower;
            if !follower && robin.is_none() {
                continue;
            }
            let u = self.gather(face.hex, d);
            for pt in &face.points {
                if follower {
                    let (xa, xb) = current_tangents(pt, &face.nodes, &u);
                    let (ca, cb) = (skew(&xa), skew(&xb));
                    let scale = pressure * pt.sign * pt.weight;
                    for (i, &a) in face.nodes.iter().enumerate() {
                        let la = el.local[a] as usize;
                        for (j, &b) in face.nodes.iter().enumerate() {
                            let blk = scale * pt.values[i] * (pt.db[j] * ca - pt.da[j] * cb);
                            sys.add_block(la, el.slot[a * nen + b] as usize, &blk);
                        }
                    }
                } else if let Some(rp) = robin {
                    let ref_area = pt.sign * pt.xa.cross(&pt.xb);
                    let ds = ref_area.norm();
                    let k = rp.stiffness(&(ref_area / ds), dt) * (ds * pt.weight);
                    for (i, &a) in face.nodes.iter().enumerate() {
                        let la = el.local[a] as usize;
                        for (j, &b) in face.nodes.iter().enumerate() {
                            sys.add_block(la, el.slot[a * nen + b] as usize, &(k * (pt.values[i] * pt.values[j])));
                        }
                    }
                }
            }
        }
        let n = 3 * pat.nodes.len();
        Ok(CsrMatrix::new(n, n, pat.row_ptr.clone(), pat.col_idx.clone(), sys.values)?)
    }
}

fn current_tangents(pt: &FacePoint, nodes: &[usize], u: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    let mut xa = pt.xa;
    let mut xb = pt.xb;
    for (i, &a) in nodes.iter().enumerate() {
        xa += pt.da[i] * u[a];
        xb += pt.db[i] * u[a];
    }
    (xa, xb)
}

/// [v]× with [v]× w = v × w.
fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// Translations and infinitesimal rotations about the centroid of `coords`.
pub fn rigid_body_modes(coords: &[[f64; 3]]) -> Vec<Vec<f64>> {
    let n = coords.len();
    let mut c = [0.0; 3];
    for x in coords {
        for d in 0..3 {
            c[d] += x[d] / n as f64;
        }
    }
    let mut modes = vec![vec![0.0; 3 * n]; 6];
    for (i, x) in coords.iter().enumerate() {
        let r = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
        for d in 0..3 {
            modes[d][3 * i + d] = 1.0;
        }
        // e_z × r, e_x × r, e_y × r
        modes[3][3 * i] = -r[1];
        modes[3][3 * i + 1] = r[0];
        modes[4][3 * i + 1] = -r[2];
        modes[4][3 * i + 2] = r[1];
        modes[5][3 * i] = r[2];
        modes[5][3 * i + 2] = -r[0];
    }
    modes
}

#[cfg(test)]
mod tests;
