//! Truncated prolate-ellipsoidal shell (idealized left ventricle).

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{BoundaryFace, HexMesh, MeshError, Region, HEX_FACE_VERTICES};
use crate::constitutive::FiberFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidGeometry {
    /// Endocardial semi-axes (a, b, c), long axis along z.
    pub endo: [f64; 3],
    pub epi: [f64; 3],
    /// Height of the basal truncation plane.
    pub base_z: f64,
    /// Polar angle left open at the apex, measured from the −z pole.
    pub apex_cut: f64,
    /// Fiber helix angle at the endocardium and epicardium, degrees.
    pub fiber_endo_deg: f64,
    pub fiber_epi_deg: f64,
}

impl Default for EllipsoidGeometry {
    fn default() -> Self {
        Self {
            endo: [0.017, 0.017, 0.060],
            epi: [0.027, 0.027, 0.070],
            base_z: 0.02,
            apex_cut: 0.15,
            fiber_endo_deg: 60.0,
            fiber_epi_deg: -60.0,
        }
    }
}

impl EllipsoidGeometry {
    pub fn validate(&self) -> Result<(), MeshError> {
        for d in 0..3 {
            if !(self.endo[d] > 0.0) || !(self.endo[d] < self.epi[d]) {
                return Err(MeshError::DegenerateGeometry(format!(
                    "endo semi-axis {} must be positive and smaller than epi semi-axis {}",
                    self.endo[d], self.epi[d]
                )));
            }
        }
        if !(self.base_z.abs() < self.endo[2]) {
            return Err(MeshError::DegenerateGeometry(format!("base plane z = {} misses the endocardium", self.base_z)));
        }
        if !(self.apex_cut > 0.0) {
            return Err(MeshError::DegenerateGeometry("apex_cut must be positive".into()));
        }
        for t in [0.0, 1.0] {
            let c = self.axes(t)[2];
            if PI - self.apex_cut <= (self.base_z / c).acos() {
                return Err(MeshError::DegenerateGeometry("apex cut removes the whole wall".into()));
            }
        }
        Ok(())
    }

    /// Semi-axes of the layer at transmural fraction `t` (0 endo, 1 epi).
    pub fn axes(&self, t: f64) -> [f64; 3] {
        [0, 1, 2].map(|d| (1.0 - t) * self.endo[d] + t * self.epi[d])
    }

    fn mu_range(&self, t: f64) -> (f64, f64) {
        let c = self.axes(t)[2];
        ((self.base_z / c).acos(), PI - self.apex_cut)
    }

    fn point(&self, t: f64, mu: f64, phi: f64) -> Vector3<f64> {
        let [a, b, c] = self.axes(t);
        Vector3::new(a * mu.sin() * phi.cos(), b * mu.sin() * phi.sin(), c * mu.cos())
    }

    fn fiber_angle(&self, t: f64) -> f64 {
        ((1.0 - t) * self.fiber_endo_deg + t * self.fiber_epi_deg).to_radians()
    }

    /// Local circumferential and longitudinal (apex to base) unit tangents and outward layer normal.
    pub fn local_basis(&self, t: f64, mu: f64, phi: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let [a, b, c] = self.axes(t);
        let circ = Vector3::new(-a * mu.sin() * phi.sin(), b * mu.sin() * phi.cos(), 0.0).normalize();
        let x = self.point(t, mu, phi);
        let normal = Vector3::new(x[0] / (a * a), x[1] / (b * b), x[2] / (c * c)).normalize();
        let dmu = Vector3::new(a * mu.cos() * phi.cos(), b * mu.cos() * phi.sin(), -c * mu.sin());
        let long = -(dmu - circ * circ.dot(&dmu)).normalize();
        (circ, long, normal)
    }
}

/// Volume of the analytic cavity between the base plane and the apical cut.
pub fn truncated_ellipsoid_volume(g: &EllipsoidGeometry) -> f64 {
    let [a, b, c] = g.endo;
    let z_top = g.base_z;
    let z_bot = c * (PI - g.apex_cut).cos();
    let prim = |z: f64| PI * a * b * (z - z * z * z / (3.0 * c * c));
    prim(z_top) - prim(z_bot)
}

/// Node (i, j, k) = (circumferential, transmural, apicobasal); hexes follow the same layout.
pub fn build_ellipsoid_mesh(
    circumferential: usize,
    transmural: usize,
    apicobasal: usize,
    geometry: &EllipsoidGeometry,
) -> Result<HexMesh, MeshError> {
    let (nc, nt, na) = (circumferential, transmural, apicobasal);
    if nc < 3 || nt == 0 || na == 0 {
        return Err(MeshError::InvalidCounts(format!(
            "ellipsoid counts ({nc}, {nt}, {na}) need circumferential >= 3 and the others >= 1"
        )));
    }
    geometry.validate()?;
    let node = |i: usize, j: usize, k: usize| (i % nc) + nc * (j + (nt + 1) * k);
    let mut nodes = Vec::with_capacity(nc * (nt + 1) * (na + 1));
    let mut fibers = Vec::with_capacity(nodes.capacity());
    for k in 0..=na {
        for j in 0..=nt {
            let t = j as f64 / nt as f64;
            let (mu0, mu1) = geometry.mu_range(t);
            let mu = mu0 + (mu1 - mu0) * k as f64 / na as f64;
            for i in 0..nc {
                let phi = 2.0 * PI * i as f64 / nc as f64;
                let x = geometry.point(t, mu, phi);
                nodes.push([x[0], x[1], x[2]]);
                let (circ, long, normal) = geometry.local_basis(t, mu, phi);
                let alpha = geometry.fiber_angle(t);
                let f = alpha.cos() * circ + alpha.sin() * long;
                fibers.push(FiberFrame { f, s: normal, n: f.cross(&normal) });
            }
        }
    }
    let mut hexes = Vec::with_capacity(nc * nt * na);
    for k in 0..na {
        for j in 0..nt {
            for i in 0..nc {
                hexes.push([
                    node(i, j, k),
                    node(i + 1, j, k),
                    node(i + 1, j + 1, k),
                    node(i, j + 1, k),
                    node(i, j, k + 1),
                    node(i + 1, j, k + 1),
                    node(i + 1, j + 1, k + 1),
                    node(i, j + 1, k + 1),
                ]);
            }
        }
    }
    let mut mesh = HexMesh { nodes, hexes, boundary_faces: Vec::new(), fibers, grid: None };
    if mesh.jacobian(0, [0.0; 3]).determinant() < 0.0 {
        for h in &mut mesh.hexes {
            h.swap(1, 3);
            h.swap(5, 7);
        }
    }
    let jk = |n: usize| ((n / nc) % (nt + 1), n / (nc * (nt + 1)));
    mesh.boundary_faces = mesh
        .topological_boundary()
        .into_iter()
        .map(|(hex, local_face)| {
            let idx: Vec<(usize, usize)> = HEX_FACE_VERTICES[local_face].iter().map(|&v| jk(mesh.hexes[hex][v])).collect();
            let region = if idx.iter().all(|p| p.0 == 0) {
                Region::Endo
            } else if idx.iter().all(|p| p.0 == nt) {
                Region::Epi
            } else if idx.iter().all(|p| p.1 == 0) {
                Region::Base
            } else {
                Region::Free
            };
            BoundaryFace { hex, local_face, region }
        })
        .collect();
    Ok(mesh)
}

/// Volume enclosed by the endocardial faces, closed by flat caps over every
/// boundary loop of the endocardial surface.
pub fn cavity_volume(mesh: &HexMesh) -> f64 {
    let (pts, w) = crate::fem::gauss_legendre(3);
    let mut vol = 0.0;
    let mut loop_edges: HashMap<(usize, usize), usize> = HashMap::new();
    for bf in mesh.boundary_faces.iter().filter(|f| f.region == Region::Endo) {
        let mut q = HEX_FACE_VERTICES[bf.local_face].map(|v| mesh.hexes[bf.hex][v]);
        let p = q.map(|n| Vector3::from(mesh.nodes[n]));
        let area = (p[2] - p[0]).cross(&(p[3] - p[1]));
        let fc = (p[0] + p[1] + p[2] + p[3]) / 4.0;
        let hc = Vector3::from(mesh.hex_centroid(bf.hex));
        // orient so the normal points out of the cavity, i.e. into the wall
        if area.dot(&(hc - fc)) < 0.0 {
            q.reverse();
        }
        let p = q.map(|n| Vector3::from(mesh.nodes[n]));
        for (u, wu) in pts.iter().zip(&w) {
            for (v, wv) in pts.iter().zip(&w) {
                let (s, t) = (0.5 * (u + 1.0), 0.5 * (v + 1.0));
                let x = p[0] * (1.0 - s) * (1.0 - t) + p[1] * s * (1.0 - t) + p[2] * s * t + p[3] * (1.0 - s) * t;
                let xs = (p[1] - p[0]) * (1.0 - t) + (p[2] - p[3]) * t;
                let xt = (p[3] - p[0]) * (1.0 - s) + (p[2] - p[1]) * s;
                vol += 0.25 * wu * wv * x.dot(&xs.cross(&xt)) / 3.0;
            }
        }
        for e in 0..4 {
            let (a, b) = (q[e], q[(e + 1) % 4]);
            if let Some(c) = loop_edges.get_mut(&(b, a)) {
                *c -= 1;
            } else {
                *loop_edges.entry((a, b)).or_default() += 1;
            }
        }
    }
    let open: Vec<(usize, usize)> = {
        let mut v: Vec<_> = loop_edges.into_iter().filter(|(_, c)| *c > 0).map(|(e, _)| e).collect();
        v.sort_unstable();
        v
    };
    // Group the open edges into loops and close each with a fan from its centroid.
    let next: HashMap<usize, usize> = open.iter().copied().collect();
    let mut seen = std::collections::HashSet::new();
    for &(start, _) in &open {
        if seen.contains(&start) {
            continue;
        }
        let mut cycle = vec![start];
        seen.insert(start);
        let mut cur = next[&start];
        while cur != start {
            seen.insert(cur);
            cycle.push(cur);
            cur = match next.get(&cur) {
                Some(&n) => n,
                None => break,
            };
        }
        let c = cycle.iter().map(|&n| Vector3::from(mesh.nodes[n])).sum::<Vector3<f64>>() / cycle.len() as f64;
        for e in 0..cycle.len() {
            let a = Vector3::from(mesh.nodes[cycle[e]]);
            let b = Vector3::from(mesh.nodes[cycle[(e + 1) % cycle.len()]]);
            vol += c.dot(&b.cross(&a)) / 6.0;
        }
    }
    vol
}
