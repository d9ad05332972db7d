//! Hexahedral meshes, partitions into subdomains, degree-of-freedom maps and
//! the interior/interface classification used by substructuring.

mod dofmap;
mod ellipsoid;
mod interface;
mod io;
mod partition;

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constitutive::FiberFrame;

pub use dofmap::{DofMap, BLOCK_SIZE};
pub use ellipsoid::{build_ellipsoid_mesh, cavity_volume, truncated_ellipsoid_volume, EllipsoidGeometry};
pub use interface::{classify_interface, ClassKind, InterfaceClass, InterfaceSets};
pub use io::{read_mesh, write_mesh};
pub use partition::{partition_rcb, partition_structured, Partition};
pub(crate) use partition::{bisect, repair_connectivity};

/// Reference coordinates of the hexahedron vertices, VTK ordering.
pub const HEX_VERTEX_REF: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// Vertices of local face `f` in cyclic order. Face `f` lies on reference
/// coordinate `f / 2` at value `-1` (even `f`) or `+1` (odd `f`).
pub const HEX_FACE_VERTICES: [[usize; 4]; 6] = [
    [0, 3, 7, 4],
    [1, 2, 6, 5],
    [0, 1, 5, 4],
    [3, 2, 6, 7],
    [0, 1, 2, 3],
    [4, 5, 6, 7],
];

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("invalid element counts: {0}")]
    InvalidCounts(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("mesh is not a structured box grid")]
    NotStructured,
    #[error("subdomain counts ({px}, {py}, {pz}) do not divide grid ({nx}, {ny}, {nz})")]
    NonDivisible { px: usize, py: usize, pz: usize, nx: usize, ny: usize, nz: usize },
    #[error("partition error: {0}")]
    Partition(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed mesh file (line {line}): {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Base,
    Epi,
    Endo,
    Free,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Base => "base",
            Region::Epi => "epi",
            Region::Endo => "endo",
            Region::Free => "free",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "base" => Some(Region::Base),
            "epi" => Some(Region::Epi),
            "endo" => Some(Region::Endo),
            "free" => Some(Region::Free),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    pub hex: usize,
    pub local_face: usize,
    pub region: Region,
}

#[derive(Debug, Clone)]
pub struct HexMesh {
    pub nodes: Vec<[f64; 3]>,
    /// 8-node connectivity in VTK order.
    pub hexes: Vec<[usize; 8]>,
    pub boundary_faces: Vec<BoundaryFace>,
    pub fibers: Vec<FiberFrame>,
    /// Element counts (nx, ny, nz) when the mesh is a lexicographic box grid.
    pub grid: Option<[usize; 3]>,
}

/// Trilinear shape functions at a reference point.
pub fn trilinear_shape(xi: [f64; 3]) -> [f64; 8] {
    let mut n = [0.0; 8];
    for (v, r) in HEX_VERTEX_REF.iter().enumerate() {
        n[v] = 0.125 * (1.0 + xi[0] * r[0]) * (1.0 + xi[1] * r[1]) * (1.0 + xi[2] * r[2]);
    }
    n
}

/// Reference gradients of the trilinear shape functions.
pub fn trilinear_grad(xi: [f64; 3]) -> [[f64; 3]; 8] {
    let mut g = [[0.0; 3]; 8];
    for (v, r) in HEX_VERTEX_REF.iter().enumerate() {
        let a = 1.0 + xi[0] * r[0];
        let b = 1.0 + xi[1] * r[1];
        let c = 1.0 + xi[2] * r[2];
        g[v] = [0.125 * r[0] * b * c, 0.125 * a * r[1] * c, 0.125 * a * b * r[2]];
    }
    g
}

impl HexMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_hexes(&self) -> usize {
        self.hexes.len()
    }

    pub fn vertex_coords(&self, hex: usize) -> [[f64; 3]; 8] {
        let mut x = [[0.0; 3]; 8];
        for (v, &n) in self.hexes[hex].iter().enumerate() {
            x[v] = self.nodes[n];
        }
        x
    }

    /// Physical point of a reference coordinate inside `hex`.
    pub fn map_point(&self, hex: usize, xi: [f64; 3]) -> [f64; 3] {
        let n = trilinear_shape(xi);
        let x = self.vertex_coords(hex);
        let mut p = [0.0; 3];
        for v in 0..8 {
            for d in 0..3 {
                p[d] += n[v] * x[v][d];
            }
        }
        p
    }

    /// Jacobian of the reference-to-physical map, columns ∂X/∂ξ_d.
    pub fn jacobian(&self, hex: usize, xi: [f64; 3]) -> Matrix3<f64> {
        let g = trilinear_grad(xi);
        let x = self.vertex_coords(hex);
        let mut j = Matrix3::zeros();
        for v in 0..8 {
            for r in 0..3 {
                for c in 0..3 {
                    j[(r, c)] += x[v][r] * g[v][c];
                }
            }
        }
        j
    }

    /// Smallest Jacobian determinant over an `npts`³ Gauss rule.
    pub fn min_jacobian(&self, hex: usize, npts: usize) -> f64 {
        let (pts, _) = crate::fem::gauss_legendre(npts);
        let mut m = f64::INFINITY;
        for &a in &pts {
            for &b in &pts {
                for &c in &pts {
                    m = m.min(self.jacobian(hex, [a, b, c]).determinant());
                }
            }
        }
        m
    }

    pub fn hex_volume(&self, hex: usize) -> f64 {
        let (pts, w) = crate::fem::gauss_legendre(2);
        let mut vol = 0.0;
        for (a, wa) in pts.iter().zip(&w) {
            for (b, wb) in pts.iter().zip(&w) {
                for (c, wc) in pts.iter().zip(&w) {
                    vol += wa * wb * wc * self.jacobian(hex, [*a, *b, *c]).determinant();
                }
            }
        }
        vol
    }

    pub fn hex_centroid(&self, hex: usize) -> [f64; 3] {
        self.map_point(hex, [0.0; 3])
    }

    /// Sorted vertex key of a local face.
    pub fn face_key(&self, hex: usize, face: usize) -> [usize; 4] {
        let mut k = HEX_FACE_VERTICES[face].map(|v| self.hexes[hex][v]);
        k.sort_unstable();
        k
    }

    /// Face-neighbor lists of every hex.
    pub fn hex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut faces: HashMap<[usize; 4], Vec<usize>> = HashMap::new();
        for h in 0..self.n_hexes() {
            for f in 0..6 {
                faces.entry(self.face_key(h, f)).or_default().push(h);
            }
        }
        let mut nb = vec![Vec::new(); self.n_hexes()];
        for hs in faces.values() {
            if hs.len() == 2 {
                nb[hs[0]].push(hs[1]);
                nb[hs[1]].push(hs[0]);
            }
        }
        for l in &mut nb {
            l.sort_unstable();
            l.dedup();
        }
        nb
    }

    /// Faces that belong to exactly one hex, as (hex, local face) pairs in hex order.
    pub fn topological_boundary(&self) -> Vec<(usize, usize)> {
        let mut count: HashMap<[usize; 4], usize> = HashMap::new();
        for h in 0..self.n_hexes() {
            for f in 0..6 {
                *count.entry(self.face_key(h, f)).or_default() += 1;
            }
        }
        let mut out = Vec::new();
        for h in 0..self.n_hexes() {
            for f in 0..6 {
                if count[&self.face_key(h, f)] == 1 {
                    out.push((h, f));
                }
            }
        }
        out
    }

    /// Area-weighted outward normal `cof(∂X/∂ξ)·(±e_axis)` at a reference point on a face.
    pub fn face_normal_area(&self, hex: usize, face: usize, xi: [f64; 3]) -> Vector3<f64> {
        let j = self.jacobian(hex, xi);
        let axis = face / 2;
        let sign = if face % 2 == 0 { -1.0 } else { 1.0 };
        let cof = j.determinant() * j.try_inverse().unwrap_or_else(Matrix3::zeros).transpose();
        sign * cof.column(axis).into_owned()
    }

    /// Maximum bounding-box diagonal over all hexes.
    pub fn max_element_diameter(&self) -> f64 {
        (0..self.n_hexes()).map(|h| bbox_diagonal(self.hexes[h].iter().map(|&n| self.nodes[n]))).fold(0.0, f64::max)
    }

    pub fn count_region(&self, region: Region) -> usize {
        self.boundary_faces.iter().filter(|f| f.region == region).count()
    }
}

pub(crate) fn bbox_diagonal(points: impl Iterator<Item = [f64; 3]>) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut any = false;
    for p in points {
        any = true;
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    if !any {
        return 0.0;
    }
    ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt()
}

/// Dimensions of the beam domain (0,10)×(0,1)×(0,1).
pub const BEAM_EXTENT: [f64; 3] = [10.0, 1.0, 1.0];

/// Structured beam mesh: base at x = 0, endocardium at z = 0, epicardium at z = 1.
pub fn build_beam_mesh(nx: usize, ny: usize, nz: usize) -> Result<HexMesh, MeshError> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(MeshError::InvalidCounts(format!("beam counts ({nx}, {ny}, {nz}) must be >= 1")));
    }
    let node = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([
                    BEAM_EXTENT[0] * i as f64 / nx as f64,
                    BEAM_EXTENT[1] * j as f64 / ny as f64,
                    BEAM_EXTENT[2] * k as f64 / nz as f64,
                ]);
            }
        }
    }
    let mut hexes = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
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
    let fibers = vec![FiberFrame::cartesian(); nodes.len()];
    let mut mesh = HexMesh { nodes, hexes, boundary_faces: Vec::new(), fibers, grid: Some([nx, ny, nz]) };
    let tol = 1e-9;
    mesh.boundary_faces = mesh
        .topological_boundary()
        .into_iter()
        .map(|(hex, local_face)| {
            let c = face_centroid(&mesh, hex, local_face);
            let region = if c[0].abs() < tol {
                Region::Base
            } else if c[2].abs() < tol {
                Region::Endo
            } else if (c[2] - BEAM_EXTENT[2]).abs() < tol {
                Region::Epi
            } else {
                Region::Free
            };
            BoundaryFace { hex, local_face, region }
        })
        .collect();
    Ok(mesh)
}

pub(crate) fn face_centroid(mesh: &HexMesh, hex: usize, face: usize) -> [f64; 3] {
    let mut c = [0.0; 3];
    for v in HEX_FACE_VERTICES[face] {
        let p = mesh.nodes[mesh.hexes[hex][v]];
        for d in 0..3 {
            c[d] += 0.25 * p[d];
        }
    }
    c
}
