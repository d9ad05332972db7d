//! Balancing domain decomposition by constraints over subassembled operators.
//!
//! The interface problem `S_Γ u = g` is preconditioned by
//! `Rᵀ_D S̃_Γ⁻¹ R_D`, where `S̃_Γ` is the Schur complement of the partially
//! assembled space in which only the primal functionals are continuous.
//! Local constraints are imposed with Lagrange multipliers.

mod precond;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::linalg::LinalgError;
use crate::mesh::{bisect, repair_connectivity, ClassKind, InterfaceSets, BLOCK_SIZE};

pub use precond::{build_bddc, BddcPrecond, BddcStats, InterfacePreconditioner, SchurOperator};

#[derive(Debug, thiserror::Error)]
pub enum BddcError {
    #[error("constrained local problem on subdomain {subdomain} is singular ({what})")]
    SingularLocal { subdomain: usize, what: &'static str },
    #[error("primal space is empty for the interface of {n_gamma} nodes")]
    EmptyPrimalSpace { n_gamma: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("operator and interface sets disagree: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which interface classes carry primal constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimalConfig {
    pub use_vertices: bool,
    pub use_edge_averages: bool,
    pub use_face_averages: bool,
    /// One average per displacement component. Always set.
    pub per_component: bool,
    /// Every interface node becomes a pointwise primal entity.
    pub all_interface: bool,
    /// Primal face classes also carry their three rotational moments.
    #[serde(default)]
    pub rigid_modes: bool,
}

impl PrimalConfig {
    pub const V: Self = Self::new(true, false, false);
    pub const VE: Self = Self::new(true, true, false);
    pub const EF: Self = Self::new(false, true, true);
    pub const VEF: Self = Self::new(true, true, true);
    pub const ALL_INTERFACE: Self =
        Self { use_vertices: false, use_edge_averages: false, use_face_averages: false, per_component: true, all_interface: true, rigid_modes: false };

    const fn new(v: bool, e: bool, f: bool) -> Self {
        Self { use_vertices: v, use_edge_averages: e, use_face_averages: f, per_component: true, all_interface: false, rigid_modes: false }
    }

    pub const fn with_rigid_modes(self) -> Self {
        Self { rigid_modes: true, ..self }
    }

    pub fn validate(&self) -> Result<(), BddcError> {
        if !self.per_component {
            return Err(BddcError::InvalidConfig("averages are taken per component".into()));
        }
        if !(self.use_vertices || self.use_edge_averages || self.use_face_averages || self.all_interface) {
            return Err(BddcError::InvalidConfig("no constraint type enabled".into()));
        }
        Ok(())
    }
}

impl Default for PrimalConfig {
    fn default() -> Self {
        Self::VEF
    }
}

impl fmt::Display for PrimalConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.all_interface {
            return f.write_str("ALL");
        }
        let mut s = String::new();
        if self.use_vertices {
            s.push('V');
        }
        if self.use_edge_averages {
            s.push('E');
        }
        if self.use_face_averages {
            s.push('F');
        }
        f.write_str(&s)
    }
}

impl FromStr for PrimalConfig {
    type Err = BddcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "V" => Ok(Self::V),
            "VE" => Ok(Self::VE),
            "EF" => Ok(Self::EF),
            "VEF" => Ok(Self::VEF),
            "ALL" => Ok(Self::ALL_INTERFACE),
            other => Err(BddcError::InvalidConfig(format!("unknown primal space '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BddcSettings {
    #[serde(with = "primal_serde")]
    pub primal: PrimalConfig,
    pub levels: usize,
    pub agglomeration_factor: usize,
}

impl Default for BddcSettings {
    fn default() -> Self {
        Self { primal: PrimalConfig::VEF, levels: 2, agglomeration_factor: 8 }
    }
}

impl BddcSettings {
    pub fn validate(&self) -> Result<(), BddcError> {
        self.primal.validate()?;
        if !(2..=3).contains(&self.levels) {
            return Err(BddcError::InvalidConfig(format!("levels must be 2 or 3, got {}", self.levels)));
        }
        if self.agglomeration_factor < 2 {
            return Err(BddcError::InvalidConfig("agglomeration factor must be at least 2".into()));
        }
        Ok(())
    }
}

mod primal_serde {
    use super::PrimalConfig;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &PrimalConfig, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&p.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<PrimalConfig, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Counting-function weights on the interface dofs of each subdomain.
#[derive(Debug, Clone)]
pub struct ScalingWeights {
    /// Per subdomain: (local dof, weight) for every interface dof, in local order.
    pub weights: Vec<Vec<(usize, f64)>>,
}

impl ScalingWeights {
    pub fn weight(&self, subdomain: usize, local_dof: usize) -> Option<f64> {
        self.weights[subdomain].iter().find(|(d, _)| *d == local_dof).map(|(_, w)| *w)
    }
}

pub fn build_scaling(interface: &InterfaceSets) -> ScalingWeights {
    let weights = interface
        .subdomain_nodes
        .iter()
        .map(|nodes| {
            nodes
                .iter()
                .enumerate()
                .filter(|(_, &n)| interface.is_interface(n))
                .flat_map(|(p, &n)| {
                    let w = 1.0 / interface.multiplicity[n] as f64;
                    (0..BLOCK_SIZE).map(move |c| (BLOCK_SIZE * p + c, w))
                })
                .collect()
        })
        .collect();
    ScalingWeights { weights }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PrimalKind {
    /// Pointwise values of the three components at one node.
    Point,
    /// Arithmetic mean of each component over the nodes.
    Average,
    /// Moments of the displacement against the rotations about the
    /// principal axes of the node cloud, normalized to rotation angles.
    Rotation,
}

/// A set of interface nodes carrying three primal functionals, one per component.
#[derive(Debug, Clone, Serialize)]
pub struct PrimalEntity {
    pub kind: PrimalKind,
    pub class_kind: ClassKind,
    pub nodes: Vec<usize>,
    pub subdomains: Vec<usize>,
    pub centroid: [f64; 3],
}

/// Constraint rows of one subdomain, in local dof numbering.
#[derive(Debug, Clone, Default)]
pub struct LocalConstraints {
    /// Global primal dof of each row.
    pub primal_dofs: Vec<usize>,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl LocalConstraints {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Dense row-major copy with `n_local` columns.
    pub fn to_dense(&self, n_local: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.rows.len() * n_local];
        for (r, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                c[r * n_local + j] = v;
            }
        }
        c
    }
}

/// Primal entities and the constraint matrices they induce. Primal dof
/// `3e + c` is component `c` of entity `e`.
#[derive(Debug, Clone)]
pub struct PrimalSpace {
    pub entities: Vec<PrimalEntity>,
    pub local: Vec<LocalConstraints>,
}

impl PrimalSpace {
    pub fn n_primal(&self) -> usize {
        BLOCK_SIZE * self.entities.len()
    }

    /// Sorted entities touched by each subdomain.
    pub fn entities_of(&self, subdomain: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.local[subdomain].primal_dofs.iter().map(|&p| p / BLOCK_SIZE).collect();
        out.dedup();
        out
    }
}

pub fn build_primal_space(interface: &InterfaceSets, config: &PrimalConfig) -> Result<PrimalSpace, BddcError> {
    config.validate()?;
    let centroid = |nodes: &[usize]| {
        let mut c = [0.0; 3];
        for &n in nodes {
            for d in 0..3 {
                c[d] += interface.coords[n][d] / nodes.len() as f64;
            }
        }
        c
    };
    let mut entities = Vec::new();
    if config.all_interface {
        for &n in &interface.gamma_nodes {
            let cl = &interface.classes[interface.class_of_node[n].expect("interface node without class")];
            entities.push(PrimalEntity {
                kind: PrimalKind::Point,
                class_kind: cl.kind,
                nodes: vec![n],
                subdomains: cl.subdomains.clone(),
                centroid: interface.coords[n],
            });
        }
    } else {
        for cl in &interface.classes {
            let kind = match cl.kind {
                ClassKind::Vertex if config.use_vertices => PrimalKind::Point,
                ClassKind::Edge if config.use_edge_averages => PrimalKind::Average,
                ClassKind::Face if config.use_face_averages => PrimalKind::Average,
                _ => continue,
            };
            let ent = PrimalEntity {
                kind,
                class_kind: cl.kind,
                nodes: cl.nodes.clone(),
                subdomains: cl.subdomains.clone(),
                centroid: centroid(&cl.nodes),
            };
            let rotational = config.rigid_modes
                && cl.kind == ClassKind::Face
                && rotation_rows(&ent.nodes, &interface.coords, ent.centroid).is_some();
            if rotational {
                entities.push(PrimalEntity { kind: PrimalKind::Rotation, ..ent.clone() });
            }
            entities.push(ent);
        }
    }
    if entities.is_empty() && !interface.gamma_nodes.is_empty() {
        return Err(BddcError::EmptyPrimalSpace { n_gamma: interface.gamma_nodes.len() });
    }

    let mut local = vec![LocalConstraints::default(); interface.n_subdomains()];
    for (e, ent) in entities.iter().enumerate() {
        let w = 1.0 / ent.nodes.len() as f64;
        let rot = match ent.kind {
            PrimalKind::Rotation => rotation_rows(&ent.nodes, &interface.coords, ent.centroid),
            _ => None,
        };
        for &s in &ent.subdomains {
            let nodes = &interface.subdomain_nodes[s];
            let pos: Vec<usize> = ent
                .nodes
                .iter()
                .map(|n| nodes.binary_search(n).map_err(|_| BddcError::Inconsistent(format!("node {n} missing from subdomain {s}"))))
                .collect::<Result<_, _>>()?;
            for c in 0..BLOCK_SIZE {
                local[s].primal_dofs.push(BLOCK_SIZE * e + c);
                let row = match &rot {
                    Some(r) => pos.iter().zip(&r[c]).flat_map(|(&p, v)| (0..BLOCK_SIZE).map(move |d| (BLOCK_SIZE * p + d, v[d]))).collect(),
                    None => pos.iter().map(|&p| (BLOCK_SIZE * p + c, w)).collect(),
                };
                local[s].rows.push(row);
            }
        }
    }
    for (s, lc) in local.iter().enumerate() {
        check_full_rank(lc).map_err(|msg| BddcError::InvalidConfig(format!("subdomain {s}: {msg}")))?;
    }
    Ok(PrimalSpace { entities, local })
}

/// Per principal axis, the rotation field `a × (x - centroid)` at each node
/// scaled so that a unit rotation about `a` has moment 1. `None` when the
/// nodes are (nearly) collinear and some rotation leaves them fixed.
fn rotation_rows(nodes: &[usize], coords: &[[f64; 3]], centroid: [f64; 3]) -> Option<[Vec<[f64; 3]>; 3]> {
    let y: Vec<Vector3<f64>> =
        nodes.iter().map(|&n| Vector3::new(coords[n][0] - centroid[0], coords[n][1] - centroid[1], coords[n][2] - centroid[2])).collect();
    let mut inertia = Matrix3::zeros();
    for v in &y {
        inertia += Matrix3::identity() * v.norm_squared() - v * v.transpose();
    }
    let eig = inertia.symmetric_eigen();
    let max = eig.eigenvalues.max();
    if !(max > 0.0) || eig.eigenvalues.min() <= 1e-8 * max {
        return None;
    }
    Some(std::array::from_fn(|k| {
        let axis = eig.eigenvectors.column(k).into_owned();
        let scale = 1.0 / eig.eigenvalues[k];
        y.iter().map(|v| (axis.cross(v) * scale).into()).collect()
    }))
}

/// Rows of different classes have disjoint supports and the rows of one
/// class are mutually orthogonal (per-component averages against each other
/// and against centred rotations, rotations by the principal axes), so the
/// Gram matrix is diagonal and positive.
fn check_full_rank(lc: &LocalConstraints) -> Result<(), String> {
    use std::collections::{BTreeSet, HashMap};
    let mut rows_of_dof: HashMap<usize, Vec<usize>> = HashMap::new();
    for (r, row) in lc.rows.iter().enumerate() {
        if row.iter().all(|(_, v)| *v == 0.0) {
            return Err(format!("constraint row {r} is zero"));
        }
        for &(j, _) in row {
            rows_of_dof.entry(j).or_default().push(r);
        }
    }
    let mut pairs = BTreeSet::new();
    for rows in rows_of_dof.values() {
        for (a, &ra) in rows.iter().enumerate() {
            for &rb in &rows[a + 1..] {
                pairs.insert((ra.min(rb), ra.max(rb)));
            }
        }
    }
    let dense: Vec<HashMap<usize, f64>> = lc.rows.iter().map(|row| row.iter().copied().collect()).collect();
    let norm2 = |r: usize| dense[r].values().map(|v| v * v).sum::<f64>();
    for (ra, rb) in pairs {
        let ip: f64 = dense[ra].iter().map(|(j, v)| v * dense[rb].get(j).unwrap_or(&0.0)).sum();
        if ip.abs() > 1e-10 * (norm2(ra) * norm2(rb)).sqrt() {
            return Err(format!("constraint rows {ra} and {rb} overlap without being orthogonal"));
        }
    }
    Ok(())
}

/// Groups subdomains into ⌈N/factor⌉ agglomerates by coordinate bisection
/// of their centroids, then reassigns stray pieces so that every
/// agglomerate is connected through face-sharing subdomains.
pub fn agglomerate_coarse(interface: &InterfaceSets, factor: usize) -> Result<Vec<usize>, BddcError> {
    if factor < 2 {
        return Err(BddcError::InvalidConfig("agglomeration factor must be at least 2".into()));
    }
    let n = interface.n_subdomains();
    let n_groups = n.div_ceil(factor).max(1);
    let centroids = interface.subdomain_centroids();
    let mut group = vec![0usize; n];
    bisect(&centroids, (0..n).collect(), n_groups, 0, &mut group);
    let adj = face_adjacency(interface);
    repair_connectivity(&mut group, n_groups, &adj);
    for g in 0..n_groups {
        let members: Vec<usize> = (0..n).filter(|&s| group[s] == g).collect();
        if members.is_empty() {
            return Err(BddcError::InvalidConfig(format!("agglomerate {g} is empty")));
        }
        if !connected(&members, &adj) {
            return Err(BddcError::InvalidConfig(format!("agglomerate {g} is disconnected")));
        }
    }
    Ok(group)
}

/// Subdomain pairs that share an interface class with no third subdomain.
fn face_adjacency(interface: &InterfaceSets) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); interface.n_subdomains()];
    for c in interface.classes.iter().filter(|c| c.subdomains.len() == 2) {
        adj[c.subdomains[0]].push(c.subdomains[1]);
        adj[c.subdomains[1]].push(c.subdomains[0]);
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    adj
}

fn connected(members: &[usize], adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![members[0]];
    let mut stack = vec![members[0]];
    while let Some(s) = stack.pop() {
        for &t in &adj[s] {
            if members.contains(&t) && !seen.contains(&t) {
                seen.push(t);
                stack.push(t);
            }
        }
    }
    seen.len() == members.len()
}
