use std::collections::BTreeMap;

use serde::Serialize;

use super::{DofMap, HexMesh, Partition, BLOCK_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ClassKind {
    Vertex,
    Edge,
    Face,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterfaceClass {
    pub kind: ClassKind,
    /// Sorted ids of the subdomains sharing every node of the class.
    pub subdomains: Vec<usize>,
    /// Sorted node ids.
    pub nodes: Vec<usize>,
    /// Vertex split off a face or edge class as a geometric corner.
    pub promoted: bool,
}

/// Interior/interface split of the nodes (and their three dofs) and the
/// equivalence classes of the interface.
#[derive(Debug, Clone)]
pub struct InterfaceSets {
    pub n_nodes: usize,
    pub subdomain_nodes: Vec<Vec<usize>>,
    /// Number of subdomains touching each node.
    pub multiplicity: Vec<usize>,
    pub gamma_nodes: Vec<usize>,
    pub classes: Vec<InterfaceClass>,
    pub class_of_node: Vec<Option<usize>>,
    pub coords: Vec<[f64; 3]>,
}

pub fn classify_interface(partition: &Partition, dofmap: &DofMap, _mesh: &HexMesh) -> InterfaceSets {
    let subdomain_nodes: Vec<Vec<usize>> = (0..partition.n_subdomains).map(|s| dofmap.subdomain_nodes(s).to_vec()).collect();
    let groups: Vec<Vec<usize>> = (0..partition.subdomain_of_hex.len()).map(|h| dofmap.element_nodes(h).to_vec()).collect();
    InterfaceSets::from_sharing(subdomain_nodes, dofmap.n_nodes(), dofmap.node_coords(), Some(&groups))
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, a: usize) -> usize {
        let mut r = a;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut a = a;
        while self.0[a] != r {
            let next = self.0[a];
            self.0[a] = r;
            a = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|d| (a[d] - b[d]).powi(2)).sum()
}

fn argmax(nodes: &[usize], score: impl Fn(usize) -> f64) -> (usize, f64) {
    let mut best = (nodes[0], score(nodes[0]));
    for &n in &nodes[1..] {
        let s = score(n);
        if s > best.1 {
            best = (n, s);
        }
    }
    best
}

/// Corner nodes of a class: up to four for faces, two for edges.
fn corners(nodes: &[usize], coords: &[[f64; 3]], kind: ClassKind) -> Vec<usize> {
    if nodes.len() == 1 {
        return nodes.to_vec();
    }
    let mut centroid = [0.0; 3];
    for &n in nodes {
        for d in 0..3 {
            centroid[d] += coords[n][d] / nodes.len() as f64;
        }
    }
    let (c1, _) = argmax(nodes, |n| dist2(&coords[n], &centroid));
    let (c2, diam2) = argmax(nodes, |n| dist2(&coords[n], &coords[c1]));
    if diam2 <= 0.0 {
        return vec![c1];
    }
    let mut out = vec![c1, c2];
    if kind != ClassKind::Face {
        return out;
    }
    let (p, q) = (coords[c1], coords[c2]);
    let axis: Vec<f64> = (0..3).map(|d| q[d] - p[d]).collect();
    let perp = |n: usize| -> [f64; 3] {
        let x = coords[n];
        let t = (0..3).map(|d| (x[d] - p[d]) * axis[d]).sum::<f64>() / diam2;
        [0, 1, 2].map(|d| x[d] - p[d] - t * axis[d])
    };
    let norm2 = |v: [f64; 3]| v.iter().map(|x| x * x).sum::<f64>();
    let tol = 1e-20 * diam2;
    let (c3, d3) = argmax(nodes, |n| norm2(perp(n)));
    if d3 <= tol {
        return out;
    }
    out.push(c3);
    let dir = perp(c3);
    let opposite: Vec<usize> = nodes.iter().copied().filter(|&n| (0..3).map(|d| perp(n)[d] * dir[d]).sum::<f64>() < 0.0).collect();
    if !opposite.is_empty() {
        let (c4, d4) = argmax(&opposite, |n| norm2(perp(n)));
        if d4 > tol {
            out.push(c4);
        }
    }
    out
}

impl InterfaceSets {
    /// Builds the classification from the node lists of every subdomain.
    /// With `groups`, nodes of one sharing set are split into components
    /// connected through common groups (elements); without, each sharing
    /// set forms a single class.
    pub fn from_sharing(
        subdomain_nodes: Vec<Vec<usize>>,
        n_nodes: usize,
        coords: &[[f64; 3]],
        groups: Option<&[Vec<usize>]>,
    ) -> Self {
        let mut sharing: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        for (s, nodes) in subdomain_nodes.iter().enumerate() {
            for &n in nodes {
                sharing[n].push(s);
            }
        }
        let multiplicity: Vec<usize> = sharing.iter().map(|s| s.len()).collect();
        let gamma_nodes: Vec<usize> = (0..n_nodes).filter(|&n| multiplicity[n] >= 2).collect();

        let mut uf = UnionFind((0..n_nodes).collect());
        if let Some(groups) = groups {
            for g in groups {
                let gamma: Vec<usize> = g.iter().copied().filter(|&n| multiplicity[n] >= 2).collect();
                for (a, &n) in gamma.iter().enumerate() {
                    for &m in &gamma[a + 1..] {
                        if sharing[n] == sharing[m] {
                            uf.union(n, m);
                        }
                    }
                }
            }
        }
        // key: (sharing set, component root); BTreeMap keeps the order deterministic
        let mut raw: BTreeMap<(Vec<usize>, usize), Vec<usize>> = BTreeMap::new();
        for &n in &gamma_nodes {
            let root = if groups.is_some() { uf.find(n) } else { 0 };
            raw.entry((sharing[n].clone(), root)).or_default().push(n);
        }

        let mut classes = Vec::new();
        for ((subs, _), nodes) in raw {
            let kind = if nodes.len() == 1 {
                ClassKind::Vertex
            } else if subs.len() == 2 {
                ClassKind::Face
            } else {
                ClassKind::Edge
            };
            if kind == ClassKind::Vertex {
                let promoted = subs.len() == 2;
                classes.push(InterfaceClass { kind, subdomains: subs, nodes, promoted });
                continue;
            }
            // at least one node stays behind so the class keeps its average
            let mut promoted = corners(&nodes, coords, kind);
            promoted.truncate(nodes.len() - 1);
            for &c in &promoted {
                classes.push(InterfaceClass { kind: ClassKind::Vertex, subdomains: subs.clone(), nodes: vec![c], promoted: true });
            }
            let rest: Vec<usize> = nodes.into_iter().filter(|n| !promoted.contains(n)).collect();
            if !rest.is_empty() {
                classes.push(InterfaceClass { kind, subdomains: subs, nodes: rest, promoted: false });
            }
        }
        classes.sort_by(|a, b| a.nodes[0].cmp(&b.nodes[0]));
        let mut class_of_node = vec![None; n_nodes];
        for (c, cl) in classes.iter().enumerate() {
            for &n in &cl.nodes {
                class_of_node[n] = Some(c);
            }
        }
        Self { n_nodes, subdomain_nodes, multiplicity, gamma_nodes, classes, class_of_node, coords: coords.to_vec() }
    }

    pub fn n_subdomains(&self) -> usize {
        self.subdomain_nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        BLOCK_SIZE * self.n_nodes
    }

    pub fn is_interface(&self, node: usize) -> bool {
        self.multiplicity[node] >= 2
    }

    /// Global interior dofs of subdomain `s`.
    pub fn interior_dofs(&self, s: usize) -> Vec<usize> {
        self.subdomain_nodes[s]
            .iter()
            .filter(|&&n| !self.is_interface(n))
            .flat_map(|&n| (0..BLOCK_SIZE).map(move |c| BLOCK_SIZE * n + c))
            .collect()
    }

    /// Global interface dofs touched by subdomain `s`.
    pub fn interface_dofs(&self, s: usize) -> Vec<usize> {
        self.subdomain_nodes[s]
            .iter()
            .filter(|&&n| self.is_interface(n))
            .flat_map(|&n| (0..BLOCK_SIZE).map(move |c| BLOCK_SIZE * n + c))
            .collect()
    }

    pub fn gamma_dofs(&self) -> Vec<usize> {
        self.gamma_nodes.iter().flat_map(|&n| (0..BLOCK_SIZE).map(move |c| BLOCK_SIZE * n + c)).collect()
    }

    /// Mean node position of each subdomain.
    pub fn subdomain_centroids(&self) -> Vec<[f64; 3]> {
        self.subdomain_nodes
            .iter()
            .map(|nodes| {
                let mut c = [0.0; 3];
                for &n in nodes {
                    for d in 0..3 {
                        c[d] += self.coords[n][d] / nodes.len() as f64;
                    }
                }
                c
            })
            .collect()
    }

    /// Subdomains sharing at least one interface node with each subdomain.
    pub fn subdomain_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_subdomains()];
        for c in &self.classes {
            for &a in &c.subdomains {
                for &b in &c.subdomains {
                    if a != b {
                        adj[a].push(b);
                    }
                }
            }
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        adj
    }

    pub fn count(&self, kind: ClassKind) -> usize {
        self.classes.iter().filter(|c| c.kind == kind).count()
    }

    /// Classes touched by subdomain `s`, in class order.
    pub fn classes_of(&self, s: usize) -> Vec<usize> {
        (0..self.classes.len()).filter(|&c| self.classes[c].subdomains.binary_search(&s).is_ok()).collect()
    }
}
