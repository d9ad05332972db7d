use std::collections::HashMap;

use super::{HexMesh, MeshError, Partition};

pub const BLOCK_SIZE: usize = 3;

/// Finite-element nodes of a Q1 or Q2 discretization and the strided
/// displacement layout `x1, y1, z1, x2, ...`.
#[derive(Debug, Clone)]
pub struct DofMap {
    order: usize,
    node_coords: Vec<[f64; 3]>,
    /// Element nodes in lexicographic order `i + p·j + p²·k`, p = order + 1.
    elem_nodes: Vec<Vec<usize>>,
    sub_nodes: Vec<Vec<usize>>,
}

/// VTK vertex index of the lexicographic corner (i, j, k) ∈ {0,1}³.
pub fn vtk_vertex(i: usize, j: usize, k: usize) -> usize {
    [0, 1, 3, 2][i + 2 * j] + 4 * k
}

impl DofMap {
    pub fn new(mesh: &HexMesh, partition: &Partition, order: usize) -> Result<Self, MeshError> {
        if order != 1 && order != 2 {
            return Err(MeshError::InvalidCounts(format!("finite element order {order} not in {{1, 2}}")));
        }
        let p = order + 1;
        let mut node_coords: Vec<[f64; 3]> = mesh.nodes.clone();
        let mut entity: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut elem_nodes = Vec::with_capacity(mesh.n_hexes());
        for (h, hex) in mesh.hexes.iter().enumerate() {
            let mut nodes = Vec::with_capacity(p * p * p);
            for k in 0..p {
                for j in 0..p {
                    for i in 0..p {
                        let lex = [i, j, k];
                        if lex.iter().all(|&c| c == 0 || c == order) {
                            nodes.push(hex[vtk_vertex(i / order, j / order, k / order)]);
                            continue;
                        }
                        // Q2 mid-entity node: keyed by the mesh vertices of its edge, face or cell.
                        let choices = |c: usize| if c == 1 { vec![0, 1] } else { vec![c / 2] };
                        let mut key = Vec::new();
                        for a in choices(i) {
                            for b in choices(j) {
                                for c in choices(k) {
                                    key.push(hex[vtk_vertex(a, b, c)]);
                                }
                            }
                        }
                        key.sort_unstable();
                        let id = *entity.entry(key).or_insert_with(|| {
                            let xi = lex.map(|c| c as f64 - 1.0);
                            node_coords.push(mesh.map_point(h, xi));
                            node_coords.len() - 1
                        });
                        nodes.push(id);
                    }
                }
            }
            elem_nodes.push(nodes);
        }
        let mut sub_nodes = vec![Vec::new(); partition.n_subdomains];
        for (h, nodes) in elem_nodes.iter().enumerate() {
            sub_nodes[partition.subdomain_of_hex[h]].extend_from_slice(nodes);
        }
        for l in &mut sub_nodes {
            l.sort_unstable();
            l.dedup();
        }
        Ok(Self { order, node_coords, elem_nodes, sub_nodes })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn n_dofs(&self) -> usize {
        BLOCK_SIZE * self.n_nodes()
    }

    pub fn dof(&self, node: usize, comp: usize) -> usize {
        BLOCK_SIZE * node + comp
    }

    pub fn node_coords(&self) -> &[[f64; 3]] {
        &self.node_coords
    }

    pub fn nodes_per_element(&self) -> usize {
        (self.order + 1).pow(3)
    }

    pub fn element_nodes(&self, hex: usize) -> &[usize] {
        &self.elem_nodes[hex]
    }

    pub fn n_subdomains(&self) -> usize {
        self.sub_nodes.len()
    }

    /// Sorted global node ids touched by subdomain `s`.
    pub fn subdomain_nodes(&self, s: usize) -> &[usize] {
        &self.sub_nodes[s]
    }

    /// Global dofs of subdomain `s`; local dof `3·a + c` is component `c` of its `a`-th node.
    pub fn subdomain_dofs(&self, s: usize) -> Vec<usize> {
        self.sub_nodes[s].iter().flat_map(|&n| (0..BLOCK_SIZE).map(move |c| BLOCK_SIZE * n + c)).collect()
    }

    /// Lexicographic local indices of the element nodes lying on local face `face`.
    pub fn face_local_nodes(&self, face: usize) -> Vec<usize> {
        let p = self.order + 1;
        let axis = face / 2;
        let fixed = if face % 2 == 0 { 0 } else { self.order };
        let mut out = Vec::new();
        for k in 0..p {
            for j in 0..p {
                for i in 0..p {
                    if [i, j, k][axis] == fixed {
                        out.push(i + p * j + p * p * k);
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_beam_mesh, partition_structured};

    #[test]
    fn q1_and_q2_node_counts() {
        let m = build_beam_mesh(3, 2, 2).unwrap();
        let p = partition_structured(&m, 1, 1, 1).unwrap();
        let q1 = DofMap::new(&m, &p, 1).unwrap();
        assert_eq!(q1.n_nodes(), 4 * 3 * 3);
        let q2 = DofMap::new(&m, &p, 2).unwrap();
        assert_eq!(q2.n_nodes(), 7 * 5 * 5);
        assert_eq!(q2.n_dofs(), 3 * 175);
        assert_eq!(q2.nodes_per_element(), 27);
        // Q2 node coordinates on the uniform grid are the half-spacing lattice.
        for x in q2.node_coords() {
            for (d, h) in [(0, 10.0 / 6.0), (1, 0.25), (2, 0.25)] {
                let r = x[d] / h;
                assert!((r - r.round()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn strided_layout_and_local_maps() {
        let m = build_beam_mesh(4, 2, 2).unwrap();
        let p = partition_structured(&m, 2, 1, 1).unwrap();
        let d = DofMap::new(&m, &p, 1).unwrap();
        assert_eq!(d.dof(5, 2), 17);
        for s in 0..2 {
            let dofs = d.subdomain_dofs(s);
            let mut u = dofs.clone();
            u.sort_unstable();
            u.dedup();
            assert_eq!(u.len(), dofs.len());
            for chunk in dofs.chunks(3) {
                assert_eq!(chunk[0] % 3, 0);
                assert_eq!(chunk[1], chunk[0] + 1);
                assert_eq!(chunk[2], chunk[0] + 2);
            }
        }
    }

    #[test]
    fn face_nodes() {
        let m = build_beam_mesh(1, 1, 1).unwrap();
        let p = partition_structured(&m, 1, 1, 1).unwrap();
        let d = DofMap::new(&m, &p, 2).unwrap();
        assert_eq!(d.face_local_nodes(4), (0..9).collect::<Vec<_>>());
        assert_eq!(d.face_local_nodes(1).len(), 9);
        for l in d.face_local_nodes(1) {
            assert!((d.node_coords()[d.element_nodes(0)[l]][0] - 10.0).abs() < 1e-12);
        }
    }
}
