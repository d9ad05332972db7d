use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use super::{bbox_diagonal, HexMesh, MeshError};

#[derive(Debug, Clone, Serialize)]
pub struct Partition {
    pub subdomain_of_hex: Vec<usize>,
    pub n_subdomains: usize,
    /// Largest subdomain bounding-box diagonal.
    pub h_max: f64,
    /// Largest element bounding-box diagonal.
    pub h: f64,
}

impl Partition {
    pub fn from_assignment(mesh: &HexMesh, subdomain_of_hex: Vec<usize>, n_subdomains: usize) -> Result<Self, MeshError> {
        if subdomain_of_hex.len() != mesh.n_hexes() {
            return Err(MeshError::Partition(format!(
                "{} assignments for {} hexes",
                subdomain_of_hex.len(),
                mesh.n_hexes()
            )));
        }
        let mut count = vec![0usize; n_subdomains];
        for &s in &subdomain_of_hex {
            if s >= n_subdomains {
                return Err(MeshError::Partition(format!("subdomain id {s} out of range")));
            }
            count[s] += 1;
        }
        if let Some(s) = count.iter().position(|&c| c == 0) {
            return Err(MeshError::Partition(format!("subdomain {s} is empty")));
        }
        let h_max = (0..n_subdomains)
            .map(|s| {
                bbox_diagonal(
                    (0..mesh.n_hexes())
                        .filter(|&h| subdomain_of_hex[h] == s)
                        .flat_map(|h| mesh.hexes[h].iter().map(|&n| mesh.nodes[n])),
                )
            })
            .fold(0.0, f64::max);
        Ok(Self { subdomain_of_hex, n_subdomains, h_max, h: mesh.max_element_diameter() })
    }

    pub fn hexes_of(&self, s: usize) -> Vec<usize> {
        (0..self.subdomain_of_hex.len()).filter(|&h| self.subdomain_of_hex[h] == s).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_subdomains];
        for &s in &self.subdomain_of_hex {
            c[s] += 1;
        }
        c
    }

    /// Number of face-connected components of each subdomain.
    pub fn component_counts(&self, mesh: &HexMesh) -> Vec<usize> {
        let nb = mesh.hex_neighbors();
        components(&self.subdomain_of_hex, self.n_subdomains, &nb).iter().map(|c| c.len()).collect()
    }
}

/// Box partition of a structured grid into px·py·pz blocks.
pub fn partition_structured(mesh: &HexMesh, px: usize, py: usize, pz: usize) -> Result<Partition, MeshError> {
    let [nx, ny, nz] = mesh.grid.ok_or(MeshError::NotStructured)?;
    if px == 0 || py == 0 || pz == 0 || nx % px != 0 || ny % py != 0 || nz % pz != 0 {
        return Err(MeshError::NonDivisible { px, py, pz, nx, ny, nz });
    }
    let (bx, by, bz) = (nx / px, ny / py, nz / pz);
    let mut sub = Vec::with_capacity(mesh.n_hexes());
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                sub.push(i / bx + px * (j / by + py * (k / bz)));
            }
        }
    }
    Partition::from_assignment(mesh, sub, px * py * pz)
}

/// Recursive coordinate bisection on hex centroids followed by a pass that
/// moves stray components to the face-neighboring subdomain they touch most.
pub fn partition_rcb(mesh: &HexMesh, n_subdomains: usize) -> Result<Partition, MeshError> {
    if n_subdomains == 0 || n_subdomains > mesh.n_hexes() {
        return Err(MeshError::Partition(format!(
            "cannot split {} hexes into {n_subdomains} subdomains",
            mesh.n_hexes()
        )));
    }
    let centroids: Vec<[f64; 3]> = (0..mesh.n_hexes()).map(|h| mesh.hex_centroid(h)).collect();
    let mut sub = vec![0usize; mesh.n_hexes()];
    let ids: Vec<usize> = (0..mesh.n_hexes()).collect();
    bisect(&centroids, ids, n_subdomains, 0, &mut sub);
    let nb = mesh.hex_neighbors();
    repair_connectivity(&mut sub, n_subdomains, &nb);
    Partition::from_assignment(mesh, sub, n_subdomains)
}

pub(crate) fn bisect(centroids: &[[f64; 3]], mut ids: Vec<usize>, n: usize, first: usize, sub: &mut [usize]) {
    if n == 1 {
        for &h in &ids {
            sub[h] = first;
        }
        return;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &h in &ids {
        for d in 0..3 {
            lo[d] = lo[d].min(centroids[h][d]);
            hi[d] = hi[d].max(centroids[h][d]);
        }
    }
    let axis = (0..3).fold(0, |best, d| if hi[d] - lo[d] > hi[best] - lo[best] { d } else { best });
    ids.sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
    let n_left = n / 2;
    let k = ((ids.len() * n_left) as f64 / n as f64).round() as usize;
    let k = k.clamp(n_left, ids.len() - (n - n_left));
    let right = ids.split_off(k);
    bisect(centroids, ids, n_left, first, sub);
    bisect(centroids, right, n - n_left, first + n_left, sub);
}

fn components(sub: &[usize], n: usize, nb: &[Vec<usize>]) -> Vec<Vec<Vec<usize>>> {
    let mut seen = vec![false; sub.len()];
    let mut out = vec![Vec::new(); n];
    for h0 in 0..sub.len() {
        if seen[h0] {
            continue;
        }
        let s = sub[h0];
        let mut comp = vec![h0];
        seen[h0] = true;
        let mut queue = VecDeque::from([h0]);
        while let Some(h) = queue.pop_front() {
            for &g in &nb[h] {
                if !seen[g] && sub[g] == s {
                    seen[g] = true;
                    comp.push(g);
                    queue.push_back(g);
                }
            }
        }
        comp.sort_unstable();
        out[s].push(comp);
    }
    out
}

pub(crate) fn repair_connectivity(sub: &mut [usize], n: usize, nb: &[Vec<usize>]) {
    for _ in 0..n.max(4) * 4 {
        let comps = components(sub, n, nb);
        let mut changed = false;
        for (s, mut list) in comps.into_iter().enumerate() {
            if list.len() <= 1 {
                continue;
            }
            list.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
            for comp in &list[1..] {
                let mut touch: BTreeMap<usize, usize> = BTreeMap::new();
                for &h in comp {
                    for &g in &nb[h] {
                        if sub[g] != s {
                            *touch.entry(sub[g]).or_default() += 1;
                        }
                    }
                }
                if let Some((&target, _)) = touch.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) {
                    for &h in comp {
                        sub[h] = target;
                    }
                    changed = true;
                }
            }
        }
        if !changed {
            return;
        }
    }
}
