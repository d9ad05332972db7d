//! Plain-text mesh format:
//!
//! ```text
//! cardiomech-hexmesh 1
//! grid <nx> <ny> <nz> | grid none
//! nodes <N>
//! x y z fx fy fz sx sy sz nx ny nz      (N lines)
//! hexes <M>
//! v0 .. v7                              (M lines)
//! faces <K>
//! hex local_face tag                    (K lines)
//! ```

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::{BoundaryFace, HexMesh, MeshError, Region};
use crate::constitutive::FiberFrame;

const MAGIC: &str = "cardiomech-hexmesh";
const VERSION: u32 = 1;

pub fn write_mesh(mesh: &HexMesh, path: &Path) -> Result<(), MeshError> {
    let io = |source| MeshError::Io { path: path.display().to_string(), source };
    let mut f = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "{MAGIC} {VERSION}").map_err(io)?;
    match mesh.grid {
        Some([a, b, c]) => writeln!(f, "grid {a} {b} {c}"),
        None => writeln!(f, "grid none"),
    }
    .map_err(io)?;
    writeln!(f, "nodes {}", mesh.nodes.len()).map_err(io)?;
    for (x, fr) in mesh.nodes.iter().zip(&mesh.fibers) {
        let vals: Vec<String> = x
            .iter()
            .chain(fr.f.iter())
            .chain(fr.s.iter())
            .chain(fr.n.iter())
            .map(|v| format!("{v:.17e}"))
            .collect();
        writeln!(f, "{}", vals.join(" ")).map_err(io)?;
    }
    writeln!(f, "hexes {}", mesh.hexes.len()).map_err(io)?;
    for h in &mesh.hexes {
        let v: Vec<String> = h.iter().map(|i| i.to_string()).collect();
        writeln!(f, "{}", v.join(" ")).map_err(io)?;
    }
    writeln!(f, "faces {}", mesh.boundary_faces.len()).map_err(io)?;
    for bf in &mesh.boundary_faces {
        writeln!(f, "{} {} {}", bf.hex, bf.local_face, bf.region.as_str()).map_err(io)?;
    }
    f.flush().map_err(io)
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
    path: String,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String, MeshError> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(source)) => Err(MeshError::Io { path: self.path.clone(), source }),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: &str) -> MeshError {
        MeshError::Parse { line: self.line, msg: msg.to_string() }
    }

    fn header(&mut self, key: &str) -> Result<usize, MeshError> {
        let l = self.next()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(self.err(&format!("expected '{key}'")));
        }
        it.next().and_then(|v| v.parse().ok()).ok_or_else(|| self.err("bad count"))
    }

    fn numbers<T: std::str::FromStr>(&mut self, n: usize) -> Result<Vec<T>, MeshError> {
        let l = self.next()?;
        let v: Vec<T> = l.split_whitespace().map(|t| t.parse::<T>()).collect::<Result<_, _>>().map_err(|_| self.err("bad number"))?;
        if v.len() != n {
            return Err(self.err(&format!("expected {n} values")));
        }
        Ok(v)
    }
}

pub fn read_mesh(path: &Path) -> Result<HexMesh, MeshError> {
    let file = std::fs::File::open(path).map_err(|source| MeshError::Io { path: path.display().to_string(), source })?;
    let mut r = Lines { inner: BufReader::new(file).lines(), line: 0, path: path.display().to_string() };
    let head = r.next()?;
    if head.trim() != format!("{MAGIC} {VERSION}") {
        return Err(r.err("unsupported header or version"));
    }
    let g = r.next()?;
    let grid = match g.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["grid", "none"] => None,
        ["grid", a, b, c] => {
            let p = |t: &str| t.parse::<usize>().map_err(|_| r.err("bad grid"));
            Some([p(a)?, p(b)?, p(c)?])
        }
        _ => return Err(r.err("expected grid line")),
    };
    let nn = r.header("nodes")?;
    let mut nodes = Vec::with_capacity(nn);
    let mut fibers = Vec::with_capacity(nn);
    for _ in 0..nn {
        let v: Vec<f64> = r.numbers(12)?;
        nodes.push([v[0], v[1], v[2]]);
        fibers.push(FiberFrame {
            f: Vector3::new(v[3], v[4], v[5]),
            s: Vector3::new(v[6], v[7], v[8]),
            n: Vector3::new(v[9], v[10], v[11]),
        });
    }
    let nh = r.header("hexes")?;
    let mut hexes = Vec::with_capacity(nh);
    for _ in 0..nh {
        let v: Vec<usize> = r.numbers(8)?;
        if v.iter().any(|&i| i >= nn) {
            return Err(r.err("node index out of range"));
        }
        hexes.push([v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]]);
    }
    let nf = r.header("faces")?;
    let mut boundary_faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let l = r.next()?;
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 3 {
            return Err(r.err("expected 'hex face tag'"));
        }
        let hex: usize = t[0].parse().map_err(|_| r.err("bad hex id"))?;
        let local_face: usize = t[1].parse().map_err(|_| r.err("bad face id"))?;
        let region = Region::parse(t[2]).ok_or_else(|| r.err("unknown region tag"))?;
        if hex >= nh || local_face >= 6 {
            return Err(r.err("face reference out of range"));
        }
        boundary_faces.push(BoundaryFace { hex, local_face, region });
    }
    Ok(HexMesh { nodes, hexes, boundary_faces, fibers, grid })
}
