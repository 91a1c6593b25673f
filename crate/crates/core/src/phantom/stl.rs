//! STL reading (binary and ASCII) into a welded triangle mesh.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Builds a mesh from a triangle soup, welding vertices with bit-identical coordinates.
    pub fn from_soup(soup: &[[Vec3; 3]]) -> Self {
        let mut index: HashMap<[u64; 3], u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::with_capacity(soup.len());
        for tri in soup {
            let mut ids = [0u32; 3];
            for (slot, v) in ids.iter_mut().zip(tri) {
                // +0.0 and -0.0 weld together.
                let key = [(v.x + 0.0).to_bits(), (v.y + 0.0).to_bits(), (v.z + 0.0).to_bits()];
                *slot = *index.entry(key).or_insert_with(|| {
                    vertices.push(*v);
                    (vertices.len() - 1) as u32
                });
            }
            triangles.push(ids);
        }
        TriMesh {
            vertices,
            triangles,
        }
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let t = self.triangles[i];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    pub fn soup(&self) -> Vec<[Vec3; 3]> {
        (0..self.triangles.len()).map(|i| self.triangle(i)).collect()
    }

    /// Number of undirected edges not shared by exactly two triangles.
    pub fn open_edge_count(&self) -> usize {
        let mut uses: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                *uses.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        uses.values().filter(|&&n| n != 2).count()
    }

    pub fn is_watertight(&self) -> bool {
        !self.triangles.is_empty() && self.open_edge_count() == 0
    }
}

pub fn load_stl(path: &Path) -> Result<TriMesh> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_stl(&bytes)
}

pub fn parse_stl(bytes: &[u8]) -> Result<TriMesh> {
    let looks_ascii = bytes.len() >= 5 && bytes[..5].eq_ignore_ascii_case(b"solid");
    let binary_size_matches = bytes.len() >= 84 && {
        let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as u64;
        84 + 50 * n == bytes.len() as u64
    };
    let soup = if looks_ascii && !binary_size_matches {
        parse_ascii(bytes)?
    } else {
        parse_binary(bytes)?
    };
    Ok(TriMesh::from_soup(&soup))
}

fn parse_binary(bytes: &[u8]) -> Result<Vec<[Vec3; 3]>> {
    if bytes.len() < 84 {
        return Err(Error::Parse {
            offset: bytes.len() as u64,
            message: format!("binary STL header needs 84 bytes, file has {}", bytes.len()),
        });
    }
    let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let mut soup = Vec::with_capacity(n);
    for i in 0..n {
        let off = 84 + 50 * i;
        if off + 50 > bytes.len() {
            return Err(Error::Parse {
                offset: off as u64,
                message: format!("truncated binary STL: triangle record {i} of {n} is missing"),
            });
        }
        let f = |k: usize| {
            let at = off + 12 + 4 * k;
            f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64
        };
        let tri = [
            Vec3::new(f(0), f(1), f(2)),
            Vec3::new(f(3), f(4), f(5)),
            Vec3::new(f(6), f(7), f(8)),
        ];
        if tri.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Parse {
                offset: off as u64,
                message: format!("non-finite vertex in triangle record {i}"),
            });
        }
        soup.push(tri);
    }
    Ok(soup)
}

fn parse_ascii(bytes: &[u8]) -> Result<Vec<[Vec3; 3]>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        offset: e.valid_up_to() as u64,
        message: "ASCII STL is not valid UTF-8".into(),
    })?;
    let mut soup = Vec::new();
    let mut pending: Vec<Vec3> = Vec::with_capacity(3);
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("vertex") => {
                let coords: Vec<f64> = tokens
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Parse {
                        offset,
                        message: format!("bad vertex line {:?}", line.trim()),
                    })?;
                if coords.len() != 3 {
                    return Err(Error::Parse {
                        offset,
                        message: format!("vertex needs 3 coordinates: {:?}", line.trim()),
                    });
                }
                pending.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("endloop") => {
                if pending.len() != 3 {
                    return Err(Error::Parse {
                        offset,
                        message: format!(
                            "facet {} has {} vertices, expected 3",
                            soup.len(),
                            pending.len()
                        ),
                    });
                }
                soup.push([pending[0], pending[1], pending[2]]);
                pending.clear();
            }
            _ => {}
        }
        offset += line.len() as u64;
    }
    if !pending.is_empty() {
        return Err(Error::Parse {
            offset,
            message: "unterminated facet at end of file".into(),
        });
    }
    Ok(soup)
}

pub fn write_stl_binary(path: &Path, soup: &[[Vec3; 3]]) -> Result<()> {
    let mut buf = Vec::with_capacity(84 + 50 * soup.len());
    let mut header = [0u8; 80];
    header[..14].copy_from_slice(b"meshseed solid");
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(soup.len() as u32).to_le_bytes());
    for t in soup {
        let n = (t[1] - t[0]).cross(&(t[2] - t[0])).try_normalize(0.0).unwrap_or_default();
        for v in std::iter::once(&n).chain(t.iter()) {
            for c in v.iter() {
                buf.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        buf.extend_from_slice(&[0, 0]);
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_stl_ascii(path: &Path, soup: &[[Vec3; 3]]) -> Result<()> {
    let mut out = Vec::new();
    let io = |e| Error::io(path, e);
    writeln!(out, "solid meshseed").map_err(io)?;
    for t in soup {
        let n = (t[1] - t[0]).cross(&(t[2] - t[0])).try_normalize(0.0).unwrap_or_default();
        writeln!(out, "  facet normal {} {} {}", n.x, n.y, n.z).map_err(io)?;
        writeln!(out, "    outer loop").map_err(io)?;
        for v in t {
            writeln!(out, "      vertex {} {} {}", v.x, v.y, v.z).map_err(io)?;
        }
        writeln!(out, "    endloop").map_err(io)?;
        writeln!(out, "  endfacet").map_err(io)?;
    }
    writeln!(out, "endsolid meshseed").map_err(io)?;
    std::fs::write(path, out).map_err(io)
}

/// Outward-facing closed cube `[lo, hi]^3` as 12 triangles.
pub fn cube_soup(lo: f64, hi: f64) -> Vec<[Vec3; 3]> {
    let c = |x: usize, y: usize, z: usize| {
        Vec3::new(
            if x == 1 { hi } else { lo },
            if y == 1 { hi } else { lo },
            if z == 1 { hi } else { lo },
        )
    };
    // Each face as a CCW quad seen from outside.
    let quads = [
        [c(0, 0, 0), c(0, 1, 0), c(1, 1, 0), c(1, 0, 0)], // z = lo
        [c(0, 0, 1), c(1, 0, 1), c(1, 1, 1), c(0, 1, 1)], // z = hi
        [c(0, 0, 0), c(1, 0, 0), c(1, 0, 1), c(0, 0, 1)], // y = lo
        [c(0, 1, 0), c(0, 1, 1), c(1, 1, 1), c(1, 1, 0)], // y = hi
        [c(0, 0, 0), c(0, 0, 1), c(0, 1, 1), c(0, 1, 0)], // x = lo
        [c(1, 0, 0), c(1, 1, 0), c(1, 1, 1), c(1, 0, 1)], // x = hi
    ];
    quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect()
}

/// Subdivided icosahedron: 20·4^level outward-facing triangles.
pub fn icosphere_soup(center: Vec3, radius: f64, level: u32) -> Vec<[Vec3; 3]> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let ab = mid(f[0], f[1], &mut verts);
            let bc = mid(f[1], f[2], &mut verts);
            let ca = mid(f[2], f[0], &mut verts);
            next.extend([[f[0], ab, ca], [f[1], bc, ab], [f[2], ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    faces
        .iter()
        .map(|f| [0, 1, 2].map(|i| center + verts[f[i]] * radius))
        .collect()
}
