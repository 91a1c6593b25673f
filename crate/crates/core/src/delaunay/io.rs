//! Mesh export and import: legacy ASCII VTK unstructured grids and Medit `.mesh`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::TetMesh;
use crate::{Error, Result, Vec3};

const VTK_TETRA: u32 = 10;

/// Named per-cell scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub name: String,
    pub values: Vec<f64>,
}

pub fn vtk_string(mesh: &TetMesh, fields: &[CellField]) -> Result<String> {
    for f in fields {
        if f.values.len() != mesh.len() {
            return Err(Error::InputValidation(format!(
                "cell field {} has {} values for {} cells",
                f.name,
                f.values.len(),
                mesh.len()
            )));
        }
        if f.name.is_empty() || f.name.contains(char::is_whitespace) {
            return Err(Error::InputValidation(format!("bad field name {:?}", f.name)));
        }
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nmeshseed tetrahedral mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.vertices.len());
    for p in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    let _ = writeln!(s, "CELLS {} {}", mesh.len(), 5 * mesh.len());
    for t in &mesh.tets {
        let _ = writeln!(s, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.len());
    for _ in &mesh.tets {
        let _ = writeln!(s, "{VTK_TETRA}");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "CELL_DATA {}", mesh.len());
        for f in fields {
            let _ = writeln!(s, "SCALARS {} double 1\nLOOKUP_TABLE default", f.name);
            for v in &f.values {
                let _ = writeln!(s, "{v}");
            }
        }
    }
    Ok(s)
}

pub fn write_vtk(path: &Path, mesh: &TetMesh, fields: &[CellField]) -> Result<()> {
    fs::write(path, vtk_string(mesh, fields)?).map_err(|e| Error::io(path, e))
}

struct Tokens<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Tokens { text, pos: 0 }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { offset: self.pos as u64, message: message.into() }
    }

    fn next(&mut self) -> Option<&'a str> {
        let rest = &self.text[self.pos..];
        let start = rest.find(|c: char| !c.is_whitespace())?;
        let len = rest[start..].find(char::is_whitespace).unwrap_or(rest.len() - start);
        self.pos += start + len;
        Some(&rest[start..start + len])
    }

    fn skip_line(&mut self) {
        match self.text[self.pos..].find('\n') {
            Some(n) => self.pos += n + 1,
            None => self.pos = self.text.len(),
        }
    }

    fn line(&mut self) -> &'a str {
        let rest = &self.text[self.pos..];
        let end = rest.find('\n').unwrap_or(rest.len());
        self.pos += (end + 1).min(rest.len());
        rest[..end].trim_end_matches('\r')
    }

    fn word(&mut self, what: &str) -> Result<&'a str> {
        self.next().ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }

    fn expect(&mut self, keyword: &str) -> Result<()> {
        let w = self.word(keyword)?;
        if w.eq_ignore_ascii_case(keyword) {
            Ok(())
        } else {
            Err(self.err(format!("expected {keyword}, found {w}")))
        }
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let w = self.word(what)?;
        w.parse().map_err(|_| self.err(format!("bad {what}: {w}")))
    }
}

pub fn parse_vtk(text: &str) -> Result<(TetMesh, Vec<CellField>)> {
    let mut tok = Tokens::new(text);
    if !tok.line().starts_with("# vtk DataFile") {
        return Err(tok.err("missing VTK header"));
    }
    tok.line();
    tok.expect("ASCII")?;
    tok.expect("DATASET")?;
    tok.expect("UNSTRUCTURED_GRID")?;
    tok.expect("POINTS")?;
    let n: usize = tok.parse("point count")?;
    tok.word("point type")?;
    let mut vertices = Vec::with_capacity(n);
    for _ in 0..n {
        vertices.push(Vec3::new(tok.parse("x")?, tok.parse("y")?, tok.parse("z")?));
    }
    tok.expect("CELLS")?;
    let m: usize = tok.parse("cell count")?;
    let _size: usize = tok.parse("cell list size")?;
    let mut tets = Vec::with_capacity(m);
    for _ in 0..m {
        let k: usize = tok.parse("cell size")?;
        if k != 4 {
            return Err(tok.err(format!("only tetrahedral cells are supported, found a {k}-vertex cell")));
        }
        tets.push([tok.parse("index")?, tok.parse("index")?, tok.parse("index")?, tok.parse("index")?]);
    }
    tok.expect("CELL_TYPES")?;
    let mt: usize = tok.parse("cell type count")?;
    if mt != m {
        return Err(tok.err("cell type count differs from cell count"));
    }
    for _ in 0..m {
        let ty: u32 = tok.parse("cell type")?;
        if ty != VTK_TETRA {
            return Err(tok.err(format!("unsupported cell type {ty}")));
        }
    }
    let mut fields = Vec::new();
    while let Some(w) = tok.next() {
        match w {
            "CELL_DATA" => {
                let c: usize = tok.parse("cell data count")?;
                if c != m {
                    return Err(tok.err("cell data count differs from cell count"));
                }
            }
            "SCALARS" => {
                let name = tok.word("field name")?.to_string();
                tok.word("data type")?;
                let rest = tok.line().trim();
                if !rest.is_empty() && rest != "1" {
                    return Err(tok.err("only single-component scalars are supported"));
                }
                tok.expect("LOOKUP_TABLE")?;
                tok.word("table name")?;
                let values = (0..m).map(|_| tok.parse("scalar")).collect::<Result<Vec<f64>>>()?;
                fields.push(CellField { name, values });
            }
            other => return Err(tok.err(format!("unsupported section {other}"))),
        }
    }
    Ok((TetMesh::from_tets(vertices, tets)?, fields))
}

pub fn read_vtk(path: &Path) -> Result<(TetMesh, Vec<CellField>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vtk(&text).map_err(|e| e.context(path.display().to_string()))
}

pub fn medit_string(mesh: &TetMesh) -> String {
    let mut s = String::new();
    s.push_str("MeshVersionFormatted 2\nDimension 3\n");
    let _ = writeln!(s, "Vertices\n{}", mesh.vertices.len());
    for p in &mesh.vertices {
        let _ = writeln!(s, "{} {} {} 0", p.x, p.y, p.z);
    }
    let _ = writeln!(s, "Tetrahedra\n{}", mesh.len());
    for t in &mesh.tets {
        let _ = writeln!(s, "{} {} {} {} 0", t[0] + 1, t[1] + 1, t[2] + 1, t[3] + 1);
    }
    s.push_str("End\n");
    s
}

pub fn write_medit(path: &Path, mesh: &TetMesh) -> Result<()> {
    fs::write(path, medit_string(mesh)).map_err(|e| Error::io(path, e))
}

pub fn parse_medit(text: &str) -> Result<TetMesh> {
    let mut tok = Tokens::new(text);
    let mut vertices = Vec::new();
    let mut tets = Vec::new();
    while let Some(w) = tok.next() {
        if w.starts_with('#') {
            tok.skip_line();
            continue;
        }
        match w {
            "MeshVersionFormatted" => {
                tok.word("version")?;
            }
            "Dimension" => {
                let d: u32 = tok.parse("dimension")?;
                if d != 3 {
                    return Err(tok.err(format!("only 3D meshes are supported, got dimension {d}")));
                }
            }
            "Vertices" => {
                let n: usize = tok.parse("vertex count")?;
                for _ in 0..n {
                    vertices.push(Vec3::new(tok.parse("x")?, tok.parse("y")?, tok.parse("z")?));
                    tok.word("vertex reference")?;
                }
            }
            "Tetrahedra" => {
                let n: usize = tok.parse("tetrahedron count")?;
                for _ in 0..n {
                    let mut t = [0u32; 4];
                    for v in t.iter_mut() {
                        let one_based: u32 = tok.parse("vertex index")?;
                        if one_based == 0 {
                            return Err(tok.err("vertex indices are 1-based"));
                        }
                        *v = one_based - 1;
                    }
                    tok.word("tetrahedron reference")?;
                    tets.push(t);
                }
            }
            "Edges" | "Triangles" | "Quadrilaterals" => {
                let per = match w {
                    "Edges" => 3,
                    "Triangles" => 4,
                    _ => 5,
                };
                let n: usize = tok.parse("element count")?;
                for _ in 0..n * per {
                    tok.word("element entry")?;
                }
            }
            "End" => break,
            other => return Err(tok.err(format!("unsupported keyword {other}"))),
        }
    }
    TetMesh::from_tets(vertices, tets)
}

pub fn read_medit(path: &Path) -> Result<TetMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_medit(&text).map_err(|e| e.context(path.display().to_string()))
}

/// Reads either format, chosen by file extension (`.vtk` or `.mesh`).
pub fn read_mesh(path: &Path) -> Result<(TetMesh, Vec<CellField>)> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("vtk") => read_vtk(path),
        Some("mesh") => Ok((read_medit(path)?, Vec::new())),
        _ => Err(Error::InputValidation(format!("unknown mesh format: {}", path.display()))),
    }
}
