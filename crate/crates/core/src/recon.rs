//! Iterative reconstruction on a tetrahedral mesh.
//!
//! Each cell carries one attenuation value. A ray's system-matrix row is the
//! list of chord lengths through the cells it crosses, found by entering the
//! hull and walking face to face. SART then updates the cell values one view
//! at a time.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvh::TriangleBvh;
use crate::delaunay::{predicates::orient3d, TetMesh, HULL};
use crate::geometry::{AcquisitionGeometry, Ray};
use crate::image::Image;
use crate::phantom::ProjectionSet;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chord {
    pub cell: u32,
    /// Length of the ray inside the cell (mm).
    pub length: f64,
}

#[derive(Debug, Clone, Copy)]
struct Plane {
    /// Outward (unnormalized) normal.
    normal: Vec3,
    offset: f64,
}

/// Ray/mesh intersection engine. Face planes are computed from the face's
/// vertices in ascending index order, so the two tets sharing a face see
/// exactly negated planes and agree bit for bit on where a ray crosses it.
pub struct MeshProjector<'m> {
    mesh: &'m TetMesh,
    planes: Vec<[Plane; 4]>,
    hull: TriangleBvh,
    hull_faces: Vec<(u32, u8)>,
}

impl<'m> MeshProjector<'m> {
    pub fn new(mesh: &'m TetMesh) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::MeshIntegrity("cannot project through an empty mesh".into()));
        }
        let planes = (0..mesh.len())
            .map(|t| {
                std::array::from_fn(|f| {
                    let mut ids = mesh.face(t, f);
                    ids.sort_unstable();
                    let [a, b, c] = ids.map(|v| mesh.vertices[v as usize]);
                    let normal = (b - a).cross(&(c - a));
                    let offset = normal.dot(&a);
                    let opposite = mesh.vertices[mesh.tets[t][f] as usize];
                    if normal.dot(&opposite) - offset > 0.0 {
                        Plane { normal: -normal, offset: -offset }
                    } else {
                        Plane { normal, offset }
                    }
                })
            })
            .collect();
        let hull_faces: Vec<(u32, u8)> = mesh.hull_faces().into_iter().map(|(t, f)| (t as u32, f as u8)).collect();
        let triangles = hull_faces
            .iter()
            .map(|&(t, f)| mesh.face(t as usize, f as usize).map(|v| mesh.vertices[v as usize]))
            .collect();
        Ok(MeshProjector { mesh, planes, hull: TriangleBvh::build(triangles), hull_faces })
    }

    pub fn mesh(&self) -> &TetMesh {
        self.mesh
    }

    fn crossing(&self, t: usize, f: usize, ray: &Ray) -> (f64, f64) {
        let p = &self.planes[t][f];
        let nd = p.normal.dot(&ray.direction);
        ((p.offset - p.normal.dot(&ray.origin)) / nd, nd)
    }

    fn locate(&self, p: &Vec3) -> Option<usize> {
        let mesh = self.mesh;
        let mut t = 0usize;
        'walk: for _ in 0..mesh.len() + 4 {
            for f in 0..4 {
                let [a, b, c] = mesh.face(t, f).map(|v| mesh.vertices[v as usize]);
                if orient3d(&a, &b, &c, p) < 0 {
                    let n = mesh.neighbors[t][f];
                    if n == HULL {
                        return None;
                    }
                    t = n as usize;
                    continue 'walk;
                }
            }
            return Some(t);
        }
        (0..mesh.len()).find(|&t| {
            (0..4).all(|f| {
                let [a, b, c] = mesh.face(t, f).map(|v| mesh.vertices[v as usize]);
                orient3d(&a, &b, &c, p) >= 0
            })
        })
    }

    /// Where the ray (t ≥ 0) first enters the mesh: `(t, tet)`.
    fn entry(&self, ray: &Ray) -> Option<(f64, usize)> {
        for c in self.hull.crossings(ray, 0.0) {
            let (t, f) = self.hull_faces[c.triangle];
            let (tf, nd) = self.crossing(t as usize, f as usize, ray);
            if nd < 0.0 {
                return Some((tf.max(0.0), t as usize));
            }
            if nd > 0.0 {
                // Leaving before entering: the origin is inside the hull.
                return self.locate(&ray.origin).map(|t| (0.0, t));
            }
        }
        None
    }

    /// Chords of the ray through every cell it crosses, in order along the ray.
    pub fn chords_into(&self, ray: &Ray, out: &mut Vec<Chord>) -> Result<()> {
        out.clear();
        let Some((mut t_cur, mut tet)) = self.entry(ray) else {
            return Ok(());
        };
        for _ in 0..=self.mesh.len() + 1 {
            let mut exit = None;
            let mut t_exit = f64::INFINITY;
            for f in 0..4 {
                let (tf, nd) = self.crossing(tet, f, ray);
                if nd > 0.0 && tf < t_exit {
                    t_exit = tf;
                    exit = Some(f);
                }
            }
            let Some(f) = exit else {
                return Err(Error::MeshIntegrity(format!("ray has no exit face in tet {tet}")));
            };
            let t_exit = t_exit.max(t_cur);
            if t_exit > t_cur {
                out.push(Chord { cell: tet as u32, length: t_exit - t_cur });
            }
            let next = self.mesh.neighbors[tet][f];
            if next == HULL {
                return Ok(());
            }
            let next = next as usize;
            if !self.mesh.neighbors[next].contains(&(tet as u32)) {
                return Err(Error::MeshIntegrity(format!("tets {tet} and {next} disagree on adjacency")));
            }
            tet = next;
            t_cur = t_exit;
        }
        Err(Error::MeshIntegrity("ray walk did not terminate".into()))
    }

    pub fn chords(&self, ray: &Ray) -> Result<Vec<Chord>> {
        let mut out = Vec::new();
        self.chords_into(ray, &mut out)?;
        Ok(out)
    }
}

fn check_field(mesh: &TetMesh, values: &[f64]) -> Result<()> {
    if values.len() != mesh.len() {
        return Err(Error::InputValidation(format!("{} cell values for {} cells", values.len(), mesh.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InputValidation("cell values must be finite".into()));
    }
    Ok(())
}

/// Runs `per_row` over the detector rows in parallel, returning
/// the results in row order.
fn per_detector_row<T: Send>(
    geom: &AcquisitionGeometry,
    per_row: impl Fn(usize, &mut Vec<Chord>) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let (_, nv) = geom.detector_pixels;
    (0..nv)
        .into_par_iter()
        .map_init(Vec::new, |buf, v| per_row(v, buf))
        .collect()
}

/// Line integrals of the piecewise-constant field for every pixel of every view.
pub fn forward_project(projector: &MeshProjector, values: &[f64], geom: &AcquisitionGeometry) -> Result<ProjectionSet> {
    check_field(projector.mesh, values)?;
    geom.validate()?;
    let (nu, _) = geom.detector_pixels;
    let mut images = Vec::with_capacity(geom.num_projections);
    for k in 0..geom.num_projections {
        let rows = per_detector_row(geom, |v, buf| {
            (0..nu)
                .map(|u| {
                    projector.chords_into(&geom.ray_for_pixel(k, u, v)?, buf)?;
                    Ok(buf.iter().map(|c| c.length * values[c.cell as usize]).sum())
                })
                .collect::<Result<Vec<f64>>>()
        })?;
        let (nu, nv) = geom.detector_pixels;
        images.push(Image::from_vec(nu, nv, rows.concat()));
    }
    Ok(ProjectionSet { geometry: geom.clone(), images })
}

/// Transpose of [`forward_project`]: spreads each pixel value back along its
/// chords.
pub fn back_project(projector: &MeshProjector, data: &ProjectionSet) -> Result<Vec<f64>> {
    data.validate()?;
    let geom = &data.geometry;
    let (nu, _) = geom.detector_pixels;
    let mut out = vec![0.0; projector.mesh.len()];
    for (k, img) in data.images.iter().enumerate() {
        let rows = per_detector_row(geom, |v, buf| {
            let mut contrib = Vec::new();
            for u in 0..nu {
                projector.chords_into(&geom.ray_for_pixel(k, u, v)?, buf)?;
                let y = img.get(u, v);
                contrib.extend(buf.iter().map(|c| (c.cell, c.length * y)));
            }
            Ok(contrib)
        })?;
        for (cell, w) in rows.into_iter().flatten() {
            out[cell as usize] += w;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SartParams {
    /// Relaxation factor in (0, 2).
    pub relax: f64,
    pub sweeps: usize,
    /// Starting value of every cell (1/mm).
    pub init: f64,
    pub nonnegative: bool,
    /// Compute the full projection residual after every sweep.
    pub track_residual: bool,
}

impl Default for SartParams {
    fn default() -> Self {
        SartParams { relax: 0.3, sweeps: 20, init: 0.0, nonnegative: true, track_residual: true }
    }
}

impl SartParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.relax > 0.0 && self.relax < 2.0) {
            return Err(Error::Config(format!("relax must lie in (0, 2), got {}", self.relax)));
        }
        if !self.init.is_finite() {
            return Err(Error::Config("init must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SartResult {
    pub values: Vec<f64>,
    /// Cells crossed by at least one ray; the rest keep the initial value.
    pub touched: Vec<bool>,
    /// Sum of squared projection residuals: entry 0 before the first sweep,
    /// entry `s` after sweep `s`. Empty when tracking is off.
    pub residuals: Vec<f64>,
}

impl SartResult {
    pub fn untouched_count(&self) -> usize {
        self.touched.iter().filter(|t| !**t).count()
    }

    pub fn write_residual_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("sweep,residual_sum_sq\n");
        for (i, r) in self.residuals.iter().enumerate() {
            let _ = writeln!(s, "{i},{r}");
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Sum of squared differences between measured data and the field's projections.
pub fn residual_sum_sq(projector: &MeshProjector, values: &[f64], data: &ProjectionSet) -> Result<f64> {
    let model = forward_project(projector, values, &data.geometry)?;
    Ok(model
        .images
        .iter()
        .zip(&data.images)
        .map(|(m, d)| m.data.iter().zip(&d.data).map(|(a, b)| (b - a) * (b - a)).sum::<f64>())
        .sum())
}

/// SART with one sub-iteration per view in cyclic order.
pub fn sart_reconstruct(projector: &MeshProjector, data: &ProjectionSet, params: &SartParams) -> Result<SartResult> {
    params.validate()?;
    data.validate()?;
    let geom = &data.geometry;
    let n = projector.mesh.len();
    let (nu, _) = geom.detector_pixels;
    let mut x = vec![params.init; n];
    let mut touched = vec![false; n];
    let mut residuals = Vec::new();
    if params.track_residual {
        residuals.push(residual_sum_sq(projector, &x, data)?);
    }
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for sweep in 0..params.sweeps {
        for (k, img) in data.images.iter().enumerate() {
            let xr = &x;
            let rows = per_detector_row(geom, |v, buf| {
                let mut contrib: Vec<(u32, f64, f64)> = Vec::new();
                for u in 0..nu {
                    projector.chords_into(&geom.ray_for_pixel(k, u, v)?, buf)?;
                    let row_sum: f64 = buf.iter().map(|c| c.length).sum();
                    if row_sum <= 0.0 {
                        continue;
                    }
                    let model: f64 = buf.iter().map(|c| c.length * xr[c.cell as usize]).sum();
                    let w = (img.get(u, v) - model) / row_sum;
                    contrib.extend(buf.iter().map(|c| (c.cell, c.length * w, c.length)));
                }
                Ok(contrib)
            })?;
            num.fill(0.0);
            den.fill(0.0);
            for (cell, a_w, a) in rows.into_iter().flatten() {
                num[cell as usize] += a_w;
                den[cell as usize] += a;
            }
            for j in 0..n {
                if den[j] > 0.0 {
                    touched[j] = true;
                    x[j] += params.relax * num[j] / den[j];
                    if params.nonnegative && x[j] < 0.0 {
                        x[j] = 0.0;
                    }
                }
            }
        }
        if params.track_residual {
            let r = residual_sum_sq(projector, &x, data)?;
            info!("sweep {}: residual {r:e}", sweep + 1);
            residuals.push(r);
        }
    }
    let result = SartResult { values: x, touched, residuals };
    let untouched = result.untouched_count();
    if untouched > 0 {
        warn!("{untouched} cells were not crossed by any ray and keep their initial value");
    }
    Ok(result)
}
