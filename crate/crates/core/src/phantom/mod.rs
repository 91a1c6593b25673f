//! Object models: analytic primitives and STL solids, with exact line
//! integrals for projection simulation and exact boundary distances for
//! cloud-quality evaluation.

mod analytic;
pub mod library;
pub mod stl;

use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use analytic::{euler_zxz_deg, Primitive, Shape, SurfaceDistance};
pub use stl::TriMesh;

use crate::bvh::TriangleBvh;
use crate::error::{Error, Result};
use crate::geometry::{AcquisitionGeometry, Ray};
use crate::image::Image;
use crate::Vec3;

/// A closed triangle mesh of uniform attenuation.
#[derive(Debug, Clone)]
pub struct MeshSolid {
    pub mesh: TriMesh,
    pub attenuation: f64,
    /// False when some edge is not shared by exactly two triangles. Such a
    /// solid may be used for distances but not for projection.
    pub watertight: bool,
    bvh: TriangleBvh,
}

impl MeshSolid {
    pub fn new(mesh: TriMesh, attenuation: f64) -> Self {
        let watertight = mesh.is_watertight();
        if !watertight {
            log::warn!(
                "triangle mesh is not watertight ({} open edges)",
                mesh.open_edge_count()
            );
        }
        let bvh = TriangleBvh::build(mesh.soup());
        MeshSolid {
            mesh,
            attenuation,
            watertight,
            bvh,
        }
    }

    /// Length of the ray inside the closed surface, from sorted crossings.
    pub fn inside_length(&self, ray: &Ray) -> Result<f64> {
        let scale = self.bvh.bounds().diagonal().max(1.0);
        let mut hits = self.bvh.crossings(ray, 0.0);
        // A crossing exactly on a shared edge or vertex is reported once per
        // incident triangle; collapse those.
        hits.dedup_by(|b, a| (b.t - a.t).abs() <= 1e-9 * scale && a.exiting == b.exiting);
        if hits.len() % 2 == 1 {
            // A ray starting inside sees an odd count with an exit first.
            if hits.first().is_some_and(|h| h.exiting) {
                let mut total = hits[0].t;
                for pair in hits[1..].chunks(2) {
                    total += pair[1].t - pair[0].t;
                }
                return Ok(total);
            }
            return Err(Error::GeometryIntegrity(format!(
                "odd number of surface crossings ({}) along ray {:?}",
                hits.len(),
                ray
            )));
        }
        Ok(hits.chunks(2).map(|p| p[1].t - p[0].t).sum())
    }

    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        self.bvh.nearest(p).map(|(d, _)| d).unwrap_or(f64::INFINITY)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        // Parity along +x.
        let Ok(ray) = Ray::new(*p, Vec3::new(1.0, 1e-7, 2e-7)) else {
            return false;
        };
        self.inside_length(&ray).map(|_| {
            let hits = self.bvh.crossings(&ray, 0.0);
            hits.first().is_some_and(|h| h.exiting)
        }).unwrap_or(false)
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub primitives: Vec<Primitive>,
    pub solid: Option<MeshSolid>,
}

impl Phantom {
    pub fn from_primitives(primitives: Vec<Primitive>) -> Result<Self> {
        let p = Phantom {
            primitives,
            solid: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_mesh(mesh: TriMesh, attenuation: f64) -> Result<Self> {
        let p = Phantom {
            primitives: Vec::new(),
            solid: Some(MeshSolid::new(mesh, attenuation)),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_stl(path: &Path, attenuation: f64) -> Result<Self> {
        Phantom::from_mesh(stl::load_stl(path)?, attenuation)
    }

    pub fn validate(&self) -> Result<()> {
        let mesh_empty = self
            .solid
            .as_ref()
            .is_none_or(|s| s.mesh.triangles.is_empty());
        if self.primitives.is_empty() && mesh_empty {
            return Err(Error::InputValidation("phantom has no primitives and no mesh".into()));
        }
        for p in &self.primitives {
            p.validate()?;
        }
        Ok(())
    }

    pub fn is_projectable(&self) -> bool {
        self.solid.as_ref().is_none_or(|s| s.watertight)
    }

    /// Σ attenuation × chord over all primitives, plus the mesh solid if any.
    pub fn line_integral(&self, ray: &Ray) -> Result<f64> {
        let mut total: f64 = self
            .primitives
            .iter()
            .map(|p| p.attenuation * p.chord(ray))
            .sum();
        if let Some(solid) = &self.solid {
            if !solid.watertight {
                return Err(Error::GeometryIntegrity(
                    "refusing to project a non-watertight mesh".into(),
                ));
            }
            total += solid.attenuation * solid.inside_length(ray)?;
        }
        Ok(total)
    }

    /// Attenuation at a point (sum of deltas of every containing primitive).
    pub fn attenuation_at(&self, p: &Vec3) -> f64 {
        let mut a: f64 = self
            .primitives
            .iter()
            .filter(|q| q.contains(p))
            .map(|q| q.attenuation)
            .sum();
        if let Some(solid) = &self.solid {
            if solid.contains(p) {
                a += solid.attenuation;
            }
        }
        a
    }

    /// Unsigned distance to the nearest interface of any primitive or the mesh.
    pub fn surface_distance_with_bound(&self, p: &Vec3) -> SurfaceDistance {
        let mut best = SurfaceDistance {
            distance: f64::INFINITY,
            accuracy_bound: 0.0,
        };
        for q in &self.primitives {
            let d = q.surface_distance(p);
            if d.distance < best.distance {
                best = d;
            }
        }
        if let Some(solid) = &self.solid {
            let d = solid.surface_distance(p);
            if d < best.distance {
                best = SurfaceDistance {
                    distance: d,
                    accuracy_bound: 0.0,
                };
            }
        }
        best
    }

    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        self.surface_distance_with_bound(p).distance
    }

    pub fn description(&self) -> PhantomDescription {
        PhantomDescription {
            primitives: self.primitives.iter().map(PrimitiveDescription::from).collect(),
            stl: None,
        }
    }

    pub fn from_description(desc: &PhantomDescription, base_dir: Option<&Path>) -> Result<Self> {
        let primitives = desc
            .primitives
            .iter()
            .map(PrimitiveDescription::to_primitive)
            .collect::<Result<Vec<_>>>()?;
        let solid = match &desc.stl {
            Some(s) => {
                let path = match base_dir {
                    Some(dir) if s.path.is_relative() => dir.join(&s.path),
                    _ => s.path.clone(),
                };
                Some(MeshSolid::new(stl::load_stl(&path)?, s.attenuation))
            }
            None => None,
        };
        let p = Phantom { primitives, solid };
        p.validate()?;
        Ok(p)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let desc: PhantomDescription = serde_json::from_str(&text)?;
        Phantom::from_description(&desc, path.parent())
    }
}

/// JSON form of a phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomDescription {
    #[serde(default)]
    pub primitives: Vec<PrimitiveDescription>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stl: Option<StlReference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StlReference {
    pub path: PathBuf,
    pub attenuation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveDescription {
    #[serde(flatten)]
    pub shape: Shape,
    pub center: [f64; 3],
    /// Row-major local-to-world rotation; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[[f64; 3]; 3]>,
    /// Alternative to `rotation`: z-x-z Euler angles in degrees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub euler_zxz_deg: Option<[f64; 3]>,
    pub attenuation: f64,
}

impl PrimitiveDescription {
    pub fn to_primitive(&self) -> Result<Primitive> {
        let rotation = match (self.rotation, self.euler_zxz_deg) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "primitive gives both `rotation` and `euler_zxz_deg`".into(),
                ))
            }
            (Some(r), None) => Matrix3::from_row_slice(&r.concat()),
            (None, Some([a, b, c])) => euler_zxz_deg(a, b, c),
            (None, None) => Matrix3::identity(),
        };
        Primitive::new(self.shape, Vec3::from(self.center), rotation, self.attenuation)
    }
}

impl From<&Primitive> for PrimitiveDescription {
    fn from(p: &Primitive) -> Self {
        let r = p.rotation;
        PrimitiveDescription {
            shape: p.shape,
            center: [p.center.x, p.center.y, p.center.z],
            rotation: Some([
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ]),
            euler_zxz_deg: None,
            attenuation: p.attenuation,
        }
    }
}

/// K line-integral images with the geometry that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    pub geometry: AcquisitionGeometry,
    /// One `nu × nv` image per view.
    pub images: Vec<Image<f64>>,
}

impl ProjectionSet {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.images.len() != self.geometry.num_projections {
            return Err(Error::Config(format!(
                "{} images for {} projections",
                self.images.len(),
                self.geometry.num_projections
            )));
        }
        let dims = self.geometry.detector_pixels;
        for (k, img) in self.images.iter().enumerate() {
            if img.dims() != dims {
                return Err(Error::Config(format!(
                    "image {k} is {:?}, detector is {dims:?}",
                    img.dims()
                )));
            }
            if img.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::InputValidation(format!("image {k} has non-finite values")));
            }
        }
        Ok(())
    }

    /// The same data rounded through the on-disk 32-bit float format.
    pub fn quantized_f32(&self) -> ProjectionSet {
        ProjectionSet {
            geometry: self.geometry.clone(),
            images: self
                .images
                .iter()
                .map(|img| Image::from_vec(img.width, img.height, img.data.iter().map(|&v| v as f32 as f64).collect()))
                .collect(),
        }
    }
}

/// Geometry sidecar path for a concatenated projection file.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

const VIEW_FILE_PREFIX: &str = "view_";
const DIR_GEOMETRY_FILE: &str = "geometry.json";

fn f32_bytes(img: &Image<f64>) -> Vec<u8> {
    img.data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

fn f32_image(bytes: &[u8], nu: usize, nv: usize) -> Image<f64> {
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Image::from_vec(nu, nv, data)
}

impl ProjectionSet {
    /// All views in one little-endian f32 file (row-major, view after view)
    /// plus a `.json` geometry sidecar.
    pub fn write_concatenated(&self, raw: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.images.len() * self.geometry.pixel_count() * 4);
        for img in &self.images {
            bytes.extend(f32_bytes(img));
        }
        std::fs::write(raw, bytes).map_err(|e| Error::io(raw, e))?;
        self.geometry.to_json_file(&sidecar_path(raw))
    }

    /// One `view_NNNN.f32` per angle plus `geometry.json` in `dir`.
    pub fn write_per_view(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (k, img) in self.images.iter().enumerate() {
            let p = dir.join(format!("{VIEW_FILE_PREFIX}{k:04}.f32"));
            std::fs::write(&p, f32_bytes(img)).map_err(|e| Error::io(&p, e))?;
        }
        self.geometry.to_json_file(&dir.join(DIR_GEOMETRY_FILE))
    }

    /// Reads either layout: a directory written by [`write_per_view`] or a
    /// concatenated file with its sidecar.
    ///
    /// [`write_per_view`]: ProjectionSet::write_per_view
    pub fn read(path: &Path) -> Result<ProjectionSet> {
        let set = if path.is_dir() {
            let geometry = AcquisitionGeometry::from_json_file(&path.join(DIR_GEOMETRY_FILE))?;
            let (nu, nv) = geometry.detector_pixels;
            let images = (0..geometry.num_projections)
                .map(|k| {
                    let p = path.join(format!("{VIEW_FILE_PREFIX}{k:04}.f32"));
                    let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
                    if bytes.len() != nu * nv * 4 {
                        return Err(Error::Parse {
                            offset: bytes.len() as u64,
                            message: format!("{} holds {} bytes, expected {}", p.display(), bytes.len(), nu * nv * 4),
                        });
                    }
                    Ok(f32_image(&bytes, nu, nv))
                })
                .collect::<Result<Vec<_>>>()?;
            ProjectionSet { geometry, images }
        } else {
            let geometry = AcquisitionGeometry::from_json_file(&sidecar_path(path))?;
            let (nu, nv) = geometry.detector_pixels;
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            let per_view = nu * nv * 4;
            if bytes.len() != per_view * geometry.num_projections {
                return Err(Error::Parse {
                    offset: bytes.len() as u64,
                    message: format!(
                        "projection file holds {} bytes, expected {} views of {per_view}",
                        bytes.len(),
                        geometry.num_projections
                    ),
                });
            }
            let images = bytes.chunks_exact(per_view).map(|c| f32_image(c, nu, nv)).collect();
            ProjectionSet { geometry, images }
        };
        set.validate()?;
        Ok(set)
    }
}

/// One line integral per detector pixel per view. Pure per pixel, so the
/// parallel evaluation is deterministic.
pub fn simulate_projections(phantom: &Phantom, geom: &AcquisitionGeometry) -> Result<ProjectionSet> {
    geom.validate()?;
    phantom.validate()?;
    if !phantom.is_projectable() {
        return Err(Error::GeometryIntegrity(
            "phantom mesh is not watertight; projection refused".into(),
        ));
    }
    let (nu, nv) = geom.detector_pixels;
    let images = (0..geom.num_projections)
        .map(|k| {
            let data = (0..nu * nv)
                .into_par_iter()
                .map(|i| {
                    let (u, v) = (i % nu, i / nu);
                    let ray = geom.ray_for_pixel(k, u, v)?;
                    phantom.line_integral(&ray).map_err(|e| {
                        e.context(format!("pixel ({u}, {v}) of view {k}"))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(Image::from_vec(nu, nv, data))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectionSet {
        geometry: geom.clone(),
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_circular_geometry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ray(rng: &mut ChaCha8Rng, reach: f64) -> Ray {
        let o = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize() * 100.0;
        let target = Vec3::new(rng.random_range(-reach..reach), rng.random_range(-reach..reach), rng.random_range(-reach..reach));
        Ray::through(o, target).unwrap()
    }

    #[test]
    fn unit_sphere_integrals() {
        let p = Phantom::from_primitives(vec![Primitive::sphere(Vec3::zeros(), 1.0, 1.0).unwrap()]).unwrap();
        let r = Ray::new(Vec3::new(-10.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!((p.line_integral(&r).unwrap() - 2.0).abs() < 1e-14);
        let r = Ray::new(Vec3::new(-10.0, 0.6, 0.0), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!((p.line_integral(&r).unwrap() - 1.6).abs() < 1e-14);
        let r = Ray::new(Vec3::new(-10.0, 3.0, 0.0), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(p.line_integral(&r).unwrap(), 0.0);
    }

    #[test]
    fn chord_additivity_for_disjoint_spheres() {
        let a = Primitive::sphere(Vec3::new(-3.0, 0.5, 0.0), 2.0, 0.7).unwrap();
        let b = Primitive::sphere(Vec3::new(3.0, -1.0, 1.0), 1.5, 1.3).unwrap();
        let both = Phantom::from_primitives(vec![a.clone(), b.clone()]).unwrap();
        let pa = Phantom::from_primitives(vec![a]).unwrap();
        let pb = Phantom::from_primitives(vec![b]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let r = random_ray(&mut rng, 4.0);
            let sum = pa.line_integral(&r).unwrap() + pb.line_integral(&r).unwrap();
            let total = both.line_integral(&r).unwrap();
            assert!((total - sum).abs() <= 1e-12 * sum.abs().max(1e-300));
        }
    }

    #[test]
    fn surface_distance_never_overestimates() {
        let p = library::shepp_logan(60.0, 0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let samples: Vec<Vec3> = (0..10_000)
            .map(|i| {
                let prim = &p.primitives[i % p.primitives.len()];
                prim.surface_point(rng.random(), rng.random())
            })
            .collect();
        for _ in 0..50 {
            let q = Vec3::new(rng.random_range(-70.0..70.0), rng.random_range(-70.0..70.0), rng.random_range(-70.0..70.0));
            let d = p.surface_distance(&q);
            for s in &samples {
                assert!(d <= (s - q).norm() + 1e-9);
            }
        }
    }

    #[test]
    fn faceted_sphere_matches_analytic_sphere() {
        let soup = stl::icosphere_soup(Vec3::zeros(), 30.0, 5);
        assert!(soup.len() >= 20_000);
        let mesh = Phantom::from_mesh(TriMesh::from_soup(&soup), 1.0).unwrap();
        let ball = Phantom::from_primitives(vec![Primitive::sphere(Vec3::zeros(), 30.0, 1.0).unwrap()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            // Impact parameter up to 0.95 R; beyond that the faceting error
            // dominates the vanishing chord.
            let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
            let perp = dir.cross(&Vec3::new(0.3, 0.9, -0.2)).normalize();
            let b = 30.0 * 0.95 * rng.random::<f64>().sqrt();
            let r = Ray::new(perp * b - dir * 100.0, dir).unwrap();
            let exact = ball.line_integral(&r).unwrap();
            let faceted = mesh.line_integral(&r).unwrap();
            assert!((faceted - exact).abs() <= 0.01 * exact, "{faceted} vs {exact}");
        }
    }

    #[test]
    fn open_mesh_refuses_projection_but_allows_distance() {
        let mut soup = stl::cube_soup(-1.0, 1.0);
        soup.pop();
        let p = Phantom::from_mesh(TriMesh::from_soup(&soup), 1.0).unwrap();
        assert!(!p.is_projectable());
        let g = make_circular_geometry(2, 50.0, 100.0, (4, 4), (1.0, 1.0)).unwrap();
        assert!(matches!(simulate_projections(&p, &g), Err(Error::GeometryIntegrity(_))));
        assert!((p.surface_distance(&Vec3::new(3.0, 0.0, 0.0)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cube_mesh_integral_and_containment() {
        let p = Phantom::from_mesh(TriMesh::from_soup(&stl::cube_soup(-1.0, 1.0)), 2.0).unwrap();
        let r = Ray::new(Vec3::new(-5.0, 0.1, 0.2), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!((p.line_integral(&r).unwrap() - 4.0).abs() < 1e-12);
        assert!(p.solid.as_ref().unwrap().contains(&Vec3::new(0.1, 0.2, 0.3)));
        assert!(!p.solid.as_ref().unwrap().contains(&Vec3::new(1.5, 0.2, 0.3)));
        assert_eq!(p.attenuation_at(&Vec3::new(0.1, 0.2, 0.3)), 2.0);
    }

    #[test]
    fn empty_attenuation_gives_zero_images() {
        let p = Phantom::from_primitives(vec![Primitive::sphere(Vec3::zeros(), 10.0, 0.0).unwrap()]).unwrap();
        let g = make_circular_geometry(3, 100.0, 200.0, (16, 8), (2.0, 2.0)).unwrap();
        let set = simulate_projections(&p, &g).unwrap();
        assert!(set.images.iter().all(|im| im.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn centered_sphere_views_are_identical() {
        let p = Phantom::from_primitives(vec![Primitive::sphere(Vec3::zeros(), 20.0, 0.02).unwrap()]).unwrap();
        let g = make_circular_geometry(6, 200.0, 400.0, (32, 24), (2.0, 2.0)).unwrap();
        let set = simulate_projections(&p, &g).unwrap();
        for img in &set.images[1..] {
            for (a, b) in img.data.iter().zip(&set.images[0].data) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn opposing_views_mirror_across_u() {
        // Offset along x and z only: the view at π is the y-reflection of view 0.
        let p = Phantom::from_primitives(vec![Primitive::sphere(Vec3::new(12.0, 0.0, -5.0), 15.0, 0.02).unwrap()]).unwrap();
        let g = make_circular_geometry(2, 200.0, 400.0, (40, 30), (2.0, 2.0)).unwrap();
        let set = simulate_projections(&p, &g).unwrap();
        let (nu, nv) = g.detector_pixels;
        for v in 0..nv {
            for u in 0..nu {
                // Independent per-pixel oracle: chord of the line through
                // source and pixel center from the closed form.
                let r = g.ray_for_pixel(0, u, v).unwrap();
                let c = Vec3::new(12.0, 0.0, -5.0);
                let w = c - r.origin;
                let b2 = (w - r.direction * w.dot(&r.direction)).norm_squared();
                let oracle = 0.02 * 2.0 * (225.0 - b2).max(0.0).sqrt();
                let a = set.images[0].get(u, v);
                let b = set.images[1].get(nu - 1 - u, v);
                assert!((a - oracle).abs() < 1e-9);
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn description_round_trip() {
        let p = library::shepp_logan(60.0, 0.02);
        let text = serde_json::to_string(&p.description()).unwrap();
        let desc: PhantomDescription = serde_json::from_str(&text).unwrap();
        let q = Phantom::from_description(&desc, None).unwrap();
        assert_eq!(p.primitives, q.primitives);
    }

    #[test]
    fn raw_projection_round_trip_both_layouts() {
        let p = library::sphere(20.0, 0.02);
        let g = make_circular_geometry(3, 200.0, 400.0, (12, 10), (2.0, 2.0)).unwrap();
        let set = simulate_projections(&p, &g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("proj.f32");
        set.write_concatenated(&raw).unwrap();
        assert_eq!(ProjectionSet::read(&raw).unwrap(), set.quantized_f32());
        let views = dir.path().join("views");
        set.write_per_view(&views).unwrap();
        assert_eq!(ProjectionSet::read(&views).unwrap(), set.quantized_f32());
        std::fs::write(&raw, [0u8; 10]).unwrap();
        assert!(matches!(ProjectionSet::read(&raw), Err(Error::Parse { .. })));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"primitives": [], "extra": 1}"#;
        assert!(serde_json::from_str::<PhantomDescription>(text).is_err());
    }
}
