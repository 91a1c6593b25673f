//! Circular cone-beam acquisition geometry.
//!
//! Conventions: the isocenter is the origin and the gantry rotates about +z.
//! At angle 0 the source sits at `(0, -sod, 0)` and the flat detector is
//! centered at `(0, sdd - sod, 0)`, with its `u` axis along +x and its `v`
//! axis along +z. Pixel `(u, v)` has its center at
//! `((u - (nu-1)/2) * du, (v - (nv-1)/2) * dv)` in detector coordinates.
//! Every other angle is the rigid rotation of this frame about z.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`. Fails on a zero or non-finite direction.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        let norm = direction.norm();
        if !(norm.is_finite() && norm > 0.0) || !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::InputValidation(format!(
                "ray needs a finite origin and a non-zero direction, got {origin:?} / {direction:?}"
            )));
        }
        Ok(Ray {
            origin,
            direction: direction / norm,
        })
    }

    pub fn through(from: Vec3, to: Vec3) -> Result<Self> {
        Ray::new(from, to - from)
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    /// Euclidean distance from `p` to the (infinite) line carrying the ray.
    pub fn distance_to(&self, p: &Vec3) -> f64 {
        let w = p - self.origin;
        (w - self.direction * w.dot(&self.direction)).norm()
    }
}

/// Circular-trajectory flat-panel geometry. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionGeometry {
    pub num_projections: usize,
    #[serde(rename = "sod_mm")]
    pub source_to_isocenter: f64,
    #[serde(rename = "sdd_mm")]
    pub source_to_detector: f64,
    #[serde(rename = "detector_px")]
    pub detector_pixels: (usize, usize),
    #[serde(rename = "pixel_pitch_mm")]
    pub pixel_pitch: (f64, f64),
    #[serde(rename = "angles_rad")]
    pub angles: Vec<f64>,
}

/// Uniform full-circle trajectory, `angle[k] = 2πk/K`.
pub fn make_circular_geometry(
    num_projections: usize,
    sod: f64,
    sdd: f64,
    detector_pixels: (usize, usize),
    pixel_pitch: (f64, f64),
) -> Result<AcquisitionGeometry> {
    let k = num_projections as f64;
    let angles = (0..num_projections)
        .map(|i| 2.0 * PI * i as f64 / k)
        .collect();
    let geom = AcquisitionGeometry {
        num_projections,
        source_to_isocenter: sod,
        source_to_detector: sdd,
        detector_pixels,
        pixel_pitch,
        angles,
    };
    geom.validate()?;
    Ok(geom)
}

impl AcquisitionGeometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGeometry(msg));
        if self.num_projections == 0 {
            return bad("at least one projection is required".into());
        }
        let (sod, sdd) = (self.source_to_isocenter, self.source_to_detector);
        if !(sod.is_finite() && sdd.is_finite() && sod > 0.0 && sdd > sod) {
            return bad(format!("need sdd > sod > 0, got sod={sod}, sdd={sdd}"));
        }
        let (nu, nv) = self.detector_pixels;
        if nu < 2 || nv < 2 {
            return bad(format!("detector must be at least 2x2 pixels, got {nu}x{nv}"));
        }
        let (du, dv) = self.pixel_pitch;
        if !(du.is_finite() && dv.is_finite() && du > 0.0 && dv > 0.0) {
            return bad(format!("pixel pitch must be positive, got ({du}, {dv})"));
        }
        if self.angles.len() != self.num_projections {
            return bad(format!(
                "{} angles given for {} projections",
                self.angles.len(),
                self.num_projections
            ));
        }
        if let Some(a) = self.angles.iter().find(|a| !a.is_finite()) {
            return bad(format!("non-finite angle {a}"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.detector_pixels.0 * self.detector_pixels.1
    }

    pub fn magnification(&self) -> f64 {
        self.source_to_detector / self.source_to_isocenter
    }

    fn check_view(&self, k: usize) -> Result<()> {
        if k >= self.num_projections {
            return Err(Error::Index {
                what: "projection",
                index: k,
                limit: self.num_projections,
            });
        }
        Ok(())
    }

    /// Source position and detector frame (center, u axis, v axis) for view `k`.
    pub fn frame(&self, k: usize) -> Result<ViewFrame> {
        self.check_view(k)?;
        let (s, c) = self.angles[k].sin_cos();
        let rot = |x: f64, y: f64, z: f64| Vec3::new(c * x - s * y, s * x + c * y, z);
        let sod = self.source_to_isocenter;
        let sdd = self.source_to_detector;
        Ok(ViewFrame {
            source: rot(0.0, -sod, 0.0),
            detector_center: rot(0.0, sdd - sod, 0.0),
            u_axis: rot(1.0, 0.0, 0.0),
            v_axis: Vec3::new(0.0, 0.0, 1.0),
            normal: rot(0.0, 1.0, 0.0),
        })
    }

    /// Physical position of the (possibly fractional) detector coordinate on view `k`.
    pub fn detector_point(&self, k: usize, u: f64, v: f64) -> Result<Vec3> {
        let f = self.frame(k)?;
        let (nu, nv) = self.detector_pixels;
        let (du, dv) = self.pixel_pitch;
        let cu = (u - (nu as f64 - 1.0) * 0.5) * du;
        let cv = (v - (nv as f64 - 1.0) * 0.5) * dv;
        Ok(f.detector_center + f.u_axis * cu + f.v_axis * cv)
    }

    /// Ray from the source of view `k` through the center of pixel `(u, v)`.
    pub fn ray_for_pixel(&self, k: usize, u: usize, v: usize) -> Result<Ray> {
        let (nu, nv) = self.detector_pixels;
        if u >= nu {
            return Err(Error::Index {
                what: "pixel column",
                index: u,
                limit: nu,
            });
        }
        if v >= nv {
            return Err(Error::Index {
                what: "pixel row",
                index: v,
                limit: nv,
            });
        }
        self.ray_through(k, u as f64, v as f64)
    }

    /// Ray through a continuous detector coordinate.
    pub fn ray_through(&self, k: usize, u: f64, v: f64) -> Result<Ray> {
        let f = self.frame(k)?;
        let target = self.detector_point(k, u, v)?;
        Ray::through(f.source, target)
    }

    /// Perspective projection of `p` onto view `k`, in continuous pixel units.
    pub fn project_point(&self, k: usize, p: &Vec3) -> Result<(f64, f64)> {
        let f = self.frame(k)?;
        let w = p - f.source;
        let depth = w.dot(&f.normal);
        if !(depth > 0.0) {
            return Err(Error::ProjectionDomain(format!(
                "point {p:?} has non-positive depth {depth} in view {k}"
            )));
        }
        let scale = self.source_to_detector / depth;
        let cu = w.dot(&f.u_axis) * scale;
        let cv = w.dot(&f.v_axis) * scale;
        let (nu, nv) = self.detector_pixels;
        let (du, dv) = self.pixel_pitch;
        Ok((
            cu / du + (nu as f64 - 1.0) * 0.5,
            cv / dv + (nv as f64 - 1.0) * 0.5,
        ))
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let geom: AcquisitionGeometry = serde_json::from_str(&text)?;
        geom.validate()?;
        Ok(geom)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ViewFrame {
    pub source: Vec3,
    pub detector_center: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    /// Unit vector from source towards detector.
    pub normal: Vec3,
}
