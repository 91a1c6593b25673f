//! Built-in test objects.

use nalgebra::Matrix3;
use serde::Deserialize;

use super::{euler_zxz_deg, Phantom, Primitive, Shape};
use crate::error::{Error, Result};
use crate::Vec3;

const SHEPP_LOGAN_TABLE: &str = include_str!("../../assets/shepp_logan_3d.json");

#[derive(Deserialize)]
struct EllipsoidTable {
    rows: Vec<[f64; 10]>,
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["sphere", "cone", "shepp-logan"];

/// Default object scale (mm) used by [`builtin`].
pub const DEFAULT_SPHERE_RADIUS: f64 = 40.0;
pub const DEFAULT_SHEPP_LOGAN_SCALE: f64 = 60.0;
pub const DEFAULT_ATTENUATION: f64 = 0.02;

pub fn builtin(name: &str) -> Result<Phantom> {
    match name {
        "sphere" => Ok(sphere(DEFAULT_SPHERE_RADIUS, DEFAULT_ATTENUATION)),
        "cone" => Ok(cone(30.0, 60.0, DEFAULT_ATTENUATION)),
        "shepp-logan" => Ok(shepp_logan(DEFAULT_SHEPP_LOGAN_SCALE, DEFAULT_ATTENUATION)),
        other => Err(Error::Config(format!(
            "unknown built-in phantom `{other}` (expected one of {BUILTIN_NAMES:?})"
        ))),
    }
}

pub fn sphere(radius: f64, attenuation: f64) -> Phantom {
    Phantom::from_primitives(vec![
        Primitive::sphere(Vec3::zeros(), radius, attenuation).expect("valid sphere"),
    ])
    .expect("non-empty phantom")
}

/// Upright cone centered on the isocenter: apex at `-height/2` on z, base at
/// `+height/2`.
pub fn cone(half_angle_deg: f64, height: f64, attenuation: f64) -> Phantom {
    let shape = Shape::Cone {
        half_angle_deg,
        height,
    };
    let apex = Vec3::new(0.0, 0.0, -height / 2.0);
    Phantom::from_primitives(vec![
        Primitive::new(shape, apex, Matrix3::identity(), attenuation).expect("valid cone"),
    ])
    .expect("non-empty phantom")
}

/// Ten-ellipsoid 3D head phantom with high-contrast amplitudes, normalized
/// coordinates multiplied by `scale` (mm) and amplitudes by `attenuation`.
pub fn shepp_logan(scale: f64, attenuation: f64) -> Phantom {
    let table: EllipsoidTable =
        serde_json::from_str(SHEPP_LOGAN_TABLE).expect("embedded ellipsoid table parses");
    let primitives = table
        .rows
        .iter()
        .map(|r| {
            Primitive::new(
                Shape::Ellipsoid {
                    semi_axes: [r[0] * scale, r[1] * scale, r[2] * scale],
                },
                Vec3::new(r[3], r[4], r[5]) * scale,
                euler_zxz_deg(r[6], r[7], r[8]),
                r[9] * attenuation,
            )
            .expect("valid ellipsoid")
        })
        .collect();
    Phantom::from_primitives(primitives).expect("non-empty phantom")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shepp_logan_interior_values() {
        let p = shepp_logan(1.0, 1.0);
        assert_eq!(p.primitives.len(), 10);
        // Inside the skull only: 1.0; inside the brain: 1.0 - 0.8.
        assert!((p.attenuation_at(&Vec3::new(0.0, 0.9, 0.0)) - 1.0).abs() < 1e-12);
        assert!((p.attenuation_at(&Vec3::new(0.0, 0.0, -0.5)) - 0.2).abs() < 1e-12);
        // Small central blob.
        assert!((p.attenuation_at(&Vec3::new(0.0, 0.1, 0.25)) - 0.3).abs() < 1e-12);
        assert_eq!(p.attenuation_at(&Vec3::new(0.0, 0.0, 0.95)), 0.0);
    }

    #[test]
    fn builtins_resolve() {
        for name in BUILTIN_NAMES {
            assert!(builtin(name).is_ok());
        }
        assert!(matches!(builtin("teapot"), Err(Error::Config(_))));
    }

    #[test]
    fn cone_is_centered() {
        let p = cone(30.0, 60.0, 1.0);
        assert_eq!(p.attenuation_at(&Vec3::new(0.0, 0.0, 0.0)), 1.0);
        assert_eq!(p.attenuation_at(&Vec3::new(0.0, 0.0, 31.0)), 0.0);
        assert_eq!(p.attenuation_at(&Vec3::new(0.0, 0.0, -29.0)), 1.0);
    }
}
