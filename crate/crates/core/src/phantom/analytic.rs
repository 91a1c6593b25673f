//! Analytic primitives: exact chords, containment, and boundary distances.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Ray;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Sphere { radius: f64 },
    Ellipsoid { semi_axes: [f64; 3] },
    /// Finite right circular cone with a closed base. The primitive's center
    /// is the apex and the local +z axis points from apex to base.
    Cone { half_angle_deg: f64, height: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub center: Vec3,
    /// Local-to-world rotation.
    pub rotation: Matrix3<f64>,
    /// Additive attenuation (1/mm).
    pub attenuation: f64,
}

/// Boundary distance with the accuracy it was obtained at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceDistance {
    pub distance: f64,
    /// 0 for closed-form results; otherwise an upper bound on the error.
    pub accuracy_bound: f64,
}

impl SurfaceDistance {
    fn exact(distance: f64) -> Self {
        SurfaceDistance {
            distance,
            accuracy_bound: 0.0,
        }
    }
}

/// Rotation from z-x-z Euler angles in degrees.
pub fn euler_zxz_deg(phi: f64, theta: f64, psi: f64) -> Matrix3<f64> {
    let rz = |a: f64| {
        let (s, c) = a.to_radians().sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    };
    let (s, c) = theta.to_radians().sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c);
    rz(phi) * rx * rz(psi)
}

impl Primitive {
    pub fn new(shape: Shape, center: Vec3, rotation: Matrix3<f64>, attenuation: f64) -> Result<Self> {
        let p = Primitive {
            shape,
            center,
            rotation,
            attenuation,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn sphere(center: Vec3, radius: f64, attenuation: f64) -> Result<Self> {
        Primitive::new(Shape::Sphere { radius }, center, Matrix3::identity(), attenuation)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let ok = match self.shape {
            Shape::Sphere { radius } => positive(radius),
            Shape::Ellipsoid { semi_axes } => semi_axes.iter().all(|&a| positive(a)),
            Shape::Cone {
                half_angle_deg,
                height,
            } => positive(half_angle_deg) && half_angle_deg < 90.0 && positive(height),
        };
        if !ok {
            return Err(Error::InputValidation(format!(
                "primitive shape parameters must be positive: {:?}",
                self.shape
            )));
        }
        if !self.attenuation.is_finite() || !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::InputValidation("non-finite primitive pose or attenuation".into()));
        }
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        if err > 1e-12 || self.rotation.determinant() < 0.0 {
            return Err(Error::InputValidation(format!(
                "primitive rotation is not orthonormal (error {err:e})"
            )));
        }
        Ok(())
    }

    #[inline]
    fn to_local(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.center)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let q = self.to_local(p);
        match self.shape {
            Shape::Sphere { radius } => q.norm_squared() <= radius * radius,
            Shape::Ellipsoid { semi_axes: e } => {
                (q.x / e[0]).powi(2) + (q.y / e[1]).powi(2) + (q.z / e[2]).powi(2) <= 1.0
            }
            Shape::Cone {
                half_angle_deg,
                height,
            } => {
                let k = half_angle_deg.to_radians().tan();
                q.z >= 0.0 && q.z <= height && q.x.hypot(q.y) <= k * q.z
            }
        }
    }

    /// Length of the ray (t ≥ 0) inside the primitive.
    pub fn chord(&self, ray: &Ray) -> f64 {
        let o = self.to_local(&ray.origin);
        let d = self.rotation.transpose() * ray.direction;
        match self.shape {
            Shape::Sphere { radius } => {
                let e = Vec3::repeat(radius);
                quadric_chord(&o.component_div(&e), &d.component_div(&e))
            }
            Shape::Ellipsoid { semi_axes } => {
                let e = Vec3::from(semi_axes);
                quadric_chord(&o.component_div(&e), &d.component_div(&e))
            }
            Shape::Cone {
                half_angle_deg,
                height,
            } => cone_chord(&o, &d, half_angle_deg.to_radians().tan(), height),
        }
    }

    pub fn surface_distance(&self, p: &Vec3) -> SurfaceDistance {
        let q = self.to_local(p);
        match self.shape {
            Shape::Sphere { radius } => SurfaceDistance::exact((q.norm() - radius).abs()),
            Shape::Ellipsoid { semi_axes } => ellipsoid_distance(&q, semi_axes),
            Shape::Cone {
                half_angle_deg,
                height,
            } => {
                let rb = height * half_angle_deg.to_radians().tan();
                let r = q.x.hypot(q.y);
                let lateral = segment_distance_2d((r, q.z), (0.0, 0.0), (rb, height));
                let base = segment_distance_2d((r, q.z), (0.0, height), (rb, height));
                SurfaceDistance::exact(lateral.min(base))
            }
        }
    }

    /// Maps `(s, t) ∈ [0,1]²` onto the boundary surface. Area-uniform for
    /// spheres only; adequate as a dense sample otherwise.
    pub fn surface_point(&self, s: f64, t: f64) -> Vec3 {
        let z = 1.0 - 2.0 * s;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let phi = 2.0 * std::f64::consts::PI * t;
        let unit = Vec3::new(r * phi.cos(), r * phi.sin(), z);
        let local = match self.shape {
            Shape::Sphere { radius } => unit * radius,
            Shape::Ellipsoid { semi_axes: e } => Vec3::new(unit.x * e[0], unit.y * e[1], unit.z * e[2]),
            Shape::Cone {
                half_angle_deg,
                height,
            } => {
                let rb = height * half_angle_deg.to_radians().tan();
                let slant = rb.hypot(height);
                // Split the parameter between lateral surface and base by area share.
                let lateral_share = slant / (slant + rb);
                if s < lateral_share {
                    let h = height * (s / lateral_share).sqrt();
                    let rr = h * rb / height;
                    Vec3::new(rr * phi.cos(), rr * phi.sin(), h)
                } else {
                    let rr = rb * ((s - lateral_share) / (1.0 - lateral_share)).sqrt();
                    Vec3::new(rr * phi.cos(), rr * phi.sin(), height)
                }
            }
        };
        self.rotation * local + self.center
    }
}

/// Chord of the unit ball in a scaled frame. `d` is the world-unit direction
/// mapped into the scaled frame, so `t` stays in world units.
fn quadric_chord(o: &Vec3, d: &Vec3) -> f64 {
    let a = d.norm_squared();
    let b = o.dot(d);
    let c = o.norm_squared() - 1.0;
    let disc = b * b - a * c;
    if disc <= 0.0 {
        return 0.0;
    }
    let s = disc.sqrt();
    let (t0, t1) = ((-b - s) / a, (-b + s) / a);
    (t1 - t0.max(0.0)).max(0.0)
}

fn cone_chord(o: &Vec3, d: &Vec3, k: f64, height: f64) -> f64 {
    // Slab 0 ≤ z ≤ height, intersected with t ≥ 0.
    let (mut s0, mut s1) = if d.z == 0.0 {
        if o.z < 0.0 || o.z > height {
            return 0.0;
        }
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        let a = -o.z / d.z;
        let b = (height - o.z) / d.z;
        (a.min(b), a.max(b))
    };
    s0 = s0.max(0.0);
    if s1 <= s0 {
        return 0.0;
    }
    let k2 = k * k;
    let qa = d.x * d.x + d.y * d.y - k2 * d.z * d.z;
    let qb = 2.0 * (o.x * d.x + o.y * d.y - k2 * o.z * d.z);
    let qc = o.x * o.x + o.y * o.y - k2 * o.z * o.z;
    let scale = d.norm_squared() * (1.0 + k2);
    let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(2);
    if qa.abs() <= 1e-14 * scale {
        if qb == 0.0 {
            if qc <= 0.0 {
                intervals.push((s0, s1));
            }
        } else {
            let r = -qc / qb;
            if qb > 0.0 {
                intervals.push((f64::NEG_INFINITY, r));
            } else {
                intervals.push((r, f64::INFINITY));
            }
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            if qa < 0.0 {
                intervals.push((f64::NEG_INFINITY, f64::INFINITY));
            }
        } else {
            let sq = disc.sqrt();
            let q = -0.5 * (qb + qb.signum() * sq);
            let (mut r0, mut r1) = if q == 0.0 { (0.0, 0.0) } else { (q / qa, qc / q) };
            if r0 > r1 {
                std::mem::swap(&mut r0, &mut r1);
            }
            if qa > 0.0 {
                intervals.push((r0, r1));
            } else {
                intervals.push((f64::NEG_INFINITY, r0));
                intervals.push((r1, f64::INFINITY));
            }
        }
    }
    // The z ≥ 0 slab already removes the lower nappe.
    s1 = s1.max(s0);
    intervals
        .into_iter()
        .map(|(a, b)| (b.min(s1) - a.max(s0)).max(0.0))
        .sum()
}

fn segment_distance_2d(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (abx, aby) = (b.0 - a.0, b.1 - a.1);
    let (apx, apy) = (p.0 - a.0, p.1 - a.1);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (apx - t * abx).hypot(apy - t * aby)
}

const NEWTON_MAX_ITERS: usize = 100;
const BISECTION_MAX_ITERS: usize = 2200;
const FALLBACK_SAMPLES: usize = 4096;

/// Root of a decreasing convex function on `[lo, hi]` with `f(lo) ≥ 0 ≥ f(hi)`.
/// Newton steps from the left increase monotonically without overshooting;
/// bisection finishes the job if Newton leaves the bracket or runs long.
fn decreasing_convex_root(f: impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut s = lo;
    for _ in 0..NEWTON_MAX_ITERS {
        let (fs, dfs) = f(s);
        if fs == 0.0 {
            return Some(s);
        }
        if fs < 0.0 {
            hi = s;
            break;
        }
        lo = s;
        let next = s - fs / dfs;
        if !next.is_finite() || next >= hi {
            break;
        }
        if next <= s {
            return Some(s);
        }
        s = next;
    }
    for _ in 0..BISECTION_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Some(mid);
        }
        if f(mid).0 >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    None
}

fn ellipse_distance(e0: f64, e1: f64, y0: f64, y1: f64) -> Option<f64> {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return Some(0.0);
            }
            let r0 = (e0 / e1).powi(2);
            let f = |s: f64| {
                let a = r0 * z0 / (s + r0);
                let b = z1 / (s + 1.0);
                (a * a + b * b - 1.0, -2.0 * (a * a / (s + r0) + b * b / (s + 1.0)))
            };
            let lo = z1 - 1.0;
            let hi = if g < 0.0 { 0.0 } else { (r0 * z0).hypot(z1) - 1.0 };
            let s = decreasing_convex_root(f, lo, hi)?;
            let x0 = r0 * y0 / (s + r0);
            let x1 = y1 / (s + 1.0);
            Some((x0 - y0).hypot(x1 - y1))
        } else {
            Some((y1 - e1).abs())
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).max(0.0).sqrt();
            Some((x0 - y0).hypot(x1))
        } else {
            Some((y0 - e0).abs())
        }
    }
}

/// Distance from a local-frame point to an axis-aligned ellipsoid boundary.
fn ellipsoid_distance(q: &Vec3, semi_axes: [f64; 3]) -> SurfaceDistance {
    // Sort axes descending; fold the point into the first octant.
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| semi_axes[b].total_cmp(&semi_axes[a]));
    let e = [semi_axes[idx[0]], semi_axes[idx[1]], semi_axes[idx[2]]];
    let y = [q[idx[0]].abs(), q[idx[1]].abs(), q[idx[2]].abs()];
    match ellipsoid_distance_sorted(e, y) {
        Some(d) => SurfaceDistance::exact(d),
        None => {
            log::warn!("ellipsoid projection did not converge; falling back to surface sampling");
            sampled_ellipsoid_distance(q, semi_axes)
        }
    }
}

fn ellipsoid_distance_sorted(e: [f64; 3], y: [f64; 3]) -> Option<f64> {
    let [e0, e1, e2] = e;
    let [y0, y1, y2] = y;
    if y2 > 0.0 {
        if y1 > 0.0 {
            if y0 > 0.0 {
                let z = [y0 / e0, y1 / e1, y2 / e2];
                let g = z[0] * z[0] + z[1] * z[1] + z[2] * z[2] - 1.0;
                if g == 0.0 {
                    return Some(0.0);
                }
                let r0 = (e0 / e2).powi(2);
                let r1 = (e1 / e2).powi(2);
                let f = |s: f64| {
                    let a = r0 * z[0] / (s + r0);
                    let b = r1 * z[1] / (s + r1);
                    let c = z[2] / (s + 1.0);
                    (
                        a * a + b * b + c * c - 1.0,
                        -2.0 * (a * a / (s + r0) + b * b / (s + r1) + c * c / (s + 1.0)),
                    )
                };
                let lo = z[2] - 1.0;
                let hi = if g < 0.0 {
                    0.0
                } else {
                    Vec3::new(r0 * z[0], r1 * z[1], z[2]).norm() - 1.0
                };
                let s = decreasing_convex_root(f, lo, hi)?;
                let x = Vec3::new(r0 * y0 / (s + r0), r1 * y1 / (s + r1), y2 / (s + 1.0));
                Some((x - Vec3::new(y0, y1, y2)).norm())
            } else {
                ellipse_distance(e1, e2, y1, y2)
            }
        } else if y0 > 0.0 {
            ellipse_distance(e0, e2, y0, y2)
        } else {
            Some((y2 - e2).abs())
        }
    } else {
        let denom0 = e0 * e0 - e2 * e2;
        let denom1 = e1 * e1 - e2 * e2;
        let numer0 = e0 * y0;
        let numer1 = e1 * y1;
        if numer0 < denom0 && numer1 < denom1 {
            let xde0 = numer0 / denom0;
            let xde1 = numer1 / denom1;
            let discr = 1.0 - xde0 * xde0 - xde1 * xde1;
            if discr > 0.0 {
                let x = Vec3::new(e0 * xde0, e1 * xde1, e2 * discr.sqrt());
                return Some((x - Vec3::new(y0, y1, 0.0)).norm());
            }
        }
        ellipse_distance(e0, e1, y0, y1)
    }
}

fn sampled_ellipsoid_distance(q: &Vec3, e: [f64; 3]) -> SurfaceDistance {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let n = FALLBACK_SAMPLES;
    let best = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let p = Vec3::new(e[0] * r * phi.cos(), e[1] * r * phi.sin(), e[2] * z);
            (p - q).norm()
        })
        .fold(f64::INFINITY, f64::min);
    let emax = e.iter().copied().fold(0.0, f64::max);
    SurfaceDistance {
        distance: best,
        accuracy_bound: 2.0 * emax * (4.0 * std::f64::consts::PI / n as f64).sqrt(),
    }
}
