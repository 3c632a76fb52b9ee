//! Watertight closed shapes with exact-as-practical ray intersection.
//!
//! Four kinds are supported:
//!
//! - sphere: analytic quadratic intersection;
//! - rounded box: exact signed distance function, sphere-traced with a
//!   bisection refinement;
//! - superquadric: convex for exponents in `(0, 2]`; intersected through its
//!   Minkowski gauge, which is convex along any line, so a ternary search
//!   plus two bisections finds entry and exit with no grazing misses;
//! - triangle mesh: BVH over a watertight triangle intersector (the built-in
//!   generator is an icosphere).
//!
//! Every hit reports the *outward* geometric normal and whether the ray
//! origin was inside; callers that need the normal facing the origin use
//! [`Hit::facing_normal`].

use crate::error::{Error, Result};
use crate::math::{vec3, Vec3};
use crate::scene::mesh::{icosphere, TriMesh};
use serde::{Deserialize, Serialize};

/// Where superquadric exponents are allowed to live. The upper end stays
/// below 2 so the solid remains strictly convex with a well-defined gauge.
pub const SUPERQUADRIC_EXP_MIN: f64 = 0.4;
pub const SUPERQUADRIC_EXP_MAX: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pose {
    pub translation: Vec3,
    /// Rotation axis (normalized internally; ignored when angle is zero).
    pub rotation_axis: Vec3,
    pub rotation_angle_deg: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Pose {
            translation: Vec3::ZERO,
            rotation_axis: vec3(0.0, 1.0, 0.0),
            rotation_angle_deg: 0.0,
        }
    }
}

/// Precomputed rotation matrix (rows are the world axes in local frame).
#[derive(Debug, Clone, Copy)]
pub struct Rotation {
    // columns of the local-to-world matrix
    cols: [Vec3; 3],
}

impl Rotation {
    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Self {
        let a = axis.normalized_or(vec3(0.0, 1.0, 0.0));
        let (s, c) = angle_rad.sin_cos();
        let rot = |v: Vec3| v * c + a.cross(v) * s + a * (a.dot(v) * (1.0 - c));
        Rotation {
            cols: [
                rot(vec3(1.0, 0.0, 0.0)),
                rot(vec3(0.0, 1.0, 0.0)),
                rot(vec3(0.0, 0.0, 1.0)),
            ],
        }
    }

    pub fn to_world(&self, v: Vec3) -> Vec3 {
        self.cols[0] * v.x + self.cols[1] * v.y + self.cols[2] * v.z
    }

    pub fn to_local(&self, v: Vec3) -> Vec3 {
        vec3(self.cols[0].dot(v), self.cols[1].dot(v), self.cols[2].dot(v))
    }
}

/// Shape description as it appears in scene configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeConfig {
    Sphere {
        radius: f64,
        #[serde(default)]
        pose: Pose,
    },
    RoundedBox {
        half_extents: [f64; 3],
        corner_radius: f64,
        #[serde(default)]
        pose: Pose,
    },
    Superquadric {
        radii: [f64; 3],
        /// `[e1, e2]`: vertical and horizontal shape exponents.
        exponents: [f64; 2],
        #[serde(default)]
        pose: Pose,
    },
    TriangleMesh {
        /// Only the built-in generator is supported: an icosphere.
        source: MeshSource,
        #[serde(default)]
        pose: Pose,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum MeshSource {
    Icosphere { radius: f64, subdivisions: u32 },
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub position: Vec3,
    /// Outward unit normal of the surface at the hit.
    pub normal: Vec3,
    /// True when the ray origin was inside the shape.
    pub inside: bool,
}

impl Hit {
    /// Normal flipped to face the side the ray came from.
    pub fn facing_normal(&self) -> Vec3 {
        if self.inside {
            -self.normal
        } else {
            self.normal
        }
    }
}

/// A validated, pose-resolved shape ready for intersection queries.
#[derive(Debug, Clone)]
pub struct Shape {
    kind: ShapeKind,
    rotation: Rotation,
    translation: Vec3,
    /// Radius of a sphere (centered on the pose translation) guaranteed to
    /// contain the shape.
    bounding_radius: f64,
}

#[derive(Debug, Clone)]
enum ShapeKind {
    Sphere { radius: f64 },
    RoundedBox { inner: Vec3, corner: f64 },
    Superquadric(Superquadric),
    Mesh(TriMesh),
}

#[derive(Debug, Clone)]
struct Superquadric {
    radii: Vec3,
    e1: f64,
    e2: f64,
}

impl Shape {
    pub fn from_config(cfg: &ShapeConfig) -> Result<Self> {
        let (kind, pose, bounding_radius) = match cfg {
            ShapeConfig::Sphere { radius, pose } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "sphere radius must be positive, got {radius}"
                    )));
                }
                (ShapeKind::Sphere { radius: *radius }, pose, *radius)
            }
            ShapeConfig::RoundedBox {
                half_extents,
                corner_radius,
                pose,
            } => {
                let he = vec3(half_extents[0], half_extents[1], half_extents[2]);
                if !(he.x > 0.0 && he.y > 0.0 && he.z > 0.0) {
                    return Err(Error::InvalidInput(
                        "rounded box half extents must be positive".into(),
                    ));
                }
                if !(*corner_radius >= 0.0) || *corner_radius > he.min_component() {
                    return Err(Error::InvalidInput(format!(
                        "corner radius must be in [0, min half extent], got {corner_radius}"
                    )));
                }
                let inner = he - vec3(*corner_radius, *corner_radius, *corner_radius);
                (
                    ShapeKind::RoundedBox {
                        inner,
                        corner: *corner_radius,
                    },
                    pose,
                    he.length(),
                )
            }
            ShapeConfig::Superquadric {
                radii,
                exponents,
                pose,
            } => {
                let r = vec3(radii[0], radii[1], radii[2]);
                if !(r.x > 0.0 && r.y > 0.0 && r.z > 0.0) {
                    return Err(Error::InvalidInput("superquadric radii must be positive".into()));
                }
                for &e in exponents {
                    if !(SUPERQUADRIC_EXP_MIN..=SUPERQUADRIC_EXP_MAX).contains(&e) {
                        return Err(Error::InvalidInput(format!(
                            "superquadric exponents must be in [{SUPERQUADRIC_EXP_MIN}, {SUPERQUADRIC_EXP_MAX}], got {e}"
                        )));
                    }
                }
                (
                    ShapeKind::Superquadric(Superquadric {
                        radii: r,
                        e1: exponents[0],
                        e2: exponents[1],
                    }),
                    pose,
                    // contained in its bounding box [-a,a]x[-b,b]x[-c,c]
                    r.length(),
                )
            }
            ShapeConfig::TriangleMesh { source, pose } => {
                let MeshSource::Icosphere { radius, subdivisions } = source;
                if !(*radius > 0.0) {
                    return Err(Error::InvalidInput("icosphere radius must be positive".into()));
                }
                if *subdivisions > 6 {
                    return Err(Error::InvalidInput(
                        "icosphere subdivisions capped at 6".into(),
                    ));
                }
                let mesh = icosphere(*radius, *subdivisions);
                let (lo, hi) = mesh.bounds();
                let br = lo.length().max(hi.length());
                (ShapeKind::Mesh(mesh), pose, br)
            }
        };
        Ok(Shape {
            kind,
            rotation: Rotation::from_axis_angle(pose.rotation_axis, pose.rotation_angle_deg.to_radians()),
            translation: pose.translation,
            bounding_radius,
        })
    }

    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// Signed inside test (true when strictly inside).
    pub fn contains(&self, p: Vec3) -> bool {
        let q = self.rotation.to_local(p - self.translation);
        match &self.kind {
            ShapeKind::Sphere { radius } => q.length() < *radius,
            ShapeKind::RoundedBox { inner, corner } => rounded_box_sdf(q, *inner, *corner) < 0.0,
            ShapeKind::Superquadric(sq) => sq.gauge(q) < 1.0,
            ShapeKind::Mesh(mesh) => mesh.count_crossings(q, vec3(0.577, 0.577, 0.578).normalized()) % 2 == 1,
        }
    }

    /// Nearest intersection with `t > t_min` along a normalized direction.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64) -> Option<Hit> {
        debug_assert!(
            (dir.length() - 1.0).abs() < 1e-9,
            "non-unit ray direction {dir:?} (len {}) from {origin:?}",
            dir.length()
        );
        let o = self.rotation.to_local(origin - self.translation);
        let d = self.rotation.to_local(dir);
        let local = match &self.kind {
            ShapeKind::Sphere { radius } => sphere_intersect(o, d, *radius, t_min),
            ShapeKind::RoundedBox { inner, corner } => {
                rounded_box_intersect(o, d, *inner, *corner, t_min, self.bounding_radius)
            }
            ShapeKind::Superquadric(sq) => sq.intersect(o, d, t_min, self.bounding_radius),
            ShapeKind::Mesh(mesh) => mesh
                .intersect(o, d, t_min, f64::INFINITY)
                .map(|h| LocalHit { t: h.t, normal: h.normal }),
        }?;
        let position = origin + dir * local.t;
        let normal = self.rotation.to_world(local.normal);
        Some(Hit {
            t: local.t,
            position,
            normal,
            inside: dir.dot(normal) > 0.0,
        })
    }

    /// True when the free-flight endpoint `origin + dir * t` is strictly
    /// inside: a cheap test that lets interior walks skip the full boundary
    /// search for segments that never reach the surface.
    pub fn interior_segment_stays_inside(&self, origin: Vec3, dir: Vec3, t: f64) -> bool {
        let p = origin + dir * t;
        let q = self.rotation.to_local(p - self.translation);
        match &self.kind {
            ShapeKind::Sphere { radius } => q.length_squared() < radius * radius,
            ShapeKind::RoundedBox { inner, corner } => rounded_box_sdf(q, *inner, *corner) < 0.0,
            ShapeKind::Superquadric(sq) => sq.gauge(q) < 1.0,
            // without a cheap inside test for meshes, fall through to the
            // full intersection path
            ShapeKind::Mesh(_) => false,
        }
    }
}

struct LocalHit {
    t: f64,
    normal: Vec3,
}

fn sphere_intersect(o: Vec3, d: Vec3, radius: f64, t_min: f64) -> Option<LocalHit> {
    let b = o.dot(d);
    let c = o.length_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable root ordering
    let t0 = -b - sq;
    let t1 = -b + sq;
    let t = if t0 > t_min {
        t0
    } else if t1 > t_min {
        t1
    } else {
        return None;
    };
    let normal = (o + d * t) / radius;
    Some(LocalHit { t, normal })
}

/// Exact signed distance of a rounded box: `inner` are the half extents of
/// the core box, `corner` the rounding radius.
fn rounded_box_sdf(p: Vec3, inner: Vec3, corner: f64) -> f64 {
    let q = p.abs() - inner;
    let outside = vec3(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).length();
    let inside = q.x.max(q.y).max(q.z).min(0.0);
    outside + inside - corner
}

fn rounded_box_normal(p: Vec3, inner: Vec3, corner: f64) -> Vec3 {
    let h = 1e-8 * (inner.max_component() + corner).max(1e-6);
    let dx = rounded_box_sdf(p + vec3(h, 0.0, 0.0), inner, corner)
        - rounded_box_sdf(p - vec3(h, 0.0, 0.0), inner, corner);
    let dy = rounded_box_sdf(p + vec3(0.0, h, 0.0), inner, corner)
        - rounded_box_sdf(p - vec3(0.0, h, 0.0), inner, corner);
    let dz = rounded_box_sdf(p + vec3(0.0, 0.0, h), inner, corner)
        - rounded_box_sdf(p - vec3(0.0, 0.0, h), inner, corner);
    vec3(dx, dy, dz).normalized_or(vec3(0.0, 0.0, 1.0))
}

fn rounded_box_intersect(
    o: Vec3,
    d: Vec3,
    inner: Vec3,
    corner: f64,
    t_min: f64,
    bounding_radius: f64,
) -> Option<LocalHit> {
    // restrict to the bounding-sphere interval
    let (mut t, t_far) = {
        let b = o.dot(d);
        let c = o.length_squared() - bounding_radius * bounding_radius * 1.0201;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        ((-b - sq).max(t_min), -b + sq)
    };
    if t_far <= t_min {
        return None;
    }
    let start_sign = rounded_box_sdf(o + d * t.max(t_min + 1e-12), inner, corner) >= 0.0;
    // sphere trace: the SDF is exact and 1-Lipschitz, so stepping by |sdf|
    // can never cross the surface
    let eps = 1e-12 * (inner.max_component() + corner).max(1e-3);
    let mut prev = t;
    for _ in 0..512 {
        let dist = rounded_box_sdf(o + d * t, inner, corner);
        let dist = if start_sign { dist } else { -dist };
        if dist < eps {
            // bracket [prev, t] if we overshot numerically; refine by
            // bisection on the signed distance
            let (mut lo, mut hi) = (prev, t.max(prev));
            if dist < 0.0 {
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let s = rounded_box_sdf(o + d * mid, inner, corner);
                    let s = if start_sign { s } else { -s };
                    if s > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                t = 0.5 * (lo + hi);
            }
            if t <= t_min {
                return None;
            }
            let p = o + d * t;
            return Some(LocalHit {
                t,
                normal: rounded_box_normal(p, inner, corner),
            });
        }
        prev = t;
        t += dist;
        if t > t_far {
            return None;
        }
    }
    None
}

impl Superquadric {
    /// Minkowski gauge: positively homogeneous of degree 1, equal to 1 on
    /// the surface, convex because the solid is convex for exponents <= 2.
    fn gauge(&self, p: Vec3) -> f64 {
        let x = (p.x / self.radii.x).abs();
        let y = (p.y / self.radii.y).abs();
        let z = (p.z / self.radii.z).abs();
        let a = x.powf(2.0 / self.e2) + y.powf(2.0 / self.e2);
        let f = a.powf(self.e2 / self.e1) + z.powf(2.0 / self.e1);
        f.powf(self.e1 / 2.0)
    }

    fn gradient(&self, p: Vec3) -> Vec3 {
        // gradient of the inside-outside function F = gauge^(2/e1); its
        // direction matches the gauge gradient on the surface
        let x = (p.x / self.radii.x).abs().max(1e-300);
        let y = (p.y / self.radii.y).abs().max(1e-300);
        let z = (p.z / self.radii.z).abs().max(1e-300);
        let a = x.powf(2.0 / self.e2) + y.powf(2.0 / self.e2);
        let (gx, gy) = if a < 1e-280 {
            (0.0, 0.0)
        } else {
            let common = (2.0 / self.e1) * a.powf(self.e2 / self.e1 - 1.0);
            (
                common * x.powf(2.0 / self.e2 - 1.0) * p.x.signum() / self.radii.x,
                common * y.powf(2.0 / self.e2 - 1.0) * p.y.signum() / self.radii.y,
            )
        };
        let gz = (2.0 / self.e1) * z.powf(2.0 / self.e1 - 1.0) * p.z.signum() / self.radii.z;
        vec3(gx, gy, gz)
    }

    fn intersect(&self, o: Vec3, d: Vec3, t_min: f64, bounding_radius: f64) -> Option<LocalHit> {
        // bounding-sphere interval
        let (t_lo, t_hi) = {
            let b = o.dot(d);
            let c = o.length_squared() - bounding_radius * bounding_radius * 1.0201;
            let disc = b * b - c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            (-b - sq, -b + sq)
        };
        if t_hi <= t_min {
            return None;
        }
        let phi = |t: f64| self.gauge(o + d * t);
        let t_start = t_lo.max(t_min);
        let inside_at_start = phi(t_start) < 1.0;
        let (mut lo, mut hi);
        if inside_at_start {
            // exit only: gauge is convex along the ray, so there is exactly
            // one upward crossing after t_start
            lo = t_start;
            hi = t_hi;
        } else {
            // golden-section search for the minimum of the convex gauge
            let (mut a, mut b) = (t_start, t_hi);
            const INV_PHI: f64 = 0.618_033_988_749_894_9;
            let mut c1 = b - (b - a) * INV_PHI;
            let mut c2 = a + (b - a) * INV_PHI;
            let mut f1 = phi(c1);
            let mut f2 = phi(c2);
            for _ in 0..90 {
                if f1 < f2 {
                    b = c2;
                    c2 = c1;
                    f2 = f1;
                    c1 = b - (b - a) * INV_PHI;
                    f1 = phi(c1);
                } else {
                    a = c1;
                    c1 = c2;
                    f1 = f2;
                    c2 = a + (b - a) * INV_PHI;
                    f2 = phi(c2);
                }
                if (b - a) < 1e-14 * bounding_radius.max(1.0) {
                    break;
                }
            }
            let t_mid = 0.5 * (a + b);
            if phi(t_mid) >= 1.0 {
                return None; // ray misses (or exactly grazes) the surface
            }
            // entry crossing in [t_start, t_mid]
            lo = t_start;
            hi = t_mid;
            let mut entry_lo = lo;
            let mut entry_hi = hi;
            for _ in 0..100 {
                let mid = 0.5 * (entry_lo + entry_hi);
                if phi(mid) >= 1.0 {
                    entry_lo = mid;
                } else {
                    entry_hi = mid;
                }
            }
            let t_entry = 0.5 * (entry_lo + entry_hi);
            if t_entry > t_min {
                let p = o + d * t_entry;
                return Some(LocalHit {
                    t: t_entry,
                    normal: self.gradient(p).normalized_or(p.normalized_or(vec3(0.0, 0.0, 1.0))),
                });
            }
            // entry is behind t_min: fall through to the exit crossing
            lo = t_mid;
            hi = t_hi;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t_exit = 0.5 * (lo + hi);
        if t_exit <= t_min {
            return None;
        }
        let p = o + d * t_exit;
        Some(LocalHit {
            t: t_exit,
            normal: self.gradient(p).normalized_or(p.normalized_or(vec3(0.0, 0.0, 1.0))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derived_rng;
    use rand::Rng;

    fn unit_sphere() -> Shape {
        Shape::from_config(&ShapeConfig::Sphere {
            radius: 1.0,
            pose: Pose::default(),
        })
        .unwrap()
    }

    #[test]
    fn sphere_axis_ray() {
        let s = unit_sphere();
        let hit = s
            .intersect(vec3(0.0, 0.0, -3.0), vec3(0.0, 0.0, 1.0), 1e-12)
            .unwrap();
        assert!((hit.t - 2.0).abs() < 1e-12);
        assert!((hit.normal - vec3(0.0, 0.0, -1.0)).length() < 1e-12);
        assert!(!hit.inside);
    }

    #[test]
    fn sphere_miss() {
        let s = unit_sphere();
        assert!(s
            .intersect(vec3(0.0, 2.0, -3.0), vec3(0.0, 0.0, 1.0), 1e-12)
            .is_none());
    }

    #[test]
    fn sphere_from_inside_flags_and_flips() {
        let s = unit_sphere();
        let hit = s
            .intersect(vec3(0.2, 0.0, 0.0), vec3(0.0, 0.0, 1.0), 1e-12)
            .unwrap();
        assert!(hit.inside);
        // outward normal points away from center; facing normal points back
        // toward the interior ray origin side
        assert!(hit.normal.dot(hit.position) > 0.0);
        assert!(hit.facing_normal().dot(vec3(0.0, 0.0, 1.0)) < 0.0);
    }

    #[test]
    fn posed_sphere_translates() {
        let s = Shape::from_config(&ShapeConfig::Sphere {
            radius: 0.5,
            pose: Pose {
                translation: vec3(0.0, 1.0, 0.0),
                ..Pose::default()
            },
        })
        .unwrap();
        let hit = s
            .intersect(vec3(0.0, 1.0, -4.0), vec3(0.0, 0.0, 1.0), 1e-12)
            .unwrap();
        assert!((hit.t - 3.5).abs() < 1e-12);
        assert!(s.contains(vec3(0.0, 1.2, 0.0)));
        assert!(!s.contains(Vec3::ZERO));
    }

    #[test]
    fn rounded_box_face_hit_matches_plane() {
        let s = Shape::from_config(&ShapeConfig::RoundedBox {
            half_extents: [0.5, 0.4, 0.3],
            corner_radius: 0.1,
            pose: Pose::default(),
        })
        .unwrap();
        // straight at the +z face center: surface at z = 0.3
        let hit = s
            .intersect(vec3(0.0, 0.0, 2.0), vec3(0.0, 0.0, -1.0), 1e-12)
            .unwrap();
        assert!((hit.t - 1.7).abs() < 1e-9, "t = {}", hit.t);
        assert!((hit.normal - vec3(0.0, 0.0, 1.0)).length() < 1e-6);
    }

    #[test]
    fn rounded_box_corner_is_spherical() {
        let he = [0.5, 0.5, 0.5];
        let r = 0.1;
        let s = Shape::from_config(&ShapeConfig::RoundedBox {
            half_extents: he,
            corner_radius: r,
            pose: Pose::default(),
        })
        .unwrap();
        // along the main diagonal the surface sits at |corner center| + r
        let d = vec3(1.0, 1.0, 1.0).normalized();
        let hit = s.intersect(d * 3.0, -d, 1e-12).unwrap();
        let expect = (vec3(0.4, 0.4, 0.4).length() + r - 3.0).abs();
        assert!((hit.t - expect.abs()).abs() < 1e-6 || (3.0 - hit.t - (vec3(0.4, 0.4, 0.4).length() + r)).abs() < 1e-6);
        let p = hit.position;
        assert!((p - vec3(0.4, 0.4, 0.4)).length() - r < 1e-6);
        // normal points along the corner-sphere radius
        let n_expect = (p - vec3(0.4, 0.4, 0.4)).normalized();
        assert!((hit.normal - n_expect).length() < 1e-5);
    }

    #[test]
    fn rounded_box_inside_out() {
        let s = Shape::from_config(&ShapeConfig::RoundedBox {
            half_extents: [0.5, 0.4, 0.3],
            corner_radius: 0.05,
            pose: Pose::default(),
        })
        .unwrap();
        let hit = s.intersect(Vec3::ZERO, vec3(1.0, 0.0, 0.0), 1e-12).unwrap();
        assert!(hit.inside);
        assert!((hit.t - 0.5).abs() < 1e-9);
        assert!(s.contains(Vec3::ZERO));
        assert!(!s.contains(vec3(0.51, 0.0, 0.0)));
    }

    #[test]
    fn superquadric_sphere_limit() {
        // e1 = e2 = 1 with equal radii is exactly a sphere
        let s = Shape::from_config(&ShapeConfig::Superquadric {
            radii: [0.7, 0.7, 0.7],
            exponents: [1.0, 1.0],
            pose: Pose::default(),
        })
        .unwrap();
        let hit = s
            .intersect(vec3(0.0, 0.0, -3.0), vec3(0.0, 0.0, 1.0), 1e-12)
            .unwrap();
        assert!((hit.t - 2.3).abs() < 1e-9, "t = {}", hit.t);
        assert!((hit.normal - vec3(0.0, 0.0, -1.0)).length() < 1e-6);
        let mut rng = derived_rng(7, &[501]);
        for _ in 0..500 {
            let d = vec3(
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            )
            .normalized_or(vec3(0.0, 0.0, 1.0));
            let o = d * -2.0 + vec3(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, 0.0) * 0.3;
            if let Some(h) = s.intersect(o, d, 1e-12) {
                assert!((h.position.length() - 0.7).abs() < 1e-9);
                assert!((h.normal - h.position / 0.7).length() < 1e-6);
            }
        }
    }

    #[test]
    fn superquadric_axis_crossings_at_radii() {
        let s = Shape::from_config(&ShapeConfig::Superquadric {
            radii: [0.5, 0.7, 0.9],
            exponents: [0.6, 1.4],
            pose: Pose::default(),
        })
        .unwrap();
        for (dir, r) in [
            (vec3(1.0, 0.0, 0.0), 0.5),
            (vec3(0.0, 1.0, 0.0), 0.7),
            (vec3(0.0, 0.0, 1.0), 0.9),
        ] {
            let hit = s.intersect(dir * -3.0, dir, 1e-12).unwrap();
            assert!((hit.t - (3.0 - r)).abs() < 1e-9, "axis {dir:?}: t {}", hit.t);
        }
    }

    #[test]
    fn superquadric_entry_exit_consistency() {
        let s = Shape::from_config(&ShapeConfig::Superquadric {
            radii: [0.6, 0.5, 0.4],
            exponents: [0.5, 1.3],
            pose: Pose {
                rotation_axis: vec3(0.3, 1.0, -0.2),
                rotation_angle_deg: 37.0,
                ..Pose::default()
            },
        })
        .unwrap();
        let mut rng = derived_rng(7, &[502]);
        let mut hits = 0;
        for _ in 0..2000 {
            let o = vec3(
                rng.gen::<f64>() * 4.0 - 2.0,
                rng.gen::<f64>() * 4.0 - 2.0,
                rng.gen::<f64>() * 4.0 - 2.0,
            );
            // aim at a jittered point near the body so most rays connect
            let target = vec3(
                rng.gen::<f64>() * 0.6 - 0.3,
                rng.gen::<f64>() * 0.6 - 0.3,
                rng.gen::<f64>() * 0.6 - 0.3,
            );
            let d = (target - o).normalized_or(vec3(0.0, 0.0, 1.0));
            if s.contains(o) {
                continue;
            }
            if let Some(entry) = s.intersect(o, d, 1e-12) {
                hits += 1;
                assert!(!entry.inside);
                // outward normal at entry must oppose the ray
                assert!(entry.normal.dot(d) < 1e-6);
                // stepping just inside and intersecting again must exit
                let inside_point = entry.position + d * 1e-7;
                if s.contains(inside_point) {
                    let exit = s.intersect(inside_point, d, 1e-12).expect("exit must exist");
                    assert!(exit.inside);
                    assert!(exit.normal.dot(d) > -1e-6);
                }
            }
        }
        assert!(hits > 200, "sampling produced too few hits: {hits}");
    }

    #[test]
    fn mesh_shape_round_trip() {
        let s = Shape::from_config(&ShapeConfig::TriangleMesh {
            source: MeshSource::Icosphere {
                radius: 0.08,
                subdivisions: 3,
            },
            pose: Pose::default(),
        })
        .unwrap();
        let hit = s
            .intersect(vec3(0.0, 0.0, -1.0), vec3(0.0, 0.0, 1.0), 1e-12)
            .unwrap();
        assert!(hit.t > 0.9 && hit.t < 1.0);
        assert!(s.contains(Vec3::ZERO));
        assert!(!s.contains(vec3(0.1, 0.0, 0.0)));
    }

    #[test]
    fn interior_endpoint_test_matches_contains() {
        let shapes = [
            Shape::from_config(&ShapeConfig::Sphere {
                radius: 0.6,
                pose: Pose::default(),
            })
            .unwrap(),
            Shape::from_config(&ShapeConfig::RoundedBox {
                half_extents: [0.5, 0.4, 0.6],
                corner_radius: 0.1,
                pose: Pose::default(),
            })
            .unwrap(),
            Shape::from_config(&ShapeConfig::Superquadric {
                radii: [0.5, 0.6, 0.4],
                exponents: [0.8, 1.2],
                pose: Pose::default(),
            })
            .unwrap(),
        ];
        let mut rng = derived_rng(7, &[503]);
        for s in &shapes {
            for _ in 0..500 {
                let o = vec3(
                    rng.gen::<f64>() - 0.5,
                    rng.gen::<f64>() - 0.5,
                    rng.gen::<f64>() - 0.5,
                ) * 0.4;
                let d = vec3(
                    rng.gen::<f64>() * 2.0 - 1.0,
                    rng.gen::<f64>() * 2.0 - 1.0,
                    rng.gen::<f64>() * 2.0 - 1.0,
                )
                .normalized_or(vec3(0.0, 0.0, 1.0));
                let t = rng.gen::<f64>() * 0.8;
                assert_eq!(
                    s.interior_segment_stays_inside(o, d, t),
                    s.contains(o + d * t)
                );
            }
        }
    }

    #[test]
    fn degenerate_configs_rejected() {
        assert!(Shape::from_config(&ShapeConfig::Sphere {
            radius: 0.0,
            pose: Pose::default()
        })
        .is_err());
        assert!(Shape::from_config(&ShapeConfig::RoundedBox {
            half_extents: [0.1, 0.1, 0.1],
            corner_radius: 0.2,
            pose: Pose::default()
        })
        .is_err());
        assert!(Shape::from_config(&ShapeConfig::Superquadric {
            radii: [0.5, 0.5, 0.5],
            exponents: [0.2, 1.0],
            pose: Pose::default()
        })
        .is_err());
    }

    #[test]
    fn rotation_round_trip() {
        let r = Rotation::from_axis_angle(vec3(0.2, 1.0, -0.5), 1.1);
        let v = vec3(0.3, -0.7, 0.2);
        let back = r.to_local(r.to_world(v));
        assert!((back - v).length() < 1e-12);
        let w = r.to_world(v);
        assert!((w.length() - v.length()).abs() < 1e-12);
    }
}
