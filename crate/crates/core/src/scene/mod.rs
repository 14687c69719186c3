//! Static 3D scenes: triangle geometry with electromagnetic materials.
//!
//! A [`Scene`] is built once (usually by [`load_scene`]) and is immutable
//! afterwards, so it can be shared across worker threads. Surfaces are
//! two-sided: a [`Hit`] normal always faces back toward the ray origin.

mod bvh;
mod loader;

use std::collections::HashSet;

use thiserror::Error;

use crate::geometry::{Aabb, Vec3};
use bvh::Bvh;

pub use loader::{load_scene, parse_obj};

/// Rays start this far past their origin so a surface never re-hits itself.
pub const SELF_INTERSECTION_EPS: f64 = 1e-6;

/// Triangles with less area than this (m²) are rejected as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scene descriptor {path}: {message}")]
    Descriptor { path: String, message: String },
    #[error("{file}:{line}: {message}")]
    Obj { file: String, line: usize, message: String },
    #[error("shape {file} references material \"{name}\" which is not in the material table")]
    UnknownMaterial { name: String, file: String },
    #[error("material \"{0}\" is declared more than once")]
    DuplicateMaterial(String),
    #[error("material \"{name}\": {reason}")]
    InvalidMaterial { name: String, reason: String },
    #[error("{file}: face {face} has zero area")]
    DegenerateFace { file: String, face: usize },
    #[error("triangle {triangle} references material index {index}, but only {count} materials exist")]
    MaterialIndex {
        triangle: usize,
        index: usize,
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    pub relative_permittivity: f64,
    /// S/m
    pub conductivity: f64,
}

impl Material {
    pub fn new(name: impl Into<String>, relative_permittivity: f64, conductivity: f64) -> Result<Material, SceneError> {
        let name = name.into();
        if !(relative_permittivity >= 1.0 && relative_permittivity.is_finite()) {
            return Err(SceneError::InvalidMaterial {
                name,
                reason: format!("relative permittivity {relative_permittivity} must be >= 1"),
            });
        }
        if !(conductivity >= 0.0 && conductivity.is_finite()) {
            return Err(SceneError::InvalidMaterial {
                name,
                reason: format!("conductivity {conductivity} must be >= 0"),
            });
        }
        Ok(Material {
            name,
            relative_permittivity,
            conductivity,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub vertices: [Vec3; 3],
    pub material_index: usize,
}

impl Triangle {
    pub fn new(a: Vec3, b: Vec3, c: Vec3, material_index: usize) -> Triangle {
        Triangle {
            vertices: [a, b, c],
            material_index,
        }
    }

    fn edges(&self) -> (Vec3, Vec3) {
        (self.vertices[1] - self.vertices[0], self.vertices[2] - self.vertices[0])
    }

    pub fn area(&self) -> f64 {
        let (e1, e2) = self.edges();
        0.5 * e1.cross(e2).norm()
    }

    /// Unit normal from the vertex winding.
    pub fn normal(&self) -> Vec3 {
        let (e1, e2) = self.edges();
        e1.cross(e2).normalized()
    }

    pub fn centroid(&self) -> Vec3 {
        (self.vertices[0] + self.vertices[1] + self.vertices[2]) / 3.0
    }

    /// Signed distance of `p` from the supporting plane, positive on the
    /// winding-normal side.
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        (p - self.vertices[0]).dot(self.normal())
    }

    /// Möller–Trumbore. Returns the ray parameter of the crossing, without
    /// any range check; `None` when the ray misses or is parallel.
    #[inline]
    pub fn ray_parameter(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        let (e1, e2) = self.edges();
        let p = dir.cross(e2);
        let det = e1.dot(p);
        if det.abs() <= 1e-12 * e1.norm() * e2.norm() {
            return None;
        }
        let inv = 1.0 / det;
        let s = origin - self.vertices[0];
        let u = s.dot(p) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(e1);
        let v = dir.dot(q) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        Some(e2.dot(q) * inv)
    }

    /// Barycentric containment of a point assumed to lie on the plane.
    /// `tol` is a relative slack on the barycentric coordinates.
    pub fn contains_coplanar_point(&self, p: Vec3, tol: f64) -> bool {
        let (e1, e2) = self.edges();
        let w = p - self.vertices[0];
        let d11 = e1.dot(e1);
        let d12 = e1.dot(e2);
        let d22 = e2.dot(e2);
        let dw1 = w.dot(e1);
        let dw2 = w.dot(e2);
        let denom = d11 * d22 - d12 * d12;
        let v = (d22 * dw1 - d12 * dw2) / denom;
        let w2 = (d11 * dw2 - d12 * dw1) / denom;
        v >= -tol && w2 >= -tol && v + w2 <= 1.0 + tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub triangle_index: usize,
    pub point: Vec3,
    /// Unit normal facing the side the ray came from.
    pub normal: Vec3,
}

#[derive(Debug, Clone)]
pub struct Scene {
    triangles: Vec<Triangle>,
    materials: Vec<Material>,
    bounds: Aabb,
    bvh: Bvh,
}

impl Scene {
    pub fn empty() -> Scene {
        Scene {
            triangles: Vec::new(),
            materials: Vec::new(),
            bounds: Aabb::EMPTY,
            bvh: Bvh::default(),
        }
    }

    /// Validate geometry and materials, then build the acceleration structure.
    pub fn new(triangles: Vec<Triangle>, materials: Vec<Material>) -> Result<Scene, SceneError> {
        let mut seen = HashSet::new();
        for m in &materials {
            if !seen.insert(m.name.as_str()) {
                return Err(SceneError::DuplicateMaterial(m.name.clone()));
            }
            Material::new(m.name.clone(), m.relative_permittivity, m.conductivity)?;
        }
        let mut bounds = Aabb::EMPTY;
        for (i, t) in triangles.iter().enumerate() {
            if t.material_index >= materials.len() {
                return Err(SceneError::MaterialIndex {
                    triangle: i,
                    index: t.material_index,
                    count: materials.len(),
                });
            }
            if !(t.area() > MIN_TRIANGLE_AREA) {
                return Err(SceneError::DegenerateFace {
                    file: "<inline>".into(),
                    face: i,
                });
            }
            for v in &t.vertices {
                bounds.grow(*v);
            }
        }
        let bvh = Bvh::build(&triangles);
        Ok(Scene {
            triangles,
            materials,
            bounds,
            bvh,
        })
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn materials(&self) -> &[Material] {
        &self.materials
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn material_of(&self, triangle_index: usize) -> &Material {
        &self.materials[self.triangles[triangle_index].material_index]
    }

    /// Nearest hit with distance in `(SELF_INTERSECTION_EPS, t_max]`.
    pub fn intersect(&self, origin: Vec3, direction: Vec3, t_max: f64) -> Option<Hit> {
        let mut best: Option<(f64, usize)> = None;
        let mut limit = t_max;
        self.bvh.traverse(origin, direction, &mut limit, |i, limit| {
            if let Some(t) = self.triangles[i].ray_parameter(origin, direction) {
                if t > SELF_INTERSECTION_EPS && t <= *limit {
                    let better = match best {
                        None => true,
                        Some((bt, bi)) => t < bt || (t == bt && i < bi),
                    };
                    if better {
                        best = Some((t, i));
                        *limit = t;
                    }
                }
            }
            false
        });
        best.map(|(t, i)| {
            let n = self.triangles[i].normal();
            let normal = if n.dot(direction) > 0.0 { -n } else { n };
            Hit {
                distance: t,
                triangle_index: i,
                point: origin + direction * t,
                normal,
            }
        })
    }

    /// Whether any triangle crosses the ray strictly inside
    /// `(SELF_INTERSECTION_EPS, t_end)`.
    fn occluded(&self, origin: Vec3, direction: Vec3, t_end: f64) -> bool {
        let mut blocked = false;
        let mut limit = t_end;
        self.bvh.traverse(origin, direction, &mut limit, |i, _| {
            if let Some(t) = self.triangles[i].ray_parameter(origin, direction) {
                if t > SELF_INTERSECTION_EPS && t < t_end {
                    blocked = true;
                    return true;
                }
            }
            false
        });
        blocked
    }

    /// True iff no triangle crosses the open segment `(a, b)`, ignoring
    /// crossings within [`SELF_INTERSECTION_EPS`] of either end.
    pub fn segment_visible(&self, a: Vec3, b: Vec3) -> bool {
        if self.triangles.is_empty() {
            return true;
        }
        // evaluate from a canonical endpoint so the answer is exactly symmetric
        let (a, b) = if b.total_cmp(&a).is_lt() { (b, a) } else { (a, b) };
        let delta = b - a;
        let len = delta.norm();
        if len <= 2.0 * SELF_INTERSECTION_EPS {
            return true;
        }
        !self.occluded(a, delta / len, len - SELF_INTERSECTION_EPS)
    }
}

/// Reflect `point` across the supporting plane of `triangle`.
pub fn mirror_point(point: Vec3, triangle: &Triangle) -> Vec3 {
    let n = triangle.normal();
    let d = (point - triangle.vertices[0]).dot(n);
    point - n * (2.0 * d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn floor_scene() -> Scene {
        let m = Material::new("concrete", 5.24, 0.16).unwrap();
        let a = Vec3::new(-10.0, -10.0, 0.0);
        let b = Vec3::new(10.0, -10.0, 0.0);
        let c = Vec3::new(10.0, 10.0, 0.0);
        let d = Vec3::new(-10.0, 10.0, 0.0);
        Scene::new(vec![Triangle::new(a, b, c, 0), Triangle::new(a, c, d, 0)], vec![m]).unwrap()
    }

    #[test]
    fn downward_ray_hits_floor() {
        let s = floor_scene();
        let hit = s
            .intersect(Vec3::new(0.3, 0.2, 1.0), Vec3::new(0.0, 0.0, -1.0), 100.0)
            .unwrap();
        assert!((hit.distance - 1.0).abs() < 1e-12);
        assert!((hit.normal - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        assert!(hit.point.z.abs() < 1e-12);
    }

    #[test]
    fn normal_faces_the_ray_from_below() {
        let s = floor_scene();
        let hit = s
            .intersect(Vec3::new(0.0, 0.0, -2.0), Vec3::new(0.0, 0.0, 1.0), 100.0)
            .unwrap();
        assert!((hit.normal - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!((hit.distance - 2.0).abs() < 1e-12);
    }

    #[test]
    fn away_and_parallel_rays_miss() {
        let s = floor_scene();
        assert!(s
            .intersect(Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 1.0), 100.0)
            .is_none());
        assert!(s
            .intersect(Vec3::new(-20.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), 100.0)
            .is_none());
    }

    #[test]
    fn t_max_is_inclusive_and_eps_guards_start() {
        let s = floor_scene();
        let down = Vec3::new(0.0, 0.0, -1.0);
        assert!(s.intersect(Vec3::new(0.0, 0.0, 1.0), down, 1.0).is_some());
        assert!(s.intersect(Vec3::new(0.0, 0.0, 1.0), down, 0.999).is_none());
        assert!(s.intersect(Vec3::new(0.0, 0.0, 1e-7), down, 1.0).is_none());
    }

    #[test]
    fn mirror_axis_plane_and_fixed_point() {
        let t = Triangle::new(
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            0,
        );
        assert_eq!(mirror_point(Vec3::new(1.0, 2.0, 3.0), &t), Vec3::new(1.0, 2.0, -3.0));
        let on = Vec3::new(0.25, 0.7, 0.0);
        assert!((mirror_point(on, &t) - on).norm() < 1e-12);
    }

    #[test]
    fn mirror_slanted_plane_matches_closed_form() {
        // plane x + z = 1 through q = (1, 0, 0), normal (1,0,1)/sqrt(2)
        let t = Triangle::new(
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 1.0, 0.0),
            0,
        );
        let p = Vec3::new(0.0, 0.0, 2.0);
        let n = Vec3::new(1.0, 0.0, 1.0) / 2f64.sqrt();
        let q = Vec3::new(1.0, 0.0, 0.0);
        let expected = p - n * (2.0 * (p - q).dot(n));
        assert!((mirror_point(p, &t) - expected).norm() < 1e-12);
        // (0,0,2) sits 1/sqrt(2) above the plane, so it lands at (-1, 0, 1)
        assert!((expected - Vec3::new(-1.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn visibility_in_empty_and_blocked_scenes() {
        let e = Scene::empty();
        assert!(e.segment_visible(Vec3::ZERO, Vec3::new(5.0, 1.0, 2.0)));
        let s = floor_scene();
        assert!(!s.segment_visible(Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, -1.0)));
        assert!(s.segment_visible(Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 2.0)));
        // endpoint resting on the surface is not an occlusion
        assert!(s.segment_visible(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 2.0)));
    }

    #[test]
    fn rejects_bad_tables() {
        let m = Material::new("a", 2.0, 0.0).unwrap();
        let tri = Triangle::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), 1);
        assert!(matches!(
            Scene::new(vec![tri], vec![m.clone()]),
            Err(SceneError::MaterialIndex { .. })
        ));
        assert!(matches!(
            Scene::new(vec![], vec![m.clone(), m]),
            Err(SceneError::DuplicateMaterial(_))
        ));
        assert!(Material::new("x", 0.5, 0.0).is_err());
        assert!(Material::new("x", 2.0, -1.0).is_err());
        let flat = Triangle::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), 0);
        assert!(matches!(
            Scene::new(vec![flat], vec![Material::new("a", 2.0, 0.0).unwrap()]),
            Err(SceneError::DegenerateFace { .. })
        ));
    }
}
