//! Image-method path search: line of sight plus specular reflection chains.

use crate::geometry::Vec3;
use crate::scene::{mirror_point, Scene, Triangle};

use super::SPEED_OF_LIGHT;

/// Barycentric slack when deciding whether a reflection point lies on a face.
const FACE_TOLERANCE: f64 = 1e-9;
/// Two paths whose vertices all agree within this distance (m) are the same path.
const DEDUP_TOLERANCE: f64 = 1e-9;
/// Distance (m) below which a point is treated as lying on a plane.
const PLANE_TOLERANCE: f64 = 1e-12;

/// Geometry of one propagation path, before any electromagnetic weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedPath {
    /// `tx`, then each reflection point in order, then `rx`.
    pub vertices: Vec<Vec3>,
    /// Triangle index of each reflection, parallel to the interior vertices.
    pub faces: Vec<usize>,
    /// m
    pub total_length: f64,
    /// s
    pub delay: f64,
}

impl TracedPath {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<usize>) -> TracedPath {
        let total_length = vertices.windows(2).map(|w| w[0].distance(w[1])).sum::<f64>();
        TracedPath {
            vertices,
            faces,
            total_length,
            delay: total_length / SPEED_OF_LIGHT,
        }
    }

    pub fn reflection_points(&self) -> &[Vec3] {
        &self.vertices[1..self.vertices.len() - 1]
    }

    pub fn order(&self) -> usize {
        self.faces.len()
    }

    pub fn is_line_of_sight(&self) -> bool {
        self.faces.is_empty()
    }

    fn same_geometry(&self, other: &TracedPath) -> bool {
        self.vertices.len() == other.vertices.len()
            && self
                .vertices
                .iter()
                .zip(&other.vertices)
                .all(|(a, b)| a.distance(*b) <= DEDUP_TOLERANCE)
    }
}

#[derive(Clone, Copy)]
struct Plane {
    point: Vec3,
    normal: Vec3,
}

impl Plane {
    fn of(t: &Triangle) -> Plane {
        Plane {
            point: t.vertices[0],
            normal: t.normal(),
        }
    }

    #[inline]
    fn signed_distance(&self, p: Vec3) -> f64 {
        (p - self.point).dot(self.normal)
    }

    fn coincides(&self, other: &Plane) -> bool {
        self.normal.dot(other.normal).abs() > 1.0 - 1e-12 && self.signed_distance(other.point).abs() < 1e-9
    }
}

struct Search<'a> {
    scene: &'a Scene,
    planes: Vec<Plane>,
    tx: Vec3,
    rx: Vec3,
    max_order: usize,
    faces: Vec<usize>,
    /// `images[0] = tx`, `images[i]` = tx mirrored across the first `i` faces.
    images: Vec<Vec3>,
    found: Vec<TracedPath>,
}

impl Search<'_> {
    fn descend(&mut self) {
        let depth = self.faces.len();
        let source = self.images[depth];
        for f in 0..self.planes.len() {
            let plane = self.planes[f];
            if plane.signed_distance(source).abs() < PLANE_TOLERANCE {
                continue;
            }
            if let Some(&last) = self.faces.last() {
                if last == f || self.planes[last].coincides(&plane) {
                    continue;
                }
                // after bouncing off `last` the wave stays on the side of that
                // plane where the previous image lives; `f` must reach into it
                let lp = self.planes[last];
                let side = lp.signed_distance(self.images[depth - 1]).signum();
                let reachable = self.scene.triangles()[f]
                    .vertices
                    .iter()
                    .any(|v| lp.signed_distance(*v) * side > PLANE_TOLERANCE);
                if !reachable {
                    continue;
                }
            }
            let image = mirror_point(source, &self.scene.triangles()[f]);
            self.faces.push(f);
            self.images.push(image);
            if let Some(path) = self.construct() {
                if !self.found.iter().any(|p| p.same_geometry(&path)) {
                    self.found.push(path);
                }
            }
            if self.faces.len() < self.max_order {
                self.descend();
            }
            self.faces.pop();
            self.images.pop();
        }
    }

    /// Back-project from `rx` through the image chain; `None` if any
    /// reflection point misses its face or any leg is blocked.
    fn construct(&self) -> Option<TracedPath> {
        let k = self.faces.len();
        let mut points = vec![Vec3::ZERO; k];
        let mut target = self.rx;
        for j in (0..k).rev() {
            let plane = self.planes[self.faces[j]];
            let image = self.images[j + 1];
            let dt = plane.signed_distance(target);
            let di = plane.signed_distance(image);
            if !(dt * di < 0.0) || dt.abs() < PLANE_TOLERANCE {
                return None;
            }
            let s = dt / (dt - di);
            let p = target + (image - target) * s;
            if !self.scene.triangles()[self.faces[j]].contains_coplanar_point(p, FACE_TOLERANCE) {
                return None;
            }
            points[j] = p;
            target = p;
        }
        let mut vertices = Vec::with_capacity(k + 2);
        vertices.push(self.tx);
        vertices.extend_from_slice(&points);
        vertices.push(self.rx);
        if !vertices.windows(2).all(|w| self.scene.segment_visible(w[0], w[1])) {
            return None;
        }
        Some(TracedPath::new(vertices, self.faces.clone()))
    }
}

/// All line-of-sight and specular paths with at most `max_order`
/// reflections, sorted by ascending delay.
pub fn trace_paths(scene: &Scene, tx: Vec3, rx: Vec3, max_order: usize) -> Vec<TracedPath> {
    let mut found = Vec::new();
    if scene.segment_visible(tx, rx) {
        found.push(TracedPath::new(vec![tx, rx], Vec::new()));
    }
    if max_order > 0 && !scene.is_empty() {
        let mut search = Search {
            scene,
            planes: scene.triangles().iter().map(Plane::of).collect(),
            tx,
            rx,
            max_order,
            faces: Vec::with_capacity(max_order),
            images: vec![tx],
            found,
        };
        search.descend();
        found = search.found;
    }
    found.sort_by(|a, b| {
        a.delay
            .total_cmp(&b.delay)
            .then(a.order().cmp(&b.order()))
            .then_with(|| {
                a.vertices
                    .iter()
                    .zip(&b.vertices)
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::reflect;
    use crate::scene::Material;

    fn ground(half: f64) -> Scene {
        let a = Vec3::new(-half, -half, 0.0);
        let b = Vec3::new(half, -half, 0.0);
        let c = Vec3::new(half, half, 0.0);
        let d = Vec3::new(-half, half, 0.0);
        Scene::new(
            vec![Triangle::new(a, b, c, 0), Triangle::new(a, c, d, 0)],
            vec![Material::new("ground", 15.0, 0.005).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn free_space_has_only_los() {
        let tx = Vec3::new(1.0, 2.0, 3.0);
        let rx = Vec3::new(-4.0, 0.5, 1.0);
        let paths = trace_paths(&Scene::empty(), tx, rx, 3);
        assert_eq!(paths.len(), 1);
        assert!(paths[0].is_line_of_sight());
        assert_eq!(paths[0].total_length, tx.distance(rx));
    }

    #[test]
    fn ground_reflection_geometry() {
        let tx = Vec3::new(0.0, 0.0, 1.0);
        let rx = Vec3::new(10.0, 0.0, 1.0);
        let paths = trace_paths(&ground(1000.0), tx, rx, 1);
        assert_eq!(paths.len(), 2);
        assert!((paths[0].total_length - 10.0).abs() < 1e-12);
        assert!((paths[1].total_length - 104f64.sqrt()).abs() < 1e-12);
        let p = paths[1].reflection_points()[0];
        assert!((p - Vec3::new(5.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn reflections_are_specular_and_unfold_to_images() {
        // floor plus a wall at x = 6
        let m = Material::new("m", 4.0, 0.01).unwrap();
        let mut tris = ground(50.0).triangles().to_vec();
        let w = [
            Vec3::new(6.0, -50.0, 0.0),
            Vec3::new(6.0, 50.0, 0.0),
            Vec3::new(6.0, 50.0, 10.0),
            Vec3::new(6.0, -50.0, 10.0),
        ];
        tris.push(Triangle::new(w[0], w[1], w[2], 0));
        tris.push(Triangle::new(w[0], w[2], w[3], 0));
        let scene = Scene::new(tris, vec![m]).unwrap();
        let tx = Vec3::new(0.0, 0.0, 1.5);
        let rx = Vec3::new(3.0, 1.0, 1.2);
        let paths = trace_paths(&scene, tx, rx, 2);
        // LOS, floor, wall, and one double bounce: in a right-angle corner
        // both orders share an image and only one of them is realizable
        let orders: Vec<usize> = paths.iter().map(|p| p.order()).collect();
        assert_eq!(orders.iter().filter(|&&o| o == 2).count(), 1, "{orders:?}");
        assert_eq!(paths.len(), 4);
        for p in &paths {
            let mut image = tx;
            for &f in &p.faces {
                image = mirror_point(image, &scene.triangles()[f]);
            }
            assert!((image.distance(rx) - p.total_length).abs() < 1e-9);
            for (j, &f) in p.faces.iter().enumerate() {
                let d_in = (p.vertices[j + 1] - p.vertices[j]).normalized();
                let d_out = (p.vertices[j + 2] - p.vertices[j + 1]).normalized();
                let n = scene.triangles()[f].normal();
                assert!((reflect(d_in, n) - d_out).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn shared_edge_reflection_is_deduplicated() {
        // reflection point (0,0,0) lies on the diagonal shared by both ground triangles
        let tx = Vec3::new(-3.0, -3.0, 2.0);
        let rx = Vec3::new(3.0, 3.0, 2.0);
        let paths = trace_paths(&ground(10.0), tx, rx, 1);
        assert_eq!(paths.len(), 2);
    }

    #[test]
    fn blocked_pair_is_empty() {
        // tx under a huge floor, rx above it
        let paths = trace_paths(&ground(100.0), Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 0.0, 1.0), 2);
        assert!(paths.is_empty());
    }
}
