//! Median-split bounding volume hierarchy over scene triangles.

use crate::geometry::{Aabb, Vec3};

use super::Triangle;

const MAX_LEAF_TRIANGLES: usize = 4;

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, count: usize },
    Interior { left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

/// Flattened BVH. `order` maps leaf ranges back to triangle indices.
#[derive(Debug, Clone, Default)]
pub(crate) struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    pub(crate) fn build(triangles: &[Triangle]) -> Bvh {
        if triangles.is_empty() {
            return Bvh::default();
        }
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let centroids: Vec<Vec3> = triangles.iter().map(Triangle::centroid).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / MAX_LEAF_TRIANGLES + 1);
        build_node(triangles, &centroids, &mut order, 0, &mut nodes);
        Bvh { nodes, order }
    }

    /// Visit every triangle whose leaf box the ray reaches before `*t_max`.
    /// The visitor may shrink `t_max`; returning `true` stops traversal.
    pub(crate) fn traverse<F>(&self, origin: Vec3, dir: Vec3, t_max: &mut f64, mut visit: F)
    where
        F: FnMut(usize, &mut f64) -> bool,
    {
        if self.nodes.is_empty() {
            return;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack: Vec<usize> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if node.bounds.ray_entry(origin, inv, *t_max).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &tri in &self.order[start..start + count] {
                        if visit(tri, t_max) {
                            return;
                        }
                    }
                }
                NodeKind::Interior { left, right } => {
                    // near child last so it is popped first
                    let split_axis_positive = {
                        let l = &self.nodes[left].bounds;
                        let r = &self.nodes[right].bounds;
                        let lc = (l.min + l.max) * 0.5;
                        let rc = (r.min + r.max) * 0.5;
                        (rc - lc).dot(dir) >= 0.0
                    };
                    if split_axis_positive {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
    }
}

fn build_node(
    triangles: &[Triangle],
    centroids: &[Vec3],
    order: &mut [usize],
    offset: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::EMPTY;
    let mut centroid_bounds = Aabb::EMPTY;
    for &i in order.iter() {
        for v in &triangles[i].vertices {
            bounds.grow(*v);
        }
        centroid_bounds.grow(centroids[i]);
    }
    let idx = nodes.len();
    if order.len() <= MAX_LEAF_TRIANGLES {
        nodes.push(Node {
            bounds,
            kind: NodeKind::Leaf {
                start: offset,
                count: order.len(),
            },
        });
        return idx;
    }

    let ext = centroid_bounds.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
    });

    nodes.push(Node {
        bounds,
        kind: NodeKind::Leaf { start: 0, count: 0 },
    });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(triangles, centroids, lo, offset, nodes);
    let right = build_node(triangles, centroids, hi, offset + mid, nodes);
    nodes[idx].kind = NodeKind::Interior { left, right };
    idx
}
