//! Node mobility: stationary nodes and a horizontal random walk that
//! bounces specularly off scene geometry.
//!
//! Each node owns a ChaCha8 stream keyed by `(seed, node_id)`: the 32-byte
//! key is `seed` (little-endian u64) followed by `node_id` (little-endian
//! u64) and 16 zero bytes, stream 0. A uniform draw is the top 53 bits of
//! the next 64-bit output scaled by 2⁻⁵³. Headings are `θ = 2π·u`. Because
//! the stream belongs to the node, trajectories depend only on the seed and
//! the sequence of steps, never on network traffic, which is what makes
//! [`predict`] exact.

use std::f64::consts::TAU;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{reflect, Vec3};
use crate::scene::Scene;

pub type NodeId = u64;

/// Post-bounce offset from the wall (m).
pub const BOUNCE_OFFSET: f64 = 1e-4;
pub const MAX_BOUNCES_PER_STEP: usize = 16;
pub const DEFAULT_DIRECTION_HOLD: f64 = 2.0;
pub const DEFAULT_TICK: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityModel {
    ConstantPosition,
    #[serde(rename = "random_walk_3d")]
    RandomWalk3d,
}

/// Deterministic per-node random stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRng(ChaCha8Rng);

impl NodeRng {
    pub fn new(seed: u64, stream: u64) -> NodeRng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&stream.to_le_bytes());
        NodeRng(ChaCha8Rng::from_seed(key))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub node_id: NodeId,
    pub position: Vec3,
    /// m/s
    pub velocity: Vec3,
    /// m/s
    pub speed: f64,
    pub model: MobilityModel,
    /// Seconds of travel left before the heading is redrawn.
    pub direction_hold: f64,
    pub hold_period: f64,
    pub rng: NodeRng,
}

impl NodeState {
    pub fn stationary(node_id: NodeId, position: Vec3) -> NodeState {
        NodeState::new(
            node_id,
            position,
            MobilityModel::ConstantPosition,
            0.0,
            0,
            DEFAULT_DIRECTION_HOLD,
        )
    }

    pub fn new(
        node_id: NodeId,
        position: Vec3,
        model: MobilityModel,
        speed: f64,
        seed: u64,
        hold_period: f64,
    ) -> NodeState {
        let mut s = NodeState {
            node_id,
            position,
            velocity: Vec3::ZERO,
            speed: 0.0,
            model,
            direction_hold: hold_period,
            hold_period,
            rng: NodeRng::new(seed, node_id),
        };
        if model == MobilityModel::RandomWalk3d && speed > 0.0 {
            s.speed = speed;
            s.redraw_heading();
        } else {
            s.model = MobilityModel::ConstantPosition;
        }
        s
    }

    pub fn is_mobile(&self) -> bool {
        self.model == MobilityModel::RandomWalk3d
    }

    fn redraw_heading(&mut self) {
        let theta = TAU * self.rng.next_f64();
        self.velocity = Vec3::new(theta.cos(), theta.sin(), 0.0) * self.speed;
    }

    /// In-place form of [`step`].
    pub fn advance(&mut self, dt: f64, scene: &Scene) {
        if !self.is_mobile() {
            return;
        }
        let mut remaining = self.speed * dt;
        let mut bounces = 0;
        while remaining > 0.0 {
            let dir = self.velocity / self.speed;
            match scene.intersect(self.position, dir, remaining) {
                Some(_) if bounces == MAX_BOUNCES_PER_STEP => break,
                Some(hit) => {
                    self.position = hit.point + hit.normal * BOUNCE_OFFSET;
                    remaining -= hit.distance;
                    self.velocity = reflect_velocity(self.velocity, hit.normal);
                    bounces += 1;
                }
                None => {
                    self.position += dir * remaining;
                    remaining = 0.0;
                }
            }
        }
        self.direction_hold -= dt;
        if self.direction_hold <= 1e-12 {
            self.redraw_heading();
            self.direction_hold = self.hold_period;
        }
    }

    pub fn advance_ticks(&mut self, ticks: u64, dt: f64, scene: &Scene) {
        if self.is_mobile() {
            for _ in 0..ticks {
                self.advance(dt, scene);
            }
        }
    }
}

/// `v - 2(v·n)n`.
pub fn reflect_velocity(v: Vec3, normal: Vec3) -> Vec3 {
    reflect(v, normal)
}

/// Advance a copy of `state` by `dt`.
pub fn step(state: &NodeState, dt: f64, scene: &Scene) -> NodeState {
    let mut next = state.clone();
    next.advance(dt, scene);
    next
}

/// `floor(horizon / dt)` future `(time, position)` samples, obtained by
/// stepping a copy of the state; the original is untouched.
pub fn predict(state: &NodeState, now: f64, horizon: f64, dt: f64, scene: &Scene) -> Vec<(f64, Vec3)> {
    let n = (horizon / dt + 1e-9).floor() as u64;
    let mut s = state.clone();
    (1..=n)
        .map(|i| {
            s.advance(dt, scene);
            (now + i as f64 * dt, s.position)
        })
        .collect()
}

/// Index of the mobility tick that governs simulation time `t`.
pub fn tick_of(t: f64, dt: f64) -> u64 {
    (t / dt + 1e-9).floor().max(0.0) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Material, Triangle};

    fn wall_at_x2() -> Scene {
        let a = Vec3::new(2.0, -10.0, -10.0);
        let b = Vec3::new(2.0, 10.0, -10.0);
        let c = Vec3::new(2.0, 10.0, 10.0);
        let d = Vec3::new(2.0, -10.0, 10.0);
        Scene::new(
            vec![Triangle::new(a, b, c, 0), Triangle::new(a, c, d, 0)],
            vec![Material::new("w", 3.0, 0.0).unwrap()],
        )
        .unwrap()
    }

    fn walker(id: NodeId, position: Vec3, heading: Vec3) -> NodeState {
        let mut s = NodeState::new(id, position, MobilityModel::RandomWalk3d, heading.norm(), 1, 100.0);
        s.velocity = heading;
        s
    }

    #[test]
    fn stationary_nodes_never_move() {
        let s = NodeState::stationary(3, Vec3::new(1.0, 2.0, 3.0));
        let n = step(&s, 5.0, &wall_at_x2());
        assert_eq!(n, s);
        assert!(predict(&s, 0.0, 1.0, 0.25, &Scene::empty())
            .iter()
            .all(|&(_, p)| p == s.position));
    }

    #[test]
    fn billiard_bounce() {
        let s = walker(1, Vec3::new(1.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 0.0));
        let n = step(&s, 2.0, &wall_at_x2());
        assert!((n.position.x - (1.0 - BOUNCE_OFFSET)).abs() < 1e-9);
        assert_eq!(n.position.y, 0.0);
        assert_eq!(n.position.z, 1.0);
        assert_eq!(n.velocity, Vec3::new(-1.0, 0.0, 0.0));
    }

    #[test]
    fn reflect_velocity_cases() {
        assert_eq!(
            reflect_velocity(Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)),
            Vec3::new(-1.0, 0.0, 0.0)
        );
        assert_eq!(
            reflect_velocity(Vec3::new(1.0, 0.0, -1.0), Vec3::new(0.0, 0.0, 1.0)),
            Vec3::new(1.0, 0.0, 1.0)
        );
    }

    #[test]
    fn predict_sample_count_and_straight_line() {
        let s = walker(2, Vec3::ZERO, Vec3::new(0.6, 0.8, 0.0));
        let samples = predict(&s, 3.0, 0.04, 0.01, &Scene::empty());
        assert_eq!(samples.len(), 4);
        for (i, &(t, p)) in samples.iter().enumerate() {
            let k = (i + 1) as f64;
            assert!((t - (3.0 + k * 0.01)).abs() < 1e-12);
            let expected = s.velocity * (k * 0.01);
            assert!((p - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn headings_are_horizontal_and_reproducible() {
        let a = NodeState::new(5, Vec3::ZERO, MobilityModel::RandomWalk3d, 1.5, 42, 2.0);
        let b = NodeState::new(5, Vec3::ZERO, MobilityModel::RandomWalk3d, 1.5, 42, 2.0);
        let c = NodeState::new(6, Vec3::ZERO, MobilityModel::RandomWalk3d, 1.5, 42, 2.0);
        assert_eq!(a, b);
        assert_ne!(a.velocity, c.velocity);
        assert_eq!(a.velocity.z, 0.0);
        assert!((a.velocity.norm() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn heading_redrawn_after_hold() {
        let mut s = NodeState::new(9, Vec3::ZERO, MobilityModel::RandomWalk3d, 1.0, 7, 0.05);
        let v0 = s.velocity;
        for _ in 0..4 {
            s.advance(0.01, &Scene::empty());
        }
        assert_eq!(s.velocity, v0);
        s.advance(0.01, &Scene::empty());
        assert_ne!(s.velocity, v0);
        assert!((s.direction_hold - 0.05).abs() < 1e-15);
    }

    #[test]
    fn rng_is_uniformish() {
        let mut r = NodeRng::new(1, 2);
        let xs: Vec<f64> = (0..10_000).map(|_| r.next_f64()).collect();
        assert!(xs.iter().all(|x| (0.0..1.0).contains(x)));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.02);
    }

    #[test]
    fn tick_index() {
        assert_eq!(tick_of(0.0, 0.01), 0);
        assert_eq!(tick_of(0.03, 0.01), 3);
        assert_eq!(tick_of(0.0399, 0.01), 3);
    }
}
