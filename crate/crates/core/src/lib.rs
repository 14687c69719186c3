//! Ray-traced wireless channels for packet-level network simulation.
//!
//! A [`scene::Scene`] holds triangle geometry and materials. The
//! [`raytracer`] finds specular paths between two points and turns them into
//! a path loss, delay and frequency response. A [`server::ChannelServer`]
//! owns node mobility and answers channel requests over a small binary
//! protocol, and [`netsim`] drives an AP-to-station packet simulation that
//! caches the answers in a [`channel_cache::ChannelCache`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel_cache;
pub mod client;
pub mod geometry;
pub mod mobility;
pub mod netsim;
pub mod protocol;
pub mod raytracer;
pub mod scene;
pub mod server;

pub use channel_cache::{coherence_ttl, ChannelCache, ChannelRecord};
pub use geometry::Vec3;
pub use raytracer::{compute_cir, compute_link, trace_paths, RadioParams};
pub use scene::{load_scene, Material, Scene, Triangle};
