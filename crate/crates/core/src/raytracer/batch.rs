//! Point-to-multipoint batches computed data-parallel on the rayon pool.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::channel_cache::{coherence_ttl, friis_prescreen, ChannelRecord, RecordSource};
use crate::geometry::Vec3;
use crate::mobility::{NodeId, NodeState};
use crate::scene::Scene;

use super::{compute_link, LinkChannel, RadioParams};

/// Skip ray tracing for links whose free-space receive power is already
/// below `noise_floor - margin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prescreen {
    /// dBm
    pub noise_floor: f64,
    /// dB
    pub margin: f64,
}

/// One link in a batch: both endpoints as they are at `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkRequest {
    pub rx_id: NodeId,
    pub tx_position: Vec3,
    pub tx_velocity: Vec3,
    pub rx_position: Vec3,
    pub rx_velocity: Vec3,
    /// Simulation time the record becomes valid.
    pub time: f64,
    pub source: RecordSource,
}

fn position_key(a: Vec3, b: Vec3) -> [u64; 6] {
    let (a, b) = if b.total_cmp(&a).is_lt() { (b, a) } else { (a, b) };
    [
        a.x.to_bits(),
        a.y.to_bits(),
        a.z.to_bits(),
        b.x.to_bits(),
        b.y.to_bits(),
        b.z.to_bits(),
    ]
}

/// Compute one [`ChannelRecord`] per link, in input order. Links sharing the
/// same endpoint positions are traced once.
pub fn compute_batch(
    scene: &Scene,
    links: &[LinkRequest],
    params: &RadioParams,
    prescreen: Option<Prescreen>,
) -> Vec<ChannelRecord> {
    let mut slot_of = HashMap::with_capacity(links.len());
    let mut unique: Vec<(Vec3, Vec3)> = Vec::new();
    let slots: Vec<usize> = links
        .iter()
        .map(|l| {
            *slot_of
                .entry(position_key(l.tx_position, l.rx_position))
                .or_insert_with(|| {
                    unique.push((l.tx_position, l.rx_position));
                    unique.len() - 1
                })
        })
        .collect();

    let channels: Vec<(LinkChannel, bool)> = unique
        .par_iter()
        .map(|&(a, b)| {
            if let Some(ps) = prescreen {
                if let Some(rec) = friis_prescreen(a, b, params, ps.noise_floor, ps.margin, 0.0, f64::INFINITY) {
                    return (
                        LinkChannel {
                            path_loss: rec.path_loss,
                            delay: rec.delay,
                            cfr: rec.cfr,
                        },
                        true,
                    );
                }
            }
            (compute_link(scene, a, b, params), false)
        })
        .collect();

    links
        .iter()
        .zip(slots)
        .map(|(l, slot)| {
            let (ch, prescreened) = &channels[slot];
            ChannelRecord {
                path_loss: ch.path_loss,
                delay: ch.delay,
                cfr: ch.cfr.clone(),
                computed_at: l.time,
                ttl: coherence_ttl((l.tx_velocity - l.rx_velocity).norm(), params.center_frequency),
                source: if *prescreened {
                    RecordSource::FriisPrescreen
                } else {
                    l.source
                },
            }
        })
        .collect()
}

/// Channels from `tx` to every receiver at their current states.
pub fn compute_p2mp(
    scene: &Scene,
    tx: &NodeState,
    receivers: &[NodeState],
    params: &RadioParams,
    now: f64,
) -> Vec<ChannelRecord> {
    let links: Vec<LinkRequest> = receivers
        .iter()
        .map(|rx| LinkRequest {
            rx_id: rx.node_id,
            tx_position: tx.position,
            tx_velocity: tx.velocity,
            rx_position: rx.position,
            rx_velocity: rx.velocity,
            time: now,
            source: RecordSource::Raytraced,
        })
        .collect();
    compute_batch(scene, &links, params, None)
}
