//! Packet-level discrete-event simulation of a single AP sending downlink
//! traffic to its stations, with channels obtained from the channel server
//! through a [`ChannelCache`].

mod config;
mod events;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::channel_cache::{friis_prescreen, CacheStats, ChannelCache, ChannelRecord, RecordSource};
use crate::client::{ChannelService, ClientError};
use crate::geometry::Vec3;
use crate::mobility::{MobilityModel, NodeId, NodeRng};
use crate::protocol::{ChannelRequest, InitRequest, NodeSpec, SceneSource, WireMessage};
use crate::raytracer::Cfr;

pub use config::{ConfigError, MobilityConfig, PrefetchConfig, ScenarioConfig};
pub use events::{Event, EventQueue, PastEvent};

/// The access point is always node 0; stations are numbered from 1.
pub const AP_NODE: NodeId = 0;

/// Traffic jitter streams live in a separate key space from mobility streams.
const TRAFFIC_STREAM: u64 = 1 << 63;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("channel server rejected init: {0}")]
    InitRejected(String),
    #[error("channel server error: {0}")]
    Server(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("scheduler logic error: {0}")]
    Logic(#[from] PastEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PacketResult {
    pub packet_id: u64,
    pub tx: NodeId,
    pub rx: NodeId,
    pub tx_time: f64,
    /// dBm
    pub rx_power: f64,
    /// dB
    pub snr: f64,
    /// s
    pub prop_delay: f64,
    pub delivered: bool,
    pub cache_hit: bool,
}

#[derive(Debug, Clone)]
pub struct ScenarioMetrics {
    pub packets: Vec<PacketResult>,
    pub cache: CacheStats,
    pub channel_requests: u64,
    pub records_received: u64,
    pub wall_clock_s: f64,
}

#[derive(Debug, Serialize)]
struct CacheSummary {
    hits: u64,
    misses: u64,
    prescreen_skips: u64,
    prefetch_hits: u64,
    hit_rate: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    packets: usize,
    delivered: usize,
    delivery_ratio: f64,
    mean_rx_power_dbm: f64,
    cache: CacheSummary,
    channel_requests: u64,
    records_received: u64,
    wall_clock_s: f64,
}

impl ScenarioMetrics {
    pub fn delivery_ratio(&self) -> f64 {
        if self.packets.is_empty() {
            return 0.0;
        }
        self.packets.iter().filter(|p| p.delivered).count() as f64 / self.packets.len() as f64
    }

    pub fn mean_rx_power(&self) -> f64 {
        if self.packets.is_empty() {
            return f64::NAN;
        }
        self.packets.iter().map(|p| p.rx_power).sum::<f64>() / self.packets.len() as f64
    }

    /// One row per packet; deterministic for a given config and seed.
    pub fn packets_csv(&self) -> String {
        let mut out = String::from("packet_id,tx,rx,tx_time,rx_power_dbm,snr_db,prop_delay_s,delivered,cache_hit\n");
        for p in &self.packets {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                p.packet_id,
                p.tx,
                p.rx,
                p.tx_time,
                p.rx_power,
                p.snr,
                p.prop_delay,
                p.delivered as u8,
                p.cache_hit as u8
            );
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let s = Summary {
            packets: self.packets.len(),
            delivered: self.packets.iter().filter(|p| p.delivered).count(),
            delivery_ratio: self.delivery_ratio(),
            mean_rx_power_dbm: self.mean_rx_power(),
            cache: CacheSummary {
                hits: self.cache.hits,
                misses: self.cache.misses,
                prescreen_skips: self.cache.prescreen_skips,
                prefetch_hits: self.cache.prefetch_hits,
                hit_rate: self.cache.hit_rate(),
            },
            channel_requests: self.channel_requests,
            records_received: self.records_received,
            wall_clock_s: self.wall_clock_s,
        };
        serde_json::to_string_pretty(&s).expect("summary serializes")
    }

    /// Write `packets.csv` and `summary.json` into `dir`, creating it if needed.
    pub fn write_outputs(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("packets.csv"), self.packets_csv())?;
        fs::write(dir.join("summary.json"), self.summary_json())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum EventKind {
    GeneratePacket { sta: NodeId, index: u64 },
    StartRx { packet: u64 },
    EndRx { packet: u64 },
}

struct Simulation<'a, S: ChannelService + ?Sized> {
    config: &'a ScenarioConfig,
    service: &'a mut S,
    cache: ChannelCache,
    jitter: HashMap<NodeId, NodeRng>,
    in_flight: HashMap<u64, PacketResult>,
    results: Vec<PacketResult>,
    next_packet: u64,
    channel_requests: u64,
    records_received: u64,
}

pub fn init_request(config: &ScenarioConfig) -> InitRequest {
    let scene = match &config.scene {
        Some(p) => SceneSource::Path(p.display().to_string()),
        None => SceneSource::free_space(),
    };
    let mut nodes = vec![NodeSpec {
        id: AP_NODE,
        model: MobilityModel::ConstantPosition,
        position: config.ap,
        speed: 0.0,
        seed: config.seed,
    }];
    for (i, &pos) in config.stas.iter().enumerate() {
        nodes.push(NodeSpec {
            id: i as NodeId + 1,
            model: config.mobility.model,
            position: pos,
            speed: config.mobility.speed,
            seed: config.seed,
        });
    }
    InitRequest {
        scene,
        center_frequency: config.radio.center_frequency,
        bandwidth: config.radio.bandwidth,
        fft_size: config.radio.fft_size as u64,
        noise_floor: config.noise_floor,
        prescreen_margin: config.prescreen_margin,
        tx_power: config.radio.tx_power,
        max_reflection_order: config.radio.max_reflection_order as u64,
        prefetch_horizon: config.prefetch.horizon,
        prefetch_budget: config.prefetch.budget,
        direction_hold: config.mobility.direction_hold,
        mobility_tick: config.mobility.tick,
        nodes,
    }
}

impl<S: ChannelService + ?Sized> Simulation<'_, S> {
    fn sta_position(&self, sta: NodeId) -> Vec3 {
        self.config.stas[(sta - 1) as usize]
    }

    fn stations_static(&self) -> bool {
        self.config.mobility.model == MobilityModel::ConstantPosition || self.config.mobility.speed == 0.0
    }

    fn packet_time(&mut self, sta: NodeId, index: u64) -> f64 {
        let rate = self.config.traffic_rate;
        let rng = self.jitter.get_mut(&sta).expect("station has a jitter stream");
        index as f64 / rate + rng.next_f64() / rate * 1e-3
    }

    /// Returns (path loss, delay, served from cache).
    fn channel(&mut self, sta: NodeId, now: f64) -> Result<(f64, f64, bool), SimError> {
        if let Some(r) = self.cache.lookup(AP_NODE, sta, now) {
            return Ok((r.path_loss, r.delay, true));
        }
        let radio = &self.config.radio;
        if self.stations_static() {
            if let Some(rec) = friis_prescreen(
                self.config.ap,
                self.sta_position(sta),
                radio,
                self.config.noise_floor,
                self.config.prescreen_margin,
                now,
                f64::INFINITY,
            ) {
                let out = (rec.path_loss, rec.delay, false);
                self.cache.insert(AP_NODE, sta, rec);
                self.cache.note_prescreen_skip();
                return Ok(out);
            }
        }

        self.channel_requests += 1;
        let reply = self.service.call(&WireMessage::ChannelRequest(ChannelRequest {
            sim_time: now,
            tx_id: AP_NODE,
        }))?;
        let records = match reply {
            WireMessage::ChannelResponse(r) => r.records,
            WireMessage::ErrorResponse { message } => return Err(SimError::Server(message)),
            other => {
                return Err(SimError::Protocol(format!(
                    "expected a channel response, got tag 0x{:02x}",
                    other.tag()
                )))
            }
        };
        self.records_received += records.len() as u64;
        let mut current = None;
        for rec in records {
            if rec.rx_id == AP_NODE {
                return Err(SimError::Protocol("record addressed to the transmitter".into()));
            }
            if rec.rx_id == sta && rec.valid_from == now {
                current = Some((rec.path_loss, rec.delay, false));
            }
            let source = if rec.valid_from > now {
                RecordSource::Prefetched
            } else {
                RecordSource::Raytraced
            };
            self.cache.insert(
                AP_NODE,
                rec.rx_id,
                ChannelRecord {
                    path_loss: rec.path_loss,
                    delay: rec.delay,
                    cfr: Cfr {
                        values: rec.cfr,
                        subcarrier_spacing: radio.subcarrier_spacing(),
                    },
                    computed_at: rec.valid_from,
                    ttl: rec.ttl,
                    source,
                },
            );
        }
        current.ok_or_else(|| SimError::Protocol(format!("response carries no current record for node {sta}")))
    }

    fn handle(&mut self, queue: &mut EventQueue<EventKind>, event: Event<EventKind>) -> Result<(), SimError> {
        let now = event.time;
        match event.kind {
            EventKind::GeneratePacket { sta, index } => {
                let (path_loss, delay, cache_hit) = self.channel(sta, now)?;
                let rx_power = self.config.radio.tx_power - path_loss;
                let snr = rx_power - self.config.noise_floor;
                let packet = self.next_packet;
                self.next_packet += 1;
                self.in_flight.insert(
                    packet,
                    PacketResult {
                        packet_id: packet,
                        tx: AP_NODE,
                        rx: sta,
                        tx_time: now,
                        rx_power,
                        snr,
                        prop_delay: delay,
                        delivered: snr >= self.config.snr_threshold,
                        cache_hit,
                    },
                );
                queue.schedule(now + delay, EventKind::StartRx { packet })?;
                let next = self.packet_time(sta, index + 1);
                if next < self.config.duration {
                    queue.schedule(next, EventKind::GeneratePacket { sta, index: index + 1 })?;
                }
            }
            EventKind::StartRx { packet } => {
                queue.schedule(now + self.config.airtime, EventKind::EndRx { packet })?;
            }
            EventKind::EndRx { packet } => {
                let result = self
                    .in_flight
                    .remove(&packet)
                    .ok_or_else(|| SimError::Protocol(format!("unknown packet {packet}")))?;
                self.results.push(result);
            }
        }
        Ok(())
    }
}

/// Run one scenario against a channel server. The server is initialized
/// here; the caller owns the connection.
pub fn run_scenario<S: ChannelService + ?Sized>(
    config: &ScenarioConfig,
    service: &mut S,
) -> Result<ScenarioMetrics, SimError> {
    let started = Instant::now();
    match service.call(&WireMessage::InitRequest(init_request(config)))? {
        WireMessage::InitResponse(r) if r.ok => {}
        WireMessage::InitResponse(r) => return Err(SimError::InitRejected(r.error_text)),
        WireMessage::ErrorResponse { message } => return Err(SimError::InitRejected(message)),
        other => {
            return Err(SimError::Protocol(format!(
                "expected an init response, got tag 0x{:02x}",
                other.tag()
            )))
        }
    }

    let mut sim = Simulation {
        config,
        service,
        cache: ChannelCache::new(),
        jitter: HashMap::new(),
        in_flight: HashMap::new(),
        results: Vec::new(),
        next_packet: 0,
        channel_requests: 0,
        records_received: 0,
    };
    let mut queue = EventQueue::new();
    if config.traffic_rate > 0.0 {
        for i in 0..config.stas.len() {
            let sta = i as NodeId + 1;
            sim.jitter.insert(sta, NodeRng::new(config.seed, TRAFFIC_STREAM | sta));
            let first = sim.packet_time(sta, 0);
            if first < config.duration {
                queue.schedule(first, EventKind::GeneratePacket { sta, index: 0 })?;
            }
        }
    }
    queue.run(config.duration, |q, e| sim.handle(q, e))?;

    let mut packets = sim.results;
    packets.sort_by_key(|p| p.packet_id);
    Ok(ScenarioMetrics {
        packets,
        cache: sim.cache.stats(),
        channel_requests: sim.channel_requests,
        records_received: sim.records_received,
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}
