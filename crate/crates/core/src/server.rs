//! The channel server: owns scene, radio parameters and node trajectories,
//! and answers each channel request with a full point-to-multipoint batch
//! plus prefetched channels for predicted future node positions.

use std::collections::{BTreeMap, HashMap};
use std::net::TcpListener;
use std::time::Instant;

use log::{info, warn};
use thiserror::Error;

use crate::channel_cache::{coherence_ttl, RecordSource};
use crate::mobility::{tick_of, NodeId, NodeState};
use crate::protocol::{
    read_message, write_message, ChannelRequest, ChannelResponse, InitRequest, InitResponse, ProtocolError,
    SceneSource, WireMessage, WireRecord,
};
use crate::raytracer::{compute_batch, LinkRequest, Prescreen, RadioParams};
use crate::scene::{load_scene, Material, Scene, Triangle};

pub const DEFAULT_PREFETCH_HORIZON: u64 = 4;
pub const DEFAULT_PREFETCH_BUDGET: u64 = 256;

/// Prefetch instants further than this beyond the request time are skipped.
const MAX_PREFETCH_LOOKAHEAD: f64 = 60.0;

#[derive(Debug, Error, PartialEq)]
pub enum ServerError {
    #[error("channel request before successful init")]
    NotInitialized,
    #[error("already initialized")]
    AlreadyInitialized,
    #[error("simulation time went backwards: {requested} < {last}")]
    TimeRegression { requested: f64, last: f64 },
    #[error("unknown transmitter node {0}")]
    UnknownNode(NodeId),
    #[error("invalid init request: {0}")]
    InvalidInit(String),
    #[error("unexpected message tag 0x{0:02x} from client")]
    Unexpected(u8),
}

#[derive(Debug)]
pub struct ServerState {
    pub scene: Scene,
    pub params: RadioParams,
    pub nodes: BTreeMap<NodeId, NodeState>,
    pub last_sim_time: f64,
    /// Mobility tick all nodes have been advanced to.
    pub current_tick: u64,
    pub tick_length: f64,
    pub prefetch_horizon: u64,
    pub prefetch_budget: u64,
    pub prescreen: Prescreen,
    pub records_computed: u64,
}

#[derive(Default)]
pub struct ChannelServer {
    state: Option<ServerState>,
    pool: Option<rayon::ThreadPool>,
}

fn build_scene(source: &SceneSource) -> Result<Scene, String> {
    match source {
        SceneSource::Path(p) => load_scene(p).map_err(|e| e.to_string()),
        SceneSource::Inline { materials, triangles } => {
            let materials = materials
                .iter()
                .map(|m| Material::new(m.name.clone(), m.permittivity, m.conductivity))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            let triangles = triangles
                .iter()
                .map(|t| {
                    let [a, b, c] = t.vertices;
                    Triangle::new(a, b, c, t.material as usize)
                })
                .collect();
            Scene::new(triangles, materials).map_err(|e| e.to_string())
        }
    }
}

impl ChannelServer {
    pub fn new() -> ChannelServer {
        ChannelServer::default()
    }

    /// Use a dedicated pool of `workers` threads for tracing instead of the
    /// global rayon pool.
    pub fn with_workers(workers: usize) -> Result<ChannelServer, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
        Ok(ChannelServer {
            state: None,
            pool: Some(pool),
        })
    }

    pub fn state(&self) -> Option<&ServerState> {
        self.state.as_ref()
    }

    pub fn reset(&mut self) {
        self.state = None;
    }

    /// Dispatch one request to its handler; every request gets exactly one reply.
    /// Logs one line per request.
    pub fn handle(&mut self, msg: WireMessage) -> WireMessage {
        let started = Instant::now();
        let (reply, line) = match msg {
            WireMessage::InitRequest(req) => {
                let nodes = req.nodes.len();
                let resp = self.handle_init(req);
                let line = match (&self.state, resp.ok) {
                    (Some(s), true) => format!("init nodes={nodes} triangles={}", s.scene.triangles().len()),
                    _ => format!("init nodes={nodes} rejected: {}", resp.error_text),
                };
                (WireMessage::InitResponse(resp), line)
            }
            WireMessage::ChannelRequest(req) => {
                let head = format!("channel sim_time={} tx={}", req.sim_time, req.tx_id);
                match self.handle_channel_request(req) {
                    Ok(resp) => {
                        let line = format!("{head} records={}", resp.records.len());
                        (WireMessage::ChannelResponse(resp), line)
                    }
                    Err(e) => {
                        let line = format!("{head} error: {e}");
                        (WireMessage::ErrorResponse { message: e.to_string() }, line)
                    }
                }
            }
            WireMessage::ShutdownRequest => (WireMessage::ShutdownResponse, "shutdown".to_owned()),
            other => {
                let e = ServerError::Unexpected(other.tag());
                let line = format!("unexpected tag 0x{:02x}", other.tag());
                (WireMessage::ErrorResponse { message: e.to_string() }, line)
            }
        };
        info!("{line} us={}", started.elapsed().as_micros());
        reply
    }

    pub fn handle_init(&mut self, req: InitRequest) -> InitResponse {
        match self.try_init(req) {
            Ok(state) => {
                self.state = Some(state);
                InitResponse {
                    ok: true,
                    error_text: String::new(),
                }
            }
            Err(e) => InitResponse {
                ok: false,
                error_text: e.to_string(),
            },
        }
    }

    fn try_init(&self, req: InitRequest) -> Result<ServerState, ServerError> {
        if self.state.is_some() {
            return Err(ServerError::AlreadyInitialized);
        }
        let invalid = |m: String| ServerError::InvalidInit(m);
        let params = RadioParams {
            center_frequency: req.center_frequency,
            bandwidth: req.bandwidth,
            fft_size: req.fft_size as usize,
            max_reflection_order: req.max_reflection_order as usize,
            tx_power: req.tx_power,
        };
        params.validate().map_err(|e| invalid(e.to_string()))?;
        if !req.noise_floor.is_finite() || !req.prescreen_margin.is_finite() {
            return Err(invalid("noise floor and prescreen margin must be finite".into()));
        }
        if !(req.mobility_tick > 0.0 && req.mobility_tick.is_finite()) {
            return Err(invalid(format!("mobility tick {} must be > 0", req.mobility_tick)));
        }
        if !(req.direction_hold > 0.0) {
            return Err(invalid(format!("direction hold {} must be > 0", req.direction_hold)));
        }
        if req.nodes.is_empty() {
            return Err(invalid("node list is empty".into()));
        }
        let mut nodes = BTreeMap::new();
        for n in &req.nodes {
            if !n.position.is_finite() || !(n.speed >= 0.0 && n.speed.is_finite()) {
                return Err(invalid(format!("node {} has a non-finite position or bad speed", n.id)));
            }
            let state = NodeState::new(n.id, n.position, n.model, n.speed, n.seed, req.direction_hold);
            if nodes.insert(n.id, state).is_some() {
                return Err(invalid(format!("duplicate node id {}", n.id)));
            }
        }
        let scene = build_scene(&req.scene).map_err(invalid)?;
        Ok(ServerState {
            scene,
            params,
            nodes,
            last_sim_time: 0.0,
            current_tick: 0,
            tick_length: req.mobility_tick,
            prefetch_horizon: req.prefetch_horizon,
            prefetch_budget: req.prefetch_budget,
            prescreen: Prescreen {
                noise_floor: req.noise_floor,
                margin: req.prescreen_margin,
            },
            records_computed: 0,
        })
    }

    pub fn handle_channel_request(&mut self, req: ChannelRequest) -> Result<ChannelResponse, ServerError> {
        let state = self.state.as_mut().ok_or(ServerError::NotInitialized)?;
        if !(req.sim_time >= state.last_sim_time) {
            return Err(ServerError::TimeRegression {
                requested: req.sim_time,
                last: state.last_sim_time,
            });
        }
        if !state.nodes.contains_key(&req.tx_id) {
            return Err(ServerError::UnknownNode(req.tx_id));
        }
        state.advance_to(req.sim_time);
        let links = state.plan_links(req.tx_id, req.sim_time);

        let scene = &state.scene;
        let params = &state.params;
        let prescreen = Some(state.prescreen);
        let records = match &self.pool {
            Some(pool) => pool.install(|| compute_batch(scene, &links, params, prescreen)),
            None => compute_batch(scene, &links, params, prescreen),
        };
        state.records_computed += records.len() as u64;

        let records: Vec<WireRecord> = links
            .iter()
            .zip(records)
            .map(|(l, r)| WireRecord {
                rx_id: l.rx_id,
                valid_from: r.computed_at,
                path_loss: r.path_loss,
                delay: r.delay,
                ttl: r.ttl,
                cfr: r.cfr.values,
            })
            .collect();
        Ok(ChannelResponse { records })
    }
}

impl ServerState {
    fn advance_to(&mut self, sim_time: f64) {
        let target = tick_of(sim_time, self.tick_length);
        if target > self.current_tick {
            let ticks = target - self.current_tick;
            for node in self.nodes.values_mut() {
                node.advance_ticks(ticks, self.tick_length, &self.scene);
            }
            self.current_tick = target;
        }
        self.last_sim_time = sim_time;
    }

    /// Current links to every other node, then prefetch links at multiples
    /// of each mobile pair's coherence time, level by level, until the
    /// record budget runs out.
    fn plan_links(&self, tx_id: NodeId, sim_time: f64) -> Vec<LinkRequest> {
        let tx = &self.nodes[&tx_id];
        let mut links: Vec<LinkRequest> = self
            .nodes
            .values()
            .filter(|rx| rx.node_id != tx_id)
            .map(|rx| LinkRequest {
                rx_id: rx.node_id,
                tx_position: tx.position,
                tx_velocity: tx.velocity,
                rx_position: rx.position,
                rx_velocity: rx.velocity,
                time: sim_time,
                source: RecordSource::Raytraced,
            })
            .collect();

        let budget = self.prefetch_budget as usize;
        let mobile_pairs: Vec<(NodeId, f64)> = self
            .nodes
            .values()
            .filter(|rx| rx.node_id != tx_id && (tx.is_mobile() || rx.is_mobile()))
            .map(|rx| {
                let v = (tx.velocity - rx.velocity).norm();
                (rx.node_id, coherence_ttl(v, self.params.center_frequency))
            })
            .filter(|(_, tc)| tc.is_finite())
            .collect();

        let mut futures: HashMap<NodeId, Vec<NodeState>> = HashMap::new();
        'levels: for level in 1..=self.prefetch_horizon {
            for &(rx_id, tc) in &mobile_pairs {
                if links.len() >= budget {
                    break 'levels;
                }
                let t = sim_time + level as f64 * tc;
                if t - sim_time > MAX_PREFETCH_LOOKAHEAD {
                    continue;
                }
                let ahead = (tick_of(t, self.tick_length) - self.current_tick) as usize;
                let txf = self.future_state(&mut futures, tx_id, ahead);
                let rxf = self.future_state(&mut futures, rx_id, ahead);
                links.push(LinkRequest {
                    rx_id,
                    tx_position: txf.position,
                    tx_velocity: txf.velocity,
                    rx_position: rxf.position,
                    rx_velocity: rxf.velocity,
                    time: t,
                    source: RecordSource::Prefetched,
                });
            }
        }
        links
    }

    /// State of `id` after `ahead` more ticks, stepping a private copy.
    fn future_state(&self, futures: &mut HashMap<NodeId, Vec<NodeState>>, id: NodeId, ahead: usize) -> NodeState {
        let node = &self.nodes[&id];
        if !node.is_mobile() {
            return node.clone();
        }
        let trail = futures.entry(id).or_insert_with(|| vec![node.clone()]);
        while trail.len() <= ahead {
            let mut next = trail.last().unwrap().clone();
            next.advance(self.tick_length, &self.scene);
            trail.push(next);
        }
        trail[ahead].clone()
    }
}

/// Serve connections one at a time until a client sends a shutdown request.
/// Each connection starts uninitialized.
pub fn serve(listener: &TcpListener, server: &mut ChannelServer) -> Result<(), ProtocolError> {
    for stream in listener.incoming() {
        let mut stream = stream?;
        stream.set_nodelay(true)?;
        server.reset();
        loop {
            match read_message(&mut stream) {
                Ok(Some(msg)) => {
                    let shutdown = matches!(msg, WireMessage::ShutdownRequest);
                    let reply = server.handle(msg);
                    write_message(&mut stream, &reply)?;
                    if shutdown {
                        return Ok(());
                    }
                }
                Ok(None) => break,
                Err(ProtocolError::Io(e)) => {
                    warn!("connection dropped: {e}");
                    break;
                }
                Err(e) => {
                    warn!("bad frame from client: {e}");
                    let _ = write_message(&mut stream, &WireMessage::ErrorResponse { message: e.to_string() });
                    break;
                }
            }
        }
    }
    Ok(())
}
