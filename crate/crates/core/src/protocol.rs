//! Binary request/response messages between the simulator and the channel
//! server.
//!
//! Frame layout (all little-endian):
//!
//! ```text
//! u32 length   -- bytes that follow: tag + fields
//! u8  tag
//! ... fields in declaration order
//! ```
//!
//! Integers are u64, reals are IEEE-754 f64, booleans one byte (0 or 1),
//! strings and lists a u32 count followed by the bytes/elements, complex
//! numbers `(re, im)` pairs. See `docs/wire_format.md` for per-message
//! layouts and a worked example.

use std::io::{self, Read, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::Vec3;
use crate::mobility::{MobilityModel, NodeId};

pub const TAG_INIT_REQUEST: u8 = 0x01;
pub const TAG_INIT_RESPONSE: u8 = 0x02;
pub const TAG_CHANNEL_REQUEST: u8 = 0x03;
pub const TAG_CHANNEL_RESPONSE: u8 = 0x04;
pub const TAG_SHUTDOWN_REQUEST: u8 = 0x05;
pub const TAG_SHUTDOWN_RESPONSE: u8 = 0x06;
pub const TAG_ERROR_RESPONSE: u8 = 0x07;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("unknown message tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("truncated frame: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("length mismatch: frame declares {declared} bytes but the message occupies {used}")]
    LengthMismatch { declared: usize, used: usize },
    #[error("{0} bytes follow the frame")]
    TrailingBytes(usize),
    #[error("frame has zero length (no tag byte)")]
    EmptyFrame,
    #[error("invalid field value: {0}")]
    InvalidValue(String),
    #[error("{what} has {len} elements, more than a u32 count can describe")]
    TooLong { what: &'static str, len: usize },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InlineMaterial {
    pub name: String,
    pub permittivity: f64,
    pub conductivity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InlineTriangle {
    pub vertices: [Vec3; 3],
    pub material: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SceneSource {
    /// Descriptor path on the server's filesystem.
    Path(String),
    /// Geometry sent with the request.
    Inline {
        materials: Vec<InlineMaterial>,
        triangles: Vec<InlineTriangle>,
    },
}

impl SceneSource {
    pub fn free_space() -> SceneSource {
        SceneSource::Inline {
            materials: Vec::new(),
            triangles: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub model: MobilityModel,
    pub position: Vec3,
    pub speed: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitRequest {
    pub scene: SceneSource,
    pub center_frequency: f64,
    pub bandwidth: f64,
    pub fft_size: u64,
    pub noise_floor: f64,
    pub prescreen_margin: f64,
    pub tx_power: f64,
    pub max_reflection_order: u64,
    pub prefetch_horizon: u64,
    pub prefetch_budget: u64,
    pub direction_hold: f64,
    pub mobility_tick: f64,
    pub nodes: Vec<NodeSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitResponse {
    pub ok: bool,
    pub error_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRequest {
    pub sim_time: f64,
    pub tx_id: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireRecord {
    pub rx_id: NodeId,
    pub valid_from: f64,
    pub path_loss: f64,
    pub delay: f64,
    /// `+inf` for a stationary pair.
    pub ttl: f64,
    pub cfr: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelResponse {
    pub records: Vec<WireRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    InitRequest(InitRequest),
    InitResponse(InitResponse),
    ChannelRequest(ChannelRequest),
    ChannelResponse(ChannelResponse),
    ShutdownRequest,
    ShutdownResponse,
    /// Answer to any request the server cannot serve.
    ErrorResponse {
        message: String,
    },
}

impl WireMessage {
    pub fn tag(&self) -> u8 {
        match self {
            WireMessage::InitRequest(_) => TAG_INIT_REQUEST,
            WireMessage::InitResponse(_) => TAG_INIT_RESPONSE,
            WireMessage::ChannelRequest(_) => TAG_CHANNEL_REQUEST,
            WireMessage::ChannelResponse(_) => TAG_CHANNEL_RESPONSE,
            WireMessage::ShutdownRequest => TAG_SHUTDOWN_REQUEST,
            WireMessage::ShutdownResponse => TAG_SHUTDOWN_RESPONSE,
            WireMessage::ErrorResponse { .. } => TAG_ERROR_RESPONSE,
        }
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }
    fn vec3(&mut self, v: Vec3) {
        self.f64(v.x);
        self.f64(v.y);
        self.f64(v.z);
    }
    fn count(&mut self, what: &'static str, len: usize) -> Result<(), ProtocolError> {
        let n = u32::try_from(len).map_err(|_| ProtocolError::TooLong { what, len })?;
        self.buf.extend_from_slice(&n.to_le_bytes());
        Ok(())
    }
    fn str(&mut self, s: &str) -> Result<(), ProtocolError> {
        self.count("string", s.len())?;
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }
    fn model(&mut self, m: MobilityModel) {
        self.u64(match m {
            MobilityModel::ConstantPosition => 0,
            MobilityModel::RandomWalk3d => 1,
        });
    }
}

pub fn encode(msg: &WireMessage) -> Result<Vec<u8>, ProtocolError> {
    let mut w = Writer { buf: vec![0, 0, 0, 0] };
    w.u8(msg.tag());
    match msg {
        WireMessage::InitRequest(r) => {
            match &r.scene {
                SceneSource::Path(p) => {
                    w.u64(0);
                    w.str(p)?;
                }
                SceneSource::Inline { materials, triangles } => {
                    w.u64(1);
                    w.count("material list", materials.len())?;
                    for m in materials {
                        w.str(&m.name)?;
                        w.f64(m.permittivity);
                        w.f64(m.conductivity);
                    }
                    w.count("triangle list", triangles.len())?;
                    for t in triangles {
                        for v in t.vertices {
                            w.vec3(v);
                        }
                        w.u64(t.material);
                    }
                }
            }
            w.f64(r.center_frequency);
            w.f64(r.bandwidth);
            w.u64(r.fft_size);
            w.f64(r.noise_floor);
            w.f64(r.prescreen_margin);
            w.f64(r.tx_power);
            w.u64(r.max_reflection_order);
            w.u64(r.prefetch_horizon);
            w.u64(r.prefetch_budget);
            w.f64(r.direction_hold);
            w.f64(r.mobility_tick);
            w.count("node list", r.nodes.len())?;
            for n in &r.nodes {
                w.u64(n.id);
                w.model(n.model);
                w.vec3(n.position);
                w.f64(n.speed);
                w.u64(n.seed);
            }
        }
        WireMessage::InitResponse(r) => {
            w.bool(r.ok);
            w.str(&r.error_text)?;
        }
        WireMessage::ChannelRequest(r) => {
            w.f64(r.sim_time);
            w.u64(r.tx_id);
        }
        WireMessage::ChannelResponse(r) => {
            w.count("record list", r.records.len())?;
            for rec in &r.records {
                w.u64(rec.rx_id);
                w.f64(rec.valid_from);
                w.f64(rec.path_loss);
                w.f64(rec.delay);
                w.f64(rec.ttl);
                w.count("cfr", rec.cfr.len())?;
                for h in &rec.cfr {
                    w.f64(h.re);
                    w.f64(h.im);
                }
            }
        }
        WireMessage::ShutdownRequest | WireMessage::ShutdownResponse => {}
        WireMessage::ErrorResponse { message } => w.str(message)?,
    }
    let len = w.buf.len() - 4;
    let len32 = u32::try_from(len).map_err(|_| ProtocolError::TooLong { what: "frame", len })?;
    w.buf[..4].copy_from_slice(&len32.to_le_bytes());
    Ok(w.buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(ProtocolError::Truncated { needed: n, available });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ProtocolError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn bool(&mut self) -> Result<bool, ProtocolError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(ProtocolError::InvalidValue(format!("boolean byte {b}"))),
        }
    }
    fn vec3(&mut self) -> Result<Vec3, ProtocolError> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    /// Element count, checked against the bytes left so a corrupt count
    /// cannot trigger a huge allocation.
    fn count(&mut self, min_element_size: usize) -> Result<usize, ProtocolError> {
        let n = self.u32()? as usize;
        let available = self.buf.len() - self.pos;
        let needed = n.saturating_mul(min_element_size);
        if needed > available {
            return Err(ProtocolError::Truncated { needed, available });
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String, ProtocolError> {
        let n = self.count(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| ProtocolError::InvalidValue("string is not UTF-8".into()))
    }
    fn model(&mut self) -> Result<MobilityModel, ProtocolError> {
        match self.u64()? {
            0 => Ok(MobilityModel::ConstantPosition),
            1 => Ok(MobilityModel::RandomWalk3d),
            m => Err(ProtocolError::InvalidValue(format!("mobility model {m}"))),
        }
    }
}

fn decode_body(tag: u8, r: &mut Reader) -> Result<WireMessage, ProtocolError> {
    Ok(match tag {
        TAG_INIT_REQUEST => {
            let scene = match r.u64()? {
                0 => SceneSource::Path(r.str()?),
                1 => {
                    let n = r.count(20)?;
                    let mut materials = Vec::with_capacity(n);
                    for _ in 0..n {
                        materials.push(InlineMaterial {
                            name: r.str()?,
                            permittivity: r.f64()?,
                            conductivity: r.f64()?,
                        });
                    }
                    let n = r.count(80)?;
                    let mut triangles = Vec::with_capacity(n);
                    for _ in 0..n {
                        triangles.push(InlineTriangle {
                            vertices: [r.vec3()?, r.vec3()?, r.vec3()?],
                            material: r.u64()?,
                        });
                    }
                    SceneSource::Inline { materials, triangles }
                }
                k => return Err(ProtocolError::InvalidValue(format!("scene source kind {k}"))),
            };
            let center_frequency = r.f64()?;
            let bandwidth = r.f64()?;
            let fft_size = r.u64()?;
            let noise_floor = r.f64()?;
            let prescreen_margin = r.f64()?;
            let tx_power = r.f64()?;
            let max_reflection_order = r.u64()?;
            let prefetch_horizon = r.u64()?;
            let prefetch_budget = r.u64()?;
            let direction_hold = r.f64()?;
            let mobility_tick = r.f64()?;
            let n = r.count(56)?;
            let mut nodes = Vec::with_capacity(n);
            for _ in 0..n {
                nodes.push(NodeSpec {
                    id: r.u64()?,
                    model: r.model()?,
                    position: r.vec3()?,
                    speed: r.f64()?,
                    seed: r.u64()?,
                });
            }
            WireMessage::InitRequest(InitRequest {
                scene,
                center_frequency,
                bandwidth,
                fft_size,
                noise_floor,
                prescreen_margin,
                tx_power,
                max_reflection_order,
                prefetch_horizon,
                prefetch_budget,
                direction_hold,
                mobility_tick,
                nodes,
            })
        }
        TAG_INIT_RESPONSE => WireMessage::InitResponse(InitResponse {
            ok: r.bool()?,
            error_text: r.str()?,
        }),
        TAG_CHANNEL_REQUEST => WireMessage::ChannelRequest(ChannelRequest {
            sim_time: r.f64()?,
            tx_id: r.u64()?,
        }),
        TAG_CHANNEL_RESPONSE => {
            let n = r.count(44)?;
            let mut records = Vec::with_capacity(n);
            for _ in 0..n {
                let rx_id = r.u64()?;
                let valid_from = r.f64()?;
                let path_loss = r.f64()?;
                let delay = r.f64()?;
                let ttl = r.f64()?;
                let m = r.count(16)?;
                let mut cfr = Vec::with_capacity(m);
                for _ in 0..m {
                    cfr.push(Complex64::new(r.f64()?, r.f64()?));
                }
                records.push(WireRecord {
                    rx_id,
                    valid_from,
                    path_loss,
                    delay,
                    ttl,
                    cfr,
                });
            }
            WireMessage::ChannelResponse(ChannelResponse { records })
        }
        TAG_SHUTDOWN_REQUEST => WireMessage::ShutdownRequest,
        TAG_SHUTDOWN_RESPONSE => WireMessage::ShutdownResponse,
        TAG_ERROR_RESPONSE => WireMessage::ErrorResponse { message: r.str()? },
        other => return Err(ProtocolError::UnknownTag(other)),
    })
}

/// Decode the first frame in `bytes`, returning the message and the number
/// of bytes it occupied. Nothing is returned for an incomplete frame.
pub fn decode_prefix(bytes: &[u8]) -> Result<(WireMessage, usize), ProtocolError> {
    if bytes.len() < 4 {
        return Err(ProtocolError::Truncated {
            needed: 4,
            available: bytes.len(),
        });
    }
    let declared = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let available = bytes.len() - 4;
    if declared > available {
        return Err(ProtocolError::Truncated {
            needed: declared,
            available,
        });
    }
    let msg = decode_payload(&bytes[4..4 + declared])?;
    Ok((msg, 4 + declared))
}

/// Decode exactly one frame.
pub fn decode(bytes: &[u8]) -> Result<WireMessage, ProtocolError> {
    let (msg, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(ProtocolError::TrailingBytes(bytes.len() - used));
    }
    Ok(msg)
}

/// Decode a frame body (tag + fields) whose length prefix was already read.
fn decode_payload(payload: &[u8]) -> Result<WireMessage, ProtocolError> {
    if payload.is_empty() {
        return Err(ProtocolError::EmptyFrame);
    }
    let mut r = Reader { buf: payload, pos: 1 };
    let msg = decode_body(payload[0], &mut r)?;
    if r.pos != payload.len() {
        return Err(ProtocolError::LengthMismatch {
            declared: payload.len(),
            used: r.pos,
        });
    }
    Ok(msg)
}

pub fn write_message<W: Write>(w: &mut W, msg: &WireMessage) -> Result<(), ProtocolError> {
    w.write_all(&encode(msg)?)?;
    w.flush()?;
    Ok(())
}

/// Read one frame; `Ok(None)` on a clean end of stream before any byte.
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<WireMessage>, ProtocolError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..])? {
            0 if got == 0 => return Ok(None),
            0 => {
                return Err(ProtocolError::Truncated {
                    needed: 4,
                    available: got,
                })
            }
            n => got += n,
        }
    }
    let declared = u32::from_le_bytes(len) as usize;
    let mut payload = Vec::new();
    let read = r.take(declared as u64).read_to_end(&mut payload)?;
    if read < declared {
        return Err(ProtocolError::Truncated {
            needed: declared,
            available: read,
        });
    }
    decode_payload(&payload).map(Some)
}
