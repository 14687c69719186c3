//! proptest strategies for arbitrary wire messages.

use num_complex::Complex64;
use proptest::prelude::*;

use raychan::geometry::Vec3;
use raychan::mobility::MobilityModel;
use raychan::protocol::{
    ChannelRequest, ChannelResponse, InitRequest, InitResponse, InlineMaterial, InlineTriangle, NodeSpec, SceneSource,
    WireMessage, WireRecord,
};

/// Every non-NaN f64, with the awkward ones over-represented.
pub fn real() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => any::<f64>().prop_filter("not NaN", |x| !x.is_nan()),
        1 => prop::sample::select(vec![0.0, -0.0, f64::INFINITY, f64::NEG_INFINITY, f64::MIN_POSITIVE, f64::MAX, 5e-324]),
    ]
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (real(), real(), real()).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn text() -> impl Strategy<Value = String> {
    prop_oneof![".{0,16}", "[a-z_]{0,8}"]
}

fn scene() -> impl Strategy<Value = SceneSource> {
    let material = (text(), real(), real()).prop_map(|(name, permittivity, conductivity)| InlineMaterial {
        name,
        permittivity,
        conductivity,
    });
    let triangle = (vec3(), vec3(), vec3(), any::<u64>()).prop_map(|(a, b, c, material)| InlineTriangle {
        vertices: [a, b, c],
        material,
    });
    prop_oneof![
        text().prop_map(SceneSource::Path),
        (
            prop::collection::vec(material, 0..3),
            prop::collection::vec(triangle, 0..4)
        )
            .prop_map(|(materials, triangles)| SceneSource::Inline { materials, triangles }),
    ]
}

fn node() -> impl Strategy<Value = NodeSpec> {
    (any::<u64>(), any::<bool>(), vec3(), real(), any::<u64>()).prop_map(|(id, walk, position, speed, seed)| NodeSpec {
        id,
        model: if walk {
            MobilityModel::RandomWalk3d
        } else {
            MobilityModel::ConstantPosition
        },
        position,
        speed,
        seed,
    })
}

fn init() -> impl Strategy<Value = InitRequest> {
    (
        scene(),
        (real(), real(), any::<u64>(), real(), real(), real()),
        (any::<u64>(), any::<u64>(), any::<u64>(), real(), real()),
        prop::collection::vec(node(), 0..5),
    )
        .prop_map(|(scene, a, b, nodes)| InitRequest {
            scene,
            center_frequency: a.0,
            bandwidth: a.1,
            fft_size: a.2,
            noise_floor: a.3,
            prescreen_margin: a.4,
            tx_power: a.5,
            max_reflection_order: b.0,
            prefetch_horizon: b.1,
            prefetch_budget: b.2,
            direction_hold: b.3,
            mobility_tick: b.4,
            nodes,
        })
}

fn record() -> impl Strategy<Value = WireRecord> {
    (
        any::<u64>(),
        real(),
        real(),
        real(),
        real(),
        prop::collection::vec((real(), real()).prop_map(|(re, im)| Complex64::new(re, im)), 0..9),
    )
        .prop_map(|(rx_id, valid_from, path_loss, delay, ttl, cfr)| WireRecord {
            rx_id,
            valid_from,
            path_loss,
            delay,
            ttl,
            cfr,
        })
}

pub fn message() -> impl Strategy<Value = WireMessage> {
    prop_oneof![
        init().prop_map(WireMessage::InitRequest),
        (any::<bool>(), text()).prop_map(|(ok, error_text)| WireMessage::InitResponse(InitResponse { ok, error_text })),
        (real(), any::<u64>())
            .prop_map(|(sim_time, tx_id)| WireMessage::ChannelRequest(ChannelRequest { sim_time, tx_id })),
        prop::collection::vec(record(), 0..5)
            .prop_map(|records| WireMessage::ChannelResponse(ChannelResponse { records })),
        Just(WireMessage::ShutdownRequest),
        Just(WireMessage::ShutdownResponse),
        text().prop_map(|message| WireMessage::ErrorResponse { message }),
    ]
}
