//! Multipath channel computation over a [`Scene`].
//!
//! Paths are found with the image method ([`trace_paths`]), weighted with
//! free-space spreading and Fresnel reflection losses ([`finalize_path`]),
//! and sampled on an OFDM subcarrier grid ([`compute_cfr`]). Path loss is
//! the RMS of the frequency response; delay is the earliest arrival.

mod batch;
mod fresnel;
mod paths;

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::scene::Scene;

pub use batch::{compute_batch, compute_p2mp, LinkRequest, Prescreen};
pub use fresnel::{complex_permittivity, fresnel_coefficient, VACUUM_PERMITTIVITY};
pub use paths::{trace_paths, TracedPath};

/// m/s, exact.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Path loss reported for a pair with no propagation path at all.
pub const BLOCKED_PATH_LOSS_DB: f64 = 400.0;

pub const DEFAULT_MAX_REFLECTION_ORDER: usize = 3;
pub const MAX_REFLECTION_ORDER_LIMIT: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum RadioParamsError {
    #[error("center_frequency must be > 0 (got {0})")]
    CenterFrequency(f64),
    #[error("bandwidth must be > 0 (got {0})")]
    Bandwidth(f64),
    #[error("fft_size must be >= 1")]
    FftSize,
    #[error("max_reflection_order must be <= {MAX_REFLECTION_ORDER_LIMIT} (got {0})")]
    ReflectionOrder(usize),
    #[error("tx_power must be finite")]
    TxPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioParams {
    /// Hz
    pub center_frequency: f64,
    /// Hz
    pub bandwidth: f64,
    pub fft_size: usize,
    #[serde(default = "default_order")]
    pub max_reflection_order: usize,
    /// dBm
    #[serde(default = "default_tx_power")]
    pub tx_power: f64,
}

fn default_order() -> usize {
    DEFAULT_MAX_REFLECTION_ORDER
}

fn default_tx_power() -> f64 {
    20.0
}

impl Default for RadioParams {
    /// 802.11ac, 5 GHz carrier, 20 MHz channel, 64 subcarriers.
    fn default() -> Self {
        RadioParams {
            center_frequency: 5.0e9,
            bandwidth: 20.0e6,
            fft_size: 64,
            max_reflection_order: DEFAULT_MAX_REFLECTION_ORDER,
            tx_power: default_tx_power(),
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), RadioParamsError> {
        if !(self.center_frequency > 0.0 && self.center_frequency.is_finite()) {
            return Err(RadioParamsError::CenterFrequency(self.center_frequency));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(RadioParamsError::Bandwidth(self.bandwidth));
        }
        if self.fft_size == 0 {
            return Err(RadioParamsError::FftSize);
        }
        if self.max_reflection_order > MAX_REFLECTION_ORDER_LIMIT {
            return Err(RadioParamsError::ReflectionOrder(self.max_reflection_order));
        }
        if !self.tx_power.is_finite() {
            return Err(RadioParamsError::TxPower);
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_frequency
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth / self.fft_size as f64
    }

    /// Baseband offset (Hz) of subcarrier `k` from the carrier.
    pub fn subcarrier_offset(&self, k: usize) -> f64 {
        (k as f64 - (self.fft_size / 2) as f64) * self.subcarrier_spacing()
    }
}

/// Free-space (Friis) path loss `20 log10(4πdf/c)` in dB.
pub fn friis_path_loss_db(distance: f64, frequency: f64) -> f64 {
    20.0 * (4.0 * PI * distance * frequency / SPEED_OF_LIGHT).log10()
}

/// One weighted multipath component.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationPath {
    pub geometry: TracedPath,
    pub amplitude: f64,
    /// radians in `[0, 2π)`
    pub phase: f64,
}

impl PropagationPath {
    pub fn delay(&self) -> f64 {
        self.geometry.delay
    }

    /// The complex gain `a·e^{-jφ}`.
    pub fn gain(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, -self.phase)
    }
}

/// Apply spreading loss and per-bounce Fresnel coefficients to a traced path.
pub fn finalize_path(path: TracedPath, scene: &Scene, frequency: f64) -> PropagationPath {
    let wavelength = SPEED_OF_LIGHT / frequency;
    let mut amplitude = wavelength / (4.0 * PI * path.total_length);
    let mut reflection_phase = 0.0;
    for (j, &face) in path.faces.iter().enumerate() {
        let incoming = (path.vertices[j + 1] - path.vertices[j]).normalized();
        let normal = scene.triangles()[face].normal();
        let cos_i = incoming.dot(normal).abs().min(1.0);
        let r = fresnel_coefficient(cos_i, scene.material_of(face), frequency);
        amplitude *= r.norm();
        reflection_phase += r.arg();
    }
    PropagationPath {
        amplitude,
        phase: wrap_phase(TAU * frequency * path.delay - reflection_phase),
        geometry: path,
    }
}

fn wrap_phase(phase: f64) -> f64 {
    let p = phase.rem_euclid(TAU);
    if p >= TAU {
        0.0
    } else {
        p
    }
}

/// Channel impulse response: components in ascending delay order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cir {
    components: Vec<PropagationPath>,
}

impl Cir {
    pub fn new(mut components: Vec<PropagationPath>) -> Cir {
        components.sort_by(|a, b| a.delay().total_cmp(&b.delay()));
        Cir { components }
    }

    pub fn components(&self) -> &[PropagationPath] {
        &self.components
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Channel frequency response sampled on the subcarrier grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cfr {
    pub values: Vec<Complex64>,
    /// Hz
    pub subcarrier_spacing: f64,
}

impl Cfr {
    pub fn zeros(params: &RadioParams) -> Cfr {
        Cfr {
            values: vec![Complex64::new(0.0, 0.0); params.fft_size],
            subcarrier_spacing: params.subcarrier_spacing(),
        }
    }
}

/// `H[k] = Σ aₙ e^{-jφₙ} e^{-j2π Δf_k tₙ}` with baseband offsets `Δf_k`.
pub fn compute_cfr(cir: &Cir, params: &RadioParams) -> Cfr {
    let values = (0..params.fft_size)
        .map(|k| {
            let df = params.subcarrier_offset(k);
            cir.components
                .iter()
                .map(|c| Complex64::from_polar(c.amplitude, -(c.phase + TAU * df * c.delay())))
                .sum()
        })
        .collect();
    Cfr {
        values,
        subcarrier_spacing: params.subcarrier_spacing(),
    }
}

/// `-20 log10(RMS |H|)`; [`BLOCKED_PATH_LOSS_DB`] for an empty or all-zero CFR.
pub fn path_loss_db(cfr: &Cfr) -> f64 {
    if cfr.values.is_empty() {
        return BLOCKED_PATH_LOSS_DB;
    }
    let mean_power = cfr.values.iter().map(|h| h.norm_sqr()).sum::<f64>() / cfr.values.len() as f64;
    if mean_power > 0.0 {
        -20.0 * mean_power.sqrt().log10()
    } else {
        BLOCKED_PATH_LOSS_DB
    }
}

/// Earliest arrival; straight-line `distance / c` when nothing arrives.
pub fn propagation_delay(cir: &Cir, straight_line_distance: f64) -> f64 {
    cir.components
        .iter()
        .map(PropagationPath::delay)
        .reduce(f64::min)
        .unwrap_or(straight_line_distance / SPEED_OF_LIGHT)
}

/// Loss, delay and CFR of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkChannel {
    pub path_loss: f64,
    pub delay: f64,
    pub cfr: Cfr,
}

/// Full CIR for one link, traced from the lexicographically smaller endpoint
/// so swapping `a` and `b` gives bit-identical output.
pub fn compute_cir(scene: &Scene, a: Vec3, b: Vec3, params: &RadioParams) -> Cir {
    let (tx, rx) = if b.total_cmp(&a).is_lt() { (b, a) } else { (a, b) };
    let components = trace_paths(scene, tx, rx, params.max_reflection_order)
        .into_iter()
        .filter(|p| p.total_length > 0.0)
        .map(|p| finalize_path(p, scene, params.center_frequency))
        .collect();
    Cir::new(components)
}

pub fn compute_link(scene: &Scene, a: Vec3, b: Vec3, params: &RadioParams) -> LinkChannel {
    let cir = compute_cir(scene, a, b, params);
    let cfr = compute_cfr(&cir, params);
    LinkChannel {
        path_loss: path_loss_db(&cfr),
        delay: propagation_delay(&cir, a.distance(b)),
        cfr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn los(length: f64) -> TracedPath {
        TracedPath {
            vertices: vec![Vec3::ZERO, Vec3::new(length, 0.0, 0.0)],
            faces: vec![],
            total_length: length,
            delay: length / SPEED_OF_LIGHT,
        }
    }

    fn component(amplitude: f64, phase: f64, delay: f64) -> PropagationPath {
        let mut g = los(delay * SPEED_OF_LIGHT);
        g.delay = delay;
        PropagationPath {
            geometry: g,
            amplitude,
            phase,
        }
    }

    #[test]
    fn los_amplitude_is_friis() {
        let p = finalize_path(los(10.0), &Scene::empty(), 5e9);
        let expected = (SPEED_OF_LIGHT / 5e9) / (4.0 * PI * 10.0);
        assert!((p.amplitude - expected).abs() < 1e-18);
        assert!((p.amplitude - 4.771e-4).abs() < 1e-6);
        assert!((-20.0 * p.amplitude.log10() - 66.427).abs() < 0.001);
        assert!((0.0..TAU).contains(&p.phase));
    }

    #[test]
    fn flat_cfr_and_loss() {
        let params = RadioParams::default();
        let cir = Cir::new(vec![component(4.771e-4, 1.0, 33e-9)]);
        let cfr = compute_cfr(&cir, &params);
        assert_eq!(cfr.values.len(), params.fft_size);
        for h in &cfr.values {
            assert!((h.norm() - 4.771e-4).abs() < 1e-15);
        }
        assert!((path_loss_db(&cfr) - 66.427).abs() < 0.001);

        let doubled = Cfr {
            values: cfr.values.iter().map(|h| h * 2.0).collect(),
            ..cfr.clone()
        };
        assert!((path_loss_db(&cfr) - path_loss_db(&doubled) - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn empty_cir_sentinels() {
        let params = RadioParams::default();
        let cfr = compute_cfr(&Cir::default(), &params);
        assert!(cfr.values.iter().all(|h| h.norm() == 0.0));
        assert_eq!(path_loss_db(&cfr), BLOCKED_PATH_LOSS_DB);
        assert_eq!(path_loss_db(&Cfr::default()), BLOCKED_PATH_LOSS_DB);
        let d = propagation_delay(&Cir::default(), 15.0);
        assert!((d - 50.03e-9).abs() < 0.01e-9);
    }

    #[test]
    fn delay_is_earliest_arrival() {
        let cir = Cir::new(vec![component(1.0, 0.0, 34.02e-9), component(1.0, 0.0, 33.36e-9)]);
        assert_eq!(propagation_delay(&cir, 1.0), 33.36e-9);
        assert_eq!(cir.components()[0].delay(), 33.36e-9);
        assert!((propagation_delay(&Cir::default(), 300.0) - 1.00069e-6).abs() < 1e-11);
    }

    #[test]
    fn perfect_conductor_bounce_shifts_phase_by_pi() {
        // |r| -> 1, arg r -> pi as conductivity grows without bound
        let m = crate::scene::Material::new("pec", 1.0, 1e12).unwrap();
        let r = fresnel_coefficient(1.0, &m, 5e9);
        assert!((r.norm() - 1.0).abs() < 1e-3);
        assert!((r.arg().abs() - PI).abs() < 1e-3);
    }

    #[test]
    fn params_validation() {
        assert!(RadioParams::default().validate().is_ok());
        let bad = RadioParams {
            fft_size: 0,
            ..RadioParams::default()
        };
        assert_eq!(bad.validate(), Err(RadioParamsError::FftSize));
        let bad = RadioParams {
            max_reflection_order: 6,
            ..RadioParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = RadioParams {
            center_frequency: 0.0,
            ..RadioParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
