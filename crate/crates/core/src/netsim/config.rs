use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::mobility::{MobilityModel, DEFAULT_DIRECTION_HOLD, DEFAULT_TICK};
use crate::raytracer::RadioParams;
use crate::server::{DEFAULT_PREFETCH_BUDGET, DEFAULT_PREFETCH_HORIZON};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityConfig {
    #[serde(default = "default_model")]
    pub model: MobilityModel,
    /// m/s
    #[serde(default)]
    pub speed: f64,
    /// s
    #[serde(default = "default_hold")]
    pub direction_hold: f64,
    /// s
    #[serde(default = "default_tick")]
    pub tick: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            model: default_model(),
            speed: 0.0,
            direction_hold: default_hold(),
            tick: default_tick(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrefetchConfig {
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_budget")]
    pub budget: u64,
}

impl Default for PrefetchConfig {
    fn default() -> Self {
        PrefetchConfig {
            horizon: default_horizon(),
            budget: default_budget(),
        }
    }
}

/// A JSON scenario: one AP at node 0 sending to `stas.len()` stations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Scene descriptor. Absent means free space.
    #[serde(default)]
    pub scene: Option<PathBuf>,
    #[serde(default)]
    pub radio: RadioParams,
    /// dBm
    #[serde(default = "default_noise_floor")]
    pub noise_floor: f64,
    /// dB
    #[serde(default = "default_snr_threshold")]
    pub snr_threshold: f64,
    /// dB
    #[serde(default)]
    pub prescreen_margin: f64,
    pub ap: Vec3,
    pub stas: Vec<Vec3>,
    #[serde(default)]
    pub mobility: MobilityConfig,
    /// Packets per second per station.
    pub traffic_rate: f64,
    /// s
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub prefetch: PrefetchConfig,
    /// Time between the start and end of reception, s.
    #[serde(default)]
    pub airtime: f64,
    /// `host:port` of a channel server.
    #[serde(default)]
    pub endpoint: Option<String>,
}

fn default_model() -> MobilityModel {
    MobilityModel::ConstantPosition
}
fn default_hold() -> f64 {
    DEFAULT_DIRECTION_HOLD
}
fn default_tick() -> f64 {
    DEFAULT_TICK
}
fn default_horizon() -> u64 {
    DEFAULT_PREFETCH_HORIZON
}
fn default_budget() -> u64 {
    DEFAULT_PREFETCH_BUDGET
}
fn default_noise_floor() -> f64 {
    -94.0
}
fn default_snr_threshold() -> f64 {
    5.0
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} must be a positive finite number")))
    }
}

impl ScenarioConfig {
    /// Parse and validate. A relative `scene` path is resolved against
    /// `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<ScenarioConfig, ConfigError> {
        let mut cfg: ScenarioConfig = serde_json::from_str(text)?;
        if let Some(scene) = cfg.scene.take() {
            let joined = if scene.is_absolute() {
                scene
            } else {
                base_dir.join(scene)
            };
            cfg.scene = Some(std::path::absolute(&joined).unwrap_or(joined));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.radio.validate().map_err(|e| invalid("radio", e.to_string()))?;
        positive("duration", self.duration)?;
        if !(self.traffic_rate >= 0.0 && self.traffic_rate.is_finite()) {
            return Err(invalid("traffic_rate", format!("{} must be >= 0", self.traffic_rate)));
        }
        if !self.ap.is_finite() {
            return Err(invalid("ap", "position must be finite"));
        }
        if let Some(i) = self.stas.iter().position(|p| !p.is_finite()) {
            return Err(invalid("stas", format!("station {i} has a non-finite position")));
        }
        if !self.noise_floor.is_finite() {
            return Err(invalid("noise_floor", "must be finite"));
        }
        if !self.snr_threshold.is_finite() {
            return Err(invalid("snr_threshold", "must be finite"));
        }
        if !self.prescreen_margin.is_finite() {
            return Err(invalid("prescreen_margin", "must be finite"));
        }
        if !(self.mobility.speed >= 0.0 && self.mobility.speed.is_finite()) {
            return Err(invalid(
                "mobility.speed",
                format!("{} must be >= 0", self.mobility.speed),
            ));
        }
        positive("mobility.direction_hold", self.mobility.direction_hold)?;
        positive("mobility.tick", self.mobility.tick)?;
        if !(self.airtime >= 0.0 && self.airtime.is_finite()) {
            return Err(invalid("airtime", format!("{} must be >= 0", self.airtime)));
        }
        if let Some(scene) = &self.scene {
            if !scene.is_file() {
                return Err(invalid("scene", format!("{} does not exist", scene.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"ap":[0,0,1],"stas":[[3,0,1]],"traffic_rate":10,"duration":1}"#;

    #[test]
    fn defaults_fill_in() {
        let c = ScenarioConfig::from_json(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(c.radio, RadioParams::default());
        assert_eq!(c.noise_floor, -94.0);
        assert_eq!(c.prefetch.horizon, 4);
        assert_eq!(c.mobility.model, MobilityModel::ConstantPosition);
        assert!(c.scene.is_none());
    }

    #[test]
    fn negative_duration_names_the_field() {
        let text = MINIMAL.replace("\"duration\":1", "\"duration\":-1");
        let err = ScenarioConfig::from_json(&text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("duration"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace('}', ",\"bogus\":1}");
        assert!(matches!(
            ScenarioConfig::from_json(&text, Path::new(".")),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn missing_scene_file_is_reported() {
        let text = MINIMAL.replace('}', ",\"scene\":\"nope.xml\"}");
        let err = ScenarioConfig::from_json(&text, Path::new("/nonexistent")).unwrap_err();
        assert!(err.to_string().contains("scene"));
    }
}
