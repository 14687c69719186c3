//! Command implementations behind the `raychan` and `raychan-server`
//! binaries. Each command returns a [`CliError`] whose
//! [`exit_code`](CliError::exit_code) is the process exit status.

use std::fmt::Write as _;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use log::info;
use thiserror::Error;

use raychan::client::{ChannelService, ClientError, EmbeddedChannelClient, TcpChannelClient};
use raychan::geometry::Vec3;
use raychan::mobility::{MobilityModel, DEFAULT_DIRECTION_HOLD, DEFAULT_TICK};
use raychan::netsim::{
    run_scenario, ConfigError, MobilityConfig, PrefetchConfig, ScenarioConfig, ScenarioMetrics, SimError,
};
use raychan::protocol::{ChannelRequest, InitRequest, NodeSpec, SceneSource, WireMessage};
use raychan::raytracer::{friis_path_loss_db, RadioParams, SPEED_OF_LIGHT};
use raychan::server::{serve, ChannelServer, DEFAULT_PREFETCH_BUDGET, DEFAULT_PREFETCH_HORIZON};

/// Path-loss tolerance for `validate`, dB.
pub const VALIDATE_PL_TOLERANCE: f64 = 1e-3;
/// Delay tolerance for `validate`, s.
pub const VALIDATE_DELAY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InitRejected(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn io_error(what: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", what.display()))
}

/// Where channel requests go.
#[derive(Debug, Clone, PartialEq)]
pub enum Endpoint {
    Embedded { workers: Option<usize> },
    Remote(String),
}

impl Endpoint {
    /// Open a fresh session. Every session starts with an uninitialized
    /// server, so each scenario gets its own.
    pub fn connect(&self) -> Result<Box<dyn ChannelService>, CliError> {
        match self {
            Endpoint::Embedded { workers } => {
                let server = match workers {
                    Some(n) => ChannelServer::with_workers(*n).map_err(|e| CliError::Runtime(e.to_string()))?,
                    None => ChannelServer::new(),
                };
                Ok(Box::new(EmbeddedChannelClient::new(server)))
            }
            Endpoint::Remote(addr) => Ok(Box::new(TcpChannelClient::connect(addr)?)),
        }
    }
}

/// Pick the endpoint: an explicit choice wins, then the scenario's own.
pub fn resolve_endpoint(explicit: Option<Endpoint>, config: Option<&ScenarioConfig>) -> Result<Endpoint, CliError> {
    explicit
        .or_else(|| config.and_then(|c| c.endpoint.clone()).map(Endpoint::Remote))
        .ok_or_else(|| {
            CliError::Runtime("no channel server: pass --endpoint, set RAYCHAN_ENDPOINT or use --embedded".into())
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub distance: f64,
    pub path_loss: f64,
    pub friis: f64,
    pub delay: f64,
    pub reference_delay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub frequency: f64,
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    pub fn max_path_loss_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.path_loss - r.friis).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_delay_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.delay - r.reference_delay).abs())
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_path_loss_error() < VALIDATE_PL_TOLERANCE && self.max_delay_error() < VALIDATE_DELAY_TOLERANCE
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:>12} {:>14} {:>14} {:>16} {:>16}\n",
            "distance_m", "pl_traced_db", "pl_friis_db", "delay_traced_s", "delay_d_over_c_s"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>12.4} {:>14.6} {:>14.6} {:>16.9e} {:>16.9e}",
                r.distance, r.path_loss, r.friis, r.delay, r.reference_delay
            );
        }
        let _ = writeln!(
            s,
            "max |dPL| = {:.3e} dB, max |dDelay| = {:.3e} s: {}",
            self.max_path_loss_error(),
            self.max_delay_error(),
            if self.passed() { "PASS" } else { "FAIL" }
        );
        s
    }
}

fn expect_init(reply: WireMessage) -> Result<(), CliError> {
    match reply {
        WireMessage::InitResponse(r) if r.ok => Ok(()),
        WireMessage::InitResponse(r) => Err(CliError::Validation(format!("server rejected init: {}", r.error_text))),
        WireMessage::ErrorResponse { message } => Err(CliError::Runtime(message)),
        other => Err(CliError::Runtime(format!("unexpected reply tag 0x{:02x}", other.tag()))),
    }
}

/// Compare traced free-space channels against Friis and `d/c`. The
/// transmitter sits at the origin and receiver `i` at `(d_i, 0, 0)`.
pub fn cmd_validate(
    distances: &[f64],
    frequency: f64,
    service: &mut dyn ChannelService,
) -> Result<ValidationReport, CliError> {
    if distances.is_empty() {
        return Err(CliError::Validation("no distances given".into()));
    }
    if let Some(d) = distances.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(CliError::Validation(format!("distance {d} must be > 0")));
    }
    let radio = RadioParams {
        center_frequency: frequency,
        ..RadioParams::default()
    };
    radio.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let mut nodes = vec![NodeSpec {
        id: 0,
        model: MobilityModel::ConstantPosition,
        position: Vec3::ZERO,
        speed: 0.0,
        seed: 0,
    }];
    for (i, &d) in distances.iter().enumerate() {
        nodes.push(NodeSpec {
            id: i as u64 + 1,
            model: MobilityModel::ConstantPosition,
            position: Vec3::new(d, 0.0, 0.0),
            speed: 0.0,
            seed: 0,
        });
    }
    let init = InitRequest {
        scene: SceneSource::free_space(),
        center_frequency: radio.center_frequency,
        bandwidth: radio.bandwidth,
        fft_size: radio.fft_size as u64,
        // never prescreen: every link must be traced
        noise_floor: -1e9,
        prescreen_margin: 0.0,
        tx_power: radio.tx_power,
        max_reflection_order: radio.max_reflection_order as u64,
        prefetch_horizon: 0,
        prefetch_budget: DEFAULT_PREFETCH_BUDGET,
        direction_hold: DEFAULT_DIRECTION_HOLD,
        mobility_tick: DEFAULT_TICK,
        nodes,
    };
    expect_init(service.call(&WireMessage::InitRequest(init))?)?;
    let reply = service.call(&WireMessage::ChannelRequest(ChannelRequest {
        sim_time: 0.0,
        tx_id: 0,
    }))?;
    let records = match reply {
        WireMessage::ChannelResponse(r) => r.records,
        WireMessage::ErrorResponse { message } => return Err(CliError::Runtime(message)),
        other => return Err(CliError::Runtime(format!("unexpected reply tag 0x{:02x}", other.tag()))),
    };
    let mut rows = Vec::with_capacity(distances.len());
    for (i, &d) in distances.iter().enumerate() {
        let rec = records
            .iter()
            .find(|r| r.rx_id == i as u64 + 1 && r.valid_from == 0.0)
            .ok_or_else(|| CliError::Runtime(format!("no record for receiver at {d} m")))?;
        rows.push(ValidationRow {
            distance: d,
            path_loss: rec.path_loss,
            friis: friis_path_loss_db(d, frequency),
            delay: rec.delay,
            reference_delay: d / SPEED_OF_LIGHT,
        });
    }
    Ok(ValidationReport { frequency, rows })
}

/// Run one scenario file and write `packets.csv` and `summary.json` into
/// `output_dir`.
pub fn cmd_run(config_path: &Path, output_dir: &Path, endpoint: Option<Endpoint>) -> Result<ScenarioMetrics, CliError> {
    let config = ScenarioConfig::load(config_path)?;
    let endpoint = resolve_endpoint(endpoint, Some(&config))?;
    let mut service = endpoint.connect()?;
    let metrics = run_scenario(&config, service.as_mut())?;
    metrics.write_outputs(output_dir).map_err(|e| io_error(output_dir, e))?;
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchScenario {
    pub name: String,
    /// packets/s per station
    pub traffic_rate: f64,
    /// m/s
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkMatrix {
    pub scenarios: Vec<BenchScenario>,
    pub sta_counts: Vec<usize>,
    /// s
    pub duration: f64,
    pub scene: Option<PathBuf>,
    pub seed: u64,
}

impl Default for BenchmarkMatrix {
    fn default() -> Self {
        let s = |name: &str, traffic_rate, speed| BenchScenario {
            name: name.into(),
            traffic_rate,
            speed,
        };
        BenchmarkMatrix {
            scenarios: vec![s("hT_hM", 50.0, 7.0), s("lT_lM", 1.0, 1.0), s("hT_zM", 50.0, 0.0)],
            sta_counts: vec![1, 2, 4, 8, 16],
            duration: 10.0,
            scene: None,
            seed: 1,
        }
    }
}

impl BenchmarkMatrix {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.scenarios.is_empty() {
            return Err(CliError::Validation("benchmark matrix has no scenarios".into()));
        }
        if self.sta_counts.is_empty() {
            return Err(CliError::Validation("benchmark matrix has empty sta_counts".into()));
        }
        if self.sta_counts.contains(&0) {
            return Err(CliError::Validation("sta_counts entries must be >= 1".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(CliError::Validation(format!("duration {} must be > 0", self.duration)));
        }
        Ok(())
    }

    /// Keep only scenarios whose name is listed.
    pub fn select(&mut self, names: &[String]) -> Result<(), CliError> {
        if let Some(bad) = names.iter().find(|n| !self.scenarios.iter().any(|s| &s.name == *n)) {
            return Err(CliError::Validation(format!("unknown scenario {bad}")));
        }
        self.scenarios.retain(|s| names.contains(&s.name));
        Ok(())
    }

    /// Scenario for one matrix cell. The AP hangs from the ceiling of the
    /// left room; stations fill the two rooms four at a time.
    pub fn config(&self, scenario: &BenchScenario, n_sta: usize) -> ScenarioConfig {
        let stas = (0..n_sta)
            .map(|i| {
                let room = (i / 4) % 2;
                let x = 1.0 + (i % 4) as f64 + 5.0 * room as f64;
                let y = 1.0 + ((i / 8) % 3) as f64;
                Vec3::new(x, y, 1.2)
            })
            .collect();
        ScenarioConfig {
            scene: self.scene.clone(),
            radio: RadioParams::default(),
            noise_floor: -94.0,
            snr_threshold: 5.0,
            prescreen_margin: 0.0,
            ap: Vec3::new(2.5, 2.0, 2.5),
            stas,
            mobility: MobilityConfig {
                model: if scenario.speed > 0.0 {
                    MobilityModel::RandomWalk3d
                } else {
                    MobilityModel::ConstantPosition
                },
                speed: scenario.speed,
                direction_hold: DEFAULT_DIRECTION_HOLD,
                tick: DEFAULT_TICK,
            },
            traffic_rate: scenario.traffic_rate,
            duration: self.duration,
            seed: self.seed,
            prefetch: PrefetchConfig {
                horizon: DEFAULT_PREFETCH_HORIZON,
                budget: DEFAULT_PREFETCH_BUDGET,
            },
            airtime: 0.0,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scenario: String,
    pub n_sta: usize,
    pub wall_clock_s: f64,
    pub channel_requests: u64,
    pub records_computed: u64,
    pub cache_hit_rate: f64,
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("scenario,n_sta,wall_clock_s,channel_requests,records_computed,cache_hit_rate\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.scenario, r.n_sta, r.wall_clock_s, r.channel_requests, r.records_computed, r.cache_hit_rate
        );
    }
    s
}

pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut s = format!(
        "{:<8} {:>5} {:>12} {:>10} {:>10} {:>9}\n",
        "scenario", "n_sta", "wall_s", "requests", "records", "hit_rate"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<8} {:>5} {:>12.4} {:>10} {:>10} {:>9.5}",
            r.scenario, r.n_sta, r.wall_clock_s, r.channel_requests, r.records_computed, r.cache_hit_rate
        );
    }
    s
}

/// Run every scenario at every station count, each against a fresh server
/// session, and write `bench.csv` into `output_dir`.
pub fn cmd_bench(matrix: &BenchmarkMatrix, output_dir: &Path, endpoint: &Endpoint) -> Result<Vec<BenchRow>, CliError> {
    matrix.validate()?;
    if let Some(scene) = &matrix.scene {
        if !scene.is_file() {
            return Err(CliError::Validation(format!(
                "scene {} does not exist",
                scene.display()
            )));
        }
    }
    let mut rows = Vec::new();
    for scenario in &matrix.scenarios {
        for &n in &matrix.sta_counts {
            let config = matrix.config(scenario, n);
            config.validate()?;
            let mut service = endpoint.connect()?;
            let m = run_scenario(&config, service.as_mut())
                .map_err(|e| CliError::Runtime(format!("{} with {n} stations: {e}", scenario.name)))?;
            info!("{} n_sta={n}: {:.3} s", scenario.name, m.wall_clock_s);
            rows.push(BenchRow {
                scenario: scenario.name.clone(),
                n_sta: n,
                wall_clock_s: m.wall_clock_s,
                channel_requests: m.channel_requests,
                records_computed: m.records_received,
                cache_hit_rate: m.cache.hit_rate(),
            });
        }
    }
    fs::create_dir_all(output_dir).map_err(|e| io_error(output_dir, e))?;
    let path = output_dir.join("bench.csv");
    fs::write(&path, bench_csv(&rows)).map_err(|e| io_error(&path, e))?;
    Ok(rows)
}

/// Bind and serve until a client sends a shutdown request. Prints the bound
/// address to stderr so callers can use port 0.
pub fn cmd_server(listen: &str, workers: Option<usize>) -> Result<(), CliError> {
    let listener = TcpListener::bind(listen).map_err(|e| CliError::Runtime(format!("cannot bind {listen}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut server = match workers {
        Some(0) => return Err(CliError::Validation("--workers must be >= 1".into())),
        Some(n) => ChannelServer::with_workers(n).map_err(|e| CliError::Runtime(e.to_string()))?,
        None => ChannelServer::new(),
    };
    eprintln!("listening on {addr}");
    serve(&listener, &mut server).map_err(|e| CliError::Runtime(e.to_string()))
}
