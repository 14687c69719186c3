//! Python bindings: scenes, path tracing, link channels, the channel cache
//! and scenario runs against an in-process server.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::Path;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use raychan::channel_cache::{self, CacheStats, ChannelRecord, RecordSource};
use raychan::client::EmbeddedChannelClient;
use raychan::geometry::Vec3;
use raychan::netsim::{self, ScenarioConfig};
use raychan::raytracer::{self, Cfr};
use raychan::scene::{self, Material, Triangle};

type Point = (f64, f64, f64);

fn vec3(p: Point) -> Vec3 {
    Vec3::new(p.0, p.1, p.2)
}

fn point(v: Vec3) -> Point {
    (v.x, v.y, v.z)
}

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(module = "raychan_py", frozen)]
struct Scene {
    inner: scene::Scene,
}

#[pymethods]
impl Scene {
    /// Load an XML scene descriptor and the OBJ meshes it references.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Scene> {
        scene::load_scene(path)
            .map(|inner| Scene { inner })
            .map_err(value_error)
    }

    #[staticmethod]
    fn free_space() -> Scene {
        Scene {
            inner: scene::Scene::empty(),
        }
    }

    /// `materials` is a list of `(name, permittivity, conductivity)`;
    /// `triangles` a list of `(v0, v1, v2, material_index)`.
    #[staticmethod]
    fn from_triangles(
        materials: Vec<(String, f64, f64)>,
        triangles: Vec<(Point, Point, Point, usize)>,
    ) -> PyResult<Scene> {
        let mats = materials
            .into_iter()
            .map(|(name, eps, sigma)| Material::new(name, eps, sigma))
            .collect::<Result<Vec<_>, _>>()
            .map_err(value_error)?;
        let tris = triangles
            .into_iter()
            .map(|(a, b, c, m)| Triangle::new(vec3(a), vec3(b), vec3(c), m))
            .collect();
        scene::Scene::new(tris, mats)
            .map(|inner| Scene { inner })
            .map_err(value_error)
    }

    #[getter]
    fn num_triangles(&self) -> usize {
        self.inner.triangles().len()
    }

    #[getter]
    fn material_names(&self) -> Vec<String> {
        self.inner.materials().iter().map(|m| m.name.clone()).collect()
    }

    /// `(min, max)` corners, or `None` for an empty scene.
    #[getter]
    fn bounds(&self) -> Option<(Point, Point)> {
        let b = self.inner.bounds();
        (!b.is_empty()).then(|| (point(b.min), point(b.max)))
    }

    /// Nearest surface hit as `(distance, triangle_index, point)`.
    #[pyo3(signature = (origin, direction, t_max = f64::INFINITY))]
    fn intersect(&self, origin: Point, direction: Point, t_max: f64) -> Option<(f64, usize, Point)> {
        self.inner
            .intersect(vec3(origin), vec3(direction), t_max)
            .map(|h| (h.distance, h.triangle_index, point(h.point)))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scene({} triangles, {} materials)",
            self.inner.triangles().len(),
            self.inner.materials().len()
        )
    }
}

#[pyclass(module = "raychan_py", name = "RadioParams", from_py_object)]
#[derive(Clone)]
struct PyRadioParams {
    inner: raytracer::RadioParams,
}

#[pymethods]
impl PyRadioParams {
    #[new]
    #[pyo3(signature = (center_frequency = 5e9, bandwidth = 20e6, fft_size = 64, max_reflection_order = 3, tx_power = 20.0))]
    fn new(
        center_frequency: f64,
        bandwidth: f64,
        fft_size: usize,
        max_reflection_order: usize,
        tx_power: f64,
    ) -> PyResult<Self> {
        let inner = raytracer::RadioParams {
            center_frequency,
            bandwidth,
            fft_size,
            max_reflection_order,
            tx_power,
        };
        inner.validate().map_err(value_error)?;
        Ok(PyRadioParams { inner })
    }

    #[getter]
    fn center_frequency(&self) -> f64 {
        self.inner.center_frequency
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.inner.bandwidth
    }

    #[getter]
    fn fft_size(&self) -> usize {
        self.inner.fft_size
    }

    #[getter]
    fn max_reflection_order(&self) -> usize {
        self.inner.max_reflection_order
    }

    #[getter]
    fn tx_power(&self) -> f64 {
        self.inner.tx_power
    }

    fn wavelength(&self) -> f64 {
        self.inner.wavelength()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "RadioParams(center_frequency={}, bandwidth={}, fft_size={}, max_reflection_order={}, tx_power={})",
            p.center_frequency, p.bandwidth, p.fft_size, p.max_reflection_order, p.tx_power
        )
    }
}

/// Specular paths from `tx` to `rx`, sorted by delay. Each path is a dict
/// with `vertices`, `faces`, `length` and `delay`.
#[pyfunction]
#[pyo3(signature = (scene, tx, rx, max_order = 3))]
fn trace_paths<'py>(
    py: Python<'py>,
    scene: &Scene,
    tx: Point,
    rx: Point,
    max_order: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    if max_order > raytracer::MAX_REFLECTION_ORDER_LIMIT {
        return Err(value_error(format!(
            "max_order {max_order} exceeds {}",
            raytracer::MAX_REFLECTION_ORDER_LIMIT
        )));
    }
    raytracer::trace_paths(&scene.inner, vec3(tx), vec3(rx), max_order)
        .into_iter()
        .map(|p| {
            let d = PyDict::new(py);
            d.set_item("vertices", p.vertices.iter().map(|v| point(*v)).collect::<Vec<_>>())?;
            d.set_item("faces", p.faces.clone())?;
            d.set_item("length", p.total_length)?;
            d.set_item("delay", p.delay)?;
            Ok(d)
        })
        .collect()
}

/// Path loss (dB), delay (s) and per-subcarrier response between two points.
#[pyfunction]
#[pyo3(signature = (scene, a, b, params = None))]
fn compute_channel<'py>(
    py: Python<'py>,
    scene: &Scene,
    a: Point,
    b: Point,
    params: Option<PyRadioParams>,
) -> PyResult<Bound<'py, PyDict>> {
    let params = params.map(|p| p.inner).unwrap_or_default();
    let link = raytracer::compute_link(&scene.inner, vec3(a), vec3(b), &params);
    let d = PyDict::new(py);
    d.set_item("path_loss", link.path_loss)?;
    d.set_item("delay", link.delay)?;
    d.set_item("cfr", link.cfr.values)?;
    Ok(d)
}

/// Coherence time in seconds; infinite for zero relative speed.
#[pyfunction]
fn coherence_ttl(relative_speed: f64, frequency: f64) -> PyResult<f64> {
    if !(relative_speed >= 0.0) || !(frequency > 0.0) {
        return Err(value_error("speed must be >= 0 and frequency > 0"));
    }
    Ok(channel_cache::coherence_ttl(relative_speed, frequency))
}

#[pyfunction]
fn friis_path_loss(distance: f64, frequency: f64) -> f64 {
    raytracer::friis_path_loss_db(distance, frequency)
}

/// Perpendicular-polarization reflection coefficient of a half-space.
#[pyfunction]
fn fresnel_coefficient(
    cos_incidence: f64,
    permittivity: f64,
    conductivity: f64,
    frequency: f64,
) -> PyResult<Complex64> {
    let m = Material::new("m", permittivity, conductivity).map_err(value_error)?;
    Ok(raytracer::fresnel_coefficient(cos_incidence, &m, frequency))
}

fn stats_dict<'py>(py: Python<'py>, s: &CacheStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("hits", s.hits)?;
    d.set_item("misses", s.misses)?;
    d.set_item("prescreen_skips", s.prescreen_skips)?;
    d.set_item("prefetch_hits", s.prefetch_hits)?;
    d.set_item("hit_rate", s.hit_rate())?;
    Ok(d)
}

#[pyclass(module = "raychan_py")]
#[derive(Default)]
struct ChannelCache {
    inner: channel_cache::ChannelCache,
}

#[pymethods]
impl ChannelCache {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    /// Store a record valid on `[computed_at, computed_at + ttl)`.
    #[pyo3(signature = (a, b, path_loss, delay, computed_at, ttl = f64::INFINITY))]
    fn insert(&mut self, a: u64, b: u64, path_loss: f64, delay: f64, computed_at: f64, ttl: f64) -> PyResult<()> {
        if a == b {
            return Err(value_error("a node has no channel to itself"));
        }
        self.inner.insert(
            a,
            b,
            ChannelRecord {
                path_loss,
                delay,
                cfr: Cfr {
                    values: Vec::new(),
                    subcarrier_spacing: 0.0,
                },
                computed_at,
                ttl,
                source: RecordSource::Raytraced,
            },
        );
        Ok(())
    }

    /// `(path_loss, delay)` of the record valid at `now`, or `None`.
    fn lookup(&mut self, a: u64, b: u64, now: f64) -> PyResult<Option<(f64, f64)>> {
        if a == b {
            return Err(value_error("a node has no channel to itself"));
        }
        Ok(self.inner.lookup(a, b, now).map(|r| (r.path_loss, r.delay)))
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        stats_dict(py, &self.inner.stats())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Run a JSON scenario against an in-process server. Returns a dict with
/// the summary fields plus `packets_csv`.
#[pyfunction]
#[pyo3(signature = (config_json, base_dir = "."))]
fn run_scenario<'py>(py: Python<'py>, config_json: &str, base_dir: &str) -> PyResult<Bound<'py, PyDict>> {
    let config = ScenarioConfig::from_json(config_json, Path::new(base_dir)).map_err(value_error)?;
    let mut client = EmbeddedChannelClient::default();
    let m = netsim::run_scenario(&config, &mut client).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("packets", m.packets.len())?;
    d.set_item("delivery_ratio", m.delivery_ratio())?;
    d.set_item("mean_rx_power_dbm", m.mean_rx_power())?;
    d.set_item("cache", stats_dict(py, &m.cache)?)?;
    d.set_item("channel_requests", m.channel_requests)?;
    d.set_item("records_received", m.records_received)?;
    d.set_item("wall_clock_s", m.wall_clock_s)?;
    d.set_item("packets_csv", m.packets_csv())?;
    Ok(d)
}

#[pymodule]
fn raychan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scene>()?;
    m.add_class::<PyRadioParams>()?;
    m.add_class::<ChannelCache>()?;
    m.add_function(wrap_pyfunction!(trace_paths, m)?)?;
    m.add_function(wrap_pyfunction!(compute_channel, m)?)?;
    m.add_function(wrap_pyfunction!(coherence_ttl, m)?)?;
    m.add_function(wrap_pyfunction!(friis_path_loss, m)?)?;
    m.add_function(wrap_pyfunction!(fresnel_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add("SPEED_OF_LIGHT", raytracer::SPEED_OF_LIGHT)?;
    Ok(())
}
