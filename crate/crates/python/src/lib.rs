use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use roomsparse_core::channel_est;
use roomsparse_core::eval;
use roomsparse_core::forward::{self, Rir};
use roomsparse_core::geom_est::{self, RoomSearch};
use roomsparse_core::io::parse_scene;
use roomsparse_core::pipeline;
use roomsparse_core::recovery::SolverConfig;
use roomsparse_core::scene::{self, Point, RoomSpec, Surface};
use roomsparse_core::stft::{self as core_stft, StftConfig, Window};
use roomsparse_core::{Error, C64};

fn err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn pt(p: [f64; 3]) -> Point {
    Point::new(p[0], p[1], p[2])
}

fn arr(p: &Point) -> [f64; 3] {
    [p.x, p.y, p.z]
}

/// Shoebox room with per-surface reflection coefficients.
#[pyclass(name = "Room", from_py_object)]
#[derive(Clone)]
struct PyRoom {
    inner: RoomSpec,
}

#[pymethods]
impl PyRoom {
    /// `reflection` is one value or six in the order x_low, x_high, y_low, y_high, floor, ceiling.
    #[new]
    #[pyo3(signature = (dims, reflection, sound_speed = scene::DEFAULT_SOUND_SPEED))]
    fn new(dims: [f64; 3], reflection: Vec<f64>, sound_speed: f64) -> PyResult<Self> {
        let refl: [f64; 6] = match reflection.len() {
            1 => [reflection[0]; 6],
            6 => [reflection[0], reflection[1], reflection[2], reflection[3], reflection[4], reflection[5]],
            n => return Err(PyValueError::new_err(format!("expected 1 or 6 reflection values, got {n}"))),
        };
        let inner = RoomSpec::with_reflections(dims, refl)
            .and_then(|r| r.with_sound_speed(sound_speed))
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dims(&self) -> [f64; 3] {
        arr(&self.inner.dims())
    }

    #[getter]
    fn reflections(&self) -> Vec<f64> {
        Surface::ALL.iter().map(|&s| self.inner.reflection(s, None)).collect()
    }

    #[getter]
    fn sound_speed(&self) -> f64 {
        self.inner.sound_speed()
    }

    fn rt60_sabine(&self) -> PyResult<f64> {
        channel_est::rt60_sabine(&self.inner).map_err(err)
    }

    /// `(position, order, gain)` for every image up to `max_order`.
    fn images(&self, source: [f64; 3], max_order: i32) -> PyResult<Vec<([f64; 3], u32, f64)>> {
        let set = scene::enumerate_images(&self.inner, &pt(source), max_order, None).map_err(err)?;
        Ok(set.iter().map(|i| (arr(&i.position), i.order, i.gain)).collect())
    }

    /// Image-model impulse response; the length defaults to the shortest one holding every image.
    #[pyo3(signature = (source, mic, sample_rate, max_order, length = None))]
    fn rir(&self, source: [f64; 3], mic: [f64; 3], sample_rate: f64, max_order: i32, length: Option<usize>) -> PyResult<Vec<f64>> {
        let (s, m) = (pt(source), pt(mic));
        let len = match length {
            Some(l) => l,
            None => forward::required_rir_length(&self.inner, &s, &m, sample_rate, max_order).map_err(err)?,
        };
        Ok(forward::synthesize_rir(&self.inner, &s, &m, sample_rate, max_order, len).map_err(err)?.taps)
    }

    fn __repr__(&self) -> String {
        let d = self.inner.dims();
        format!("Room(dims=[{}, {}, {}])", d.x, d.y, d.z)
    }
}

/// Short-time Fourier transform with a periodic Hann window.
#[pyclass(name = "Stft", from_py_object)]
#[derive(Clone)]
struct PyStft {
    inner: StftConfig,
}

#[pymethods]
impl PyStft {
    #[new]
    #[pyo3(signature = (sample_rate, frame_ms = 256.0, overlap = 0.25))]
    fn new(sample_rate: f64, frame_ms: f64, overlap: f64) -> PyResult<Self> {
        let inner = StftConfig::from_durations(sample_rate, frame_ms, overlap, Window::Hann).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn frame_len(&self) -> usize {
        self.inner.frame_len
    }

    #[getter]
    fn hop(&self) -> usize {
        self.inner.hop
    }

    /// `bins × frames` coefficients of one signal.
    fn analyze(&self, signal: Vec<f64>) -> PyResult<Vec<Vec<C64>>> {
        let t = core_stft::analyze(&signal, &self.inner).map_err(err)?;
        let m = t.channel(0);
        Ok((0..m.nrows()).map(|k| m.row(k).iter().copied().collect()).collect())
    }

    /// Analysis followed by synthesis.
    fn round_trip(&self, signal: Vec<f64>) -> PyResult<Vec<f64>> {
        let t = core_stft::analyze(&signal, &self.inner).map_err(err)?;
        let mut out = core_stft::synthesize(&t).map_err(err)?.remove(0);
        out.truncate(signal.len());
        Ok(out)
    }
}

#[pyfunction]
fn rt60_from_edc(taps: Vec<f64>, sample_rate: f64) -> PyResult<f64> {
    let rir = Rir::new(taps, sample_rate).map_err(err)?;
    channel_est::rt60_from_edc(&rir).map_err(err)
}

#[pyfunction]
fn sir(estimate: Vec<f64>, target: Vec<f64>, interferers: Vec<Vec<f64>>) -> PyResult<f64> {
    let refs: Vec<&[f64]> = interferers.iter().map(|v| v.as_slice()).collect();
    eval::sir(&estimate, &target, &refs).map_err(err)
}

/// Mutual coherence of a complex matrix given as rows.
#[pyfunction]
fn coherence(rows: Vec<Vec<C64>>) -> PyResult<f64> {
    let n = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("rows differ in length"));
    }
    let m = roomsparse_core::linalg::CMat::from_fn(rows.len(), n, |i, j| rows[i][j]);
    Ok(forward::coherence(&m).map_err(err)?.mu)
}

/// Shoebox fit to images clustered per source.
#[pyfunction]
fn fit_room<'py>(
    py: Python<'py>,
    sources: Vec<[f64; 3]>,
    clusters: Vec<Vec<[f64; 3]>>,
    mics: Vec<[f64; 3]>,
) -> PyResult<Bound<'py, PyDict>> {
    let s: Vec<Point> = sources.into_iter().map(pt).collect();
    let c: Vec<Vec<Point>> = clusters.into_iter().map(|v| v.into_iter().map(pt).collect()).collect();
    let m: Vec<Point> = mics.into_iter().map(pt).collect();
    let fit = geom_est::fit_room(&s, &c, &m, &RoomSearch::default()).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("dims", fit.dims)?;
    d.set_item("origin", fit.origin)?;
    d.set_item("fit_residual", fit.fit_residual)?;
    d.set_item("unresolved_axes", fit.unresolved_axes)?;
    Ok(d)
}

/// Seeded simulation of a scene document (JSON text).
#[pyfunction]
fn simulate<'py>(py: Python<'py>, scene_json: &str, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let doc: serde_json::Value = serde_json::from_str(scene_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let cfg = parse_scene(&doc, std::path::Path::new(".")).map_err(err)?;
    let sim = pipeline::simulate_scene(&cfg, seed).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("recordings", sim.simulation.recordings)?;
    d.set_item("dry", sim.dry)?;
    d.set_item("sample_rate", cfg.sample_rate)?;
    Ok(d)
}

/// Localize the scene's sources on its grid, invert the estimated channel and score against the dry signals.
#[pyfunction]
#[pyo3(signature = (scene_json, seed, lo_hz = 300.0, hi_hz = 3000.0, n_bins = 24))]
fn separate<'py>(
    py: Python<'py>,
    scene_json: &str,
    seed: u64,
    lo_hz: f64,
    hi_hz: f64,
    n_bins: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let doc: serde_json::Value = serde_json::from_str(scene_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let cfg = parse_scene(&doc, std::path::Path::new(".")).map_err(err)?;
    let sim = pipeline::simulate_scene(&cfg, seed).map_err(err)?;
    let stft = StftConfig::pipeline_default(cfg.sample_rate).map_err(err)?;
    let bins = pipeline::band_bins(&stft, lo_hz, hi_hz, n_bins).map_err(err)?;
    let grid = scene::build_grid(&cfg.room, cfg.grid.spacing, cfg.grid.height, cfg.grid.margin).map_err(err)?;
    let n = cfg.sources.len();
    let solver = SolverConfig {
        structure: format!("block:{}", bins.len()),
        n_active: n,
        ..SolverConfig::default()
    };
    let rec = &sim.simulation.recordings;
    let run = py
        .detach(|| pipeline::separate_localized(rec, &stft, &cfg.array, &cfg.room, &grid, cfg.max_order, &bins, &solver, n))
        .map_err(err)?;
    let truth: Vec<Point> = cfg.sources.iter().map(|s| s.position).collect();
    let assign = pipeline::match_sources(&run.positions, &truth);
    let scores = pipeline::score_separation(&run.signals, &assign, &sim.dry, rec, &cfg.array, &truth).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("positions", run.positions.iter().map(arr).collect::<Vec<_>>())?;
    d.set_item("signals", run.signals)?;
    d.set_item("sir_db", scores.iter().map(|s| s.sir_db).collect::<Vec<_>>())?;
    d.set_item("baseline_sir_db", scores.iter().map(|s| s.baseline_sir_db).collect::<Vec<_>>())?;
    Ok(d)
}

/// `(layout, trial, mu)` rows for compact and random arrays over the room's grid.
#[pyfunction]
#[pyo3(signature = (room, spacing, height, freq_hz = 1000.0, mics = 8, trials = 20, seed = 0, max_order = 1))]
#[allow(clippy::too_many_arguments)]
fn coherence_sweep(
    room: &PyRoom,
    spacing: f64,
    height: f64,
    freq_hz: f64,
    mics: usize,
    trials: usize,
    seed: u64,
    max_order: i32,
) -> PyResult<Vec<(String, usize, f64)>> {
    let grid = scene::build_grid(&room.inner, spacing, height, spacing).map_err(err)?;
    let rows = pipeline::coherence_sweep(&room.inner, &grid, freq_hz, mics, max_order, trials, seed).map_err(err)?;
    Ok(rows
        .into_iter()
        .map(|r| {
            let name = match r.layout {
                pipeline::ArrayLayout::Compact => "compact",
                pipeline::ArrayLayout::Random => "random",
            };
            (name.to_string(), r.trial, r.mu)
        })
        .collect())
}

#[pymodule]
fn roomsparse(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRoom>()?;
    m.add_class::<PyStft>()?;
    m.add_function(wrap_pyfunction!(rt60_from_edc, m)?)?;
    m.add_function(wrap_pyfunction!(sir, m)?)?;
    m.add_function(wrap_pyfunction!(coherence, m)?)?;
    m.add_function(wrap_pyfunction!(fit_room, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(separate, m)?)?;
    m.add_function(wrap_pyfunction!(coherence_sweep, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
