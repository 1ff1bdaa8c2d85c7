//! Python bindings: tracks, feature extraction, the autoencoder, and
//! detection.

use std::fs::File;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use trackae::anomaly::{self, AnomalyClass, ClassifierConfig, ThresholdMethod, ThresholdPolicy};
use trackae::autoencoder::{self as ae, Autoencoder, ModelConfig, TrainOptions};
use trackae::features::{self, FeatureSeries, FilterRuleSet};
use trackae::synth::{self, AirportProfile, InjectionSpec};
use trackae::{pipeline, selfcheck, Error, LatLon};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Numerical(_) | Error::InvalidState(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn method_from(threshold: &str, q: Option<f64>) -> PyResult<ThresholdMethod> {
    match (threshold, q) {
        ("max", None) => Ok(ThresholdMethod::MaxTrainMae),
        ("quantile", Some(q)) => {
            let m = ThresholdMethod::Quantile { q };
            m.validate().map_err(py_err)?;
            Ok(m)
        }
        ("quantile", None) => Err(PyValueError::new_err("quantile threshold needs q")),
        (other, _) => Err(PyValueError::new_err(format!("unknown threshold method `{other}`, expected `max` or `quantile`"))),
    }
}

#[pyfunction]
fn haversine_nm(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    trackae::haversine_nm(LatLon::new(lat1, lon1), LatLon::new(lat2, lon2))
}

#[pyclass(name = "Airport", module = "trackae", from_py_object)]
#[derive(Clone)]
struct PyAirport {
    inner: trackae::AirportConfig,
}

#[pymethods]
impl PyAirport {
    /// Parses an airport config file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: trackae::AirportConfig::load(path.as_ref()).map_err(py_err)? })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: trackae::AirportConfig::parse(text).map_err(py_err)? })
    }

    /// The airport of the built-in synthetic profile.
    #[staticmethod]
    fn synthetic() -> Self {
        Self { inner: AirportProfile::default().airport_config() }
    }

    #[getter]
    fn code(&self) -> String {
        self.inner.airport_code.clone()
    }

    #[getter]
    fn terminal_radius_nm(&self) -> f64 {
        self.inner.terminal_radius
    }

    fn distance_to_threshold(&self, lat: f64, lon: f64) -> f64 {
        self.inner.distance_to_threshold(LatLon::new(lat, lon))
    }

    fn to_config_string(&self) -> String {
        self.inner.to_config_string()
    }
}

#[pyclass(name = "Track", module = "trackae", from_py_object)]
#[derive(Clone)]
struct PyTrack {
    inner: trackae::Track,
}

#[pymethods]
impl PyTrack {
    #[getter]
    fn flight_id(&self) -> String {
        self.inner.flight_id.clone()
    }

    #[getter]
    fn aircraft_type(&self) -> String {
        self.inner.aircraft_type.clone()
    }

    #[getter]
    fn is_helicopter(&self) -> bool {
        self.inner.is_helicopter
    }

    #[getter]
    fn weight_class(&self) -> &'static str {
        self.inner.weight_class.as_str()
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }

    /// `(t, lat, lon, alt_ft, gs_kts)` per point, missing values as None.
    fn points(&self) -> Vec<(f64, f64, f64, Option<f64>, Option<f64>)> {
        self.inner.points.iter().map(|p| (p.t, p.lat, p.lon, p.alt, p.gs)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.points.len()
    }

    fn __repr__(&self) -> String {
        format!("Track({:?}, {} points)", self.inner.flight_id, self.inner.points.len())
    }
}

#[pyclass(name = "FeatureSeries", module = "trackae", from_py_object)]
#[derive(Clone)]
struct PySeries {
    inner: FeatureSeries,
}

#[pymethods]
impl PySeries {
    #[new]
    fn new(flight_id: String, alt: Vec<f64>, gs: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: FeatureSeries::new(flight_id, alt, gs).map_err(py_err)? })
    }

    #[getter]
    fn flight_id(&self) -> String {
        self.inner.flight_id.clone()
    }

    #[getter]
    fn alt(&self) -> Vec<f64> {
        self.inner.alt.clone()
    }

    #[getter]
    fn gs(&self) -> Vec<f64> {
        self.inner.gs.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("FeatureSeries({:?}, len={})", self.inner.flight_id, self.inner.len())
    }
}

fn unwrap_series(xs: &[PySeries]) -> Vec<FeatureSeries> {
    xs.iter().map(|s| s.inner.clone()).collect()
}

/// Reads a track CSV file; returns the tracks and `(flight_id, reason)`
/// for every rejected row or flight.
#[pyfunction]
fn read_tracks(path: &str) -> PyResult<(Vec<PyTrack>, Vec<(String, String)>)> {
    let f = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
    let parsed = trackae::parse_tracks(f).map_err(py_err)?;
    Ok((
        parsed.tracks.into_iter().map(|inner| PyTrack { inner }).collect(),
        parsed.rejects.into_iter().map(|r| (r.flight_id, r.reason)).collect(),
    ))
}

#[pyfunction]
fn write_tracks(path: &str, tracks: Vec<PyTrack>) -> PyResult<()> {
    let f = File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
    let tracks: Vec<trackae::Track> = tracks.into_iter().map(|t| t.inner).collect();
    trackae::write_tracks(f, &tracks).map_err(py_err)
}

/// Clips, filters and resamples tracks. Returns the preliminary-normal
/// series and `(flight_id, [reason, ...])` for every flagged track.
#[pyfunction]
#[pyo3(signature = (tracks, airport, length = 256))]
fn ingest(tracks: Vec<PyTrack>, airport: &PyAirport, length: usize) -> (Vec<PySeries>, Vec<(String, Vec<String>)>) {
    let got = pipeline::process_tracks(tracks.into_iter().map(|t| t.inner).collect(), &airport.inner, &FilterRuleSet::default(), length);
    let flagged = got
        .processed
        .iter()
        .filter(|p| !p.verdict.is_normal())
        .map(|p| (p.track.flight_id.clone(), p.verdict.reasons().iter().map(|r| r.code().to_string()).collect()))
        .collect();
    (got.normal_series().into_iter().map(|inner| PySeries { inner }).collect(), flagged)
}

/// Anomaly category of one track, e.g. `ground_track`, or None when the
/// track never enters the terminal area.
#[pyfunction]
fn classify(track: &PyTrack, airport: &PyAirport) -> Option<String> {
    let seg = trackae::clip_terminal(&track.inner, &airport.inner)?;
    Some(anomaly::classify_anomaly(&track.inner, &seg, &airport.inner, &ClassifierConfig::default()).code())
}

/// Nominal synthetic arrivals at the built-in airport, followed by
/// `inject_per_type` injected anomalies of each category.
#[pyfunction]
#[pyo3(signature = (n, seed, inject_per_type = 0))]
fn synth_tracks(n: usize, seed: u64, inject_per_type: usize) -> PyResult<Vec<PyTrack>> {
    let profile = AirportProfile::default();
    let mut out = synth::gen_nominal(&profile, n, seed).map_err(py_err)?;
    if inject_per_type > 0 {
        let bases = synth::gen_nominal(&profile, inject_per_type * AnomalyClass::INJECTABLE.len(), seed ^ 0x5eed_1a7e).map_err(py_err)?;
        for (i, base) in bases.iter().enumerate() {
            let kind = AnomalyClass::INJECTABLE[i / inject_per_type];
            out.push(synth::inject(base, &InjectionSpec::for_profile(kind, seed.wrapping_add(i as u64), &profile)).map_err(py_err)?);
        }
    }
    Ok(out.into_iter().map(|inner| PyTrack { inner }).collect())
}

/// Convolutional autoencoder with its normalization statistics and alarm
/// threshold.
#[pyclass(name = "Model", module = "trackae")]
struct PyModel {
    model: Autoencoder,
    threshold: Option<ThresholdPolicy>,
}

impl PyModel {
    fn normalized(&self, xs: &[PySeries]) -> Vec<FeatureSeries> {
        xs.iter().map(|s| features::apply_norm(&s.inner, &self.model.norm_stats)).collect()
    }
}

#[pymethods]
impl PyModel {
    /// Default architecture for series of `input_length` samples.
    #[new]
    #[pyo3(signature = (input_length = 256, seed = 0))]
    fn new(input_length: usize, seed: u64) -> PyResult<Self> {
        let config = ModelConfig::default().with_input_length(input_length).with_seed(seed);
        Ok(Self { model: ae::init_model(config).map_err(py_err)?, threshold: None })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ckpt = ae::load_checkpoint(path).map_err(py_err)?;
        Ok(Self { model: ckpt.model, threshold: ckpt.threshold })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        ae::save_checkpoint(&self.model, self.threshold.as_ref(), path).map_err(py_err)
    }

    #[getter]
    fn input_length(&self) -> usize {
        self.model.config.input_length
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.model.parameter_count()
    }

    /// The calibrated threshold, or None.
    #[getter]
    fn threshold(&self) -> Option<f64> {
        self.threshold.and_then(|p| p.value)
    }

    /// Fits normalization on `series` (physical units) and trains; returns
    /// the per-epoch losses. Any previous threshold is dropped.
    #[pyo3(signature = (series, epochs = 30, batch_size = 32, lr = 2e-3, seed = 0))]
    fn fit(&mut self, py: Python<'_>, series: Vec<PySeries>, epochs: usize, batch_size: usize, lr: f64, seed: u64) -> PyResult<Vec<f64>> {
        let raw = unwrap_series(&series);
        self.model.norm_stats = features::fit_norm_stats(&raw).map_err(py_err)?;
        let set: Vec<FeatureSeries> = raw.iter().map(|s| features::apply_norm(s, &self.model.norm_stats)).collect();
        let opts = TrainOptions { epochs, batch_size, lr, seed, stop_at_loss: None };
        let model = &mut self.model;
        let report = py.detach(|| ae::train(model, &set, &opts)).map_err(py_err)?;
        self.threshold = None;
        Ok(report.epoch_losses)
    }

    /// Sets the threshold from reconstruction errors on `series`:
    /// `max` or `quantile` with `q`.
    #[pyo3(signature = (series, method = "max", q = None))]
    fn calibrate(&mut self, series: Vec<PySeries>, method: &str, q: Option<f64>) -> PyResult<f64> {
        let method = method_from(method, q)?;
        let policy = anomaly::calibrate_threshold(&self.model, &self.normalized(&series), method).map_err(py_err)?;
        self.threshold = Some(policy);
        policy.delta().map_err(py_err)
    }

    /// Reconstruction MAE of each series, in normalized units.
    fn score(&self, series: Vec<PySeries>) -> PyResult<Vec<f64>> {
        anomaly::score_all(&self.model, &self.normalized(&series)).map_err(py_err)
    }

    /// Whether each series' MAE exceeds the calibrated threshold.
    fn detect(&self, series: Vec<PySeries>) -> PyResult<Vec<bool>> {
        let policy = self.threshold.unwrap_or_default();
        let delta = policy.delta().map_err(py_err)?;
        Ok(self.score(series)?.into_iter().map(|e| e > delta).collect())
    }

    /// Reconstruction in physical units.
    fn reconstruct(&self, series: &PySeries) -> PyResult<PySeries> {
        let x = features::apply_norm(&series.inner, &self.model.norm_stats).to_tensor();
        let shape = [1, x.shape()[0], x.shape()[1]];
        let x = trackae::tensor::Tensor::new(shape.to_vec(), x.into_data()).map_err(py_err)?;
        let rec = self.model.reconstruct(&x).map_err(py_err)?;
        let rec = FeatureSeries::from_tensor(series.inner.flight_id.clone(), &rec).map_err(py_err)?;
        Ok(PySeries { inner: self.model.norm_stats.invert(&rec) })
    }

    fn __repr__(&self) -> String {
        format!("Model(input_length={}, parameters={}, threshold={:?})", self.input_length(), self.parameter_count(), self.threshold())
    }
}

/// Runs the numerical self-checks; returns `(name, max_error, tolerance,
/// passed)` per check.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn self_check(py: Python<'_>, seed: u64) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let opts = selfcheck::CheckOptions { seed, ..Default::default() };
    let results = py.detach(|| selfcheck::run_all(&opts)).map_err(py_err)?;
    Ok(results.into_iter().map(|r| (r.name.to_string(), r.max_error, r.tolerance, r.passed())).collect())
}

#[pymodule]
#[pyo3(name = "trackae")]
pub fn trackae_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAirport>()?;
    m.add_class::<PyTrack>()?;
    m.add_class::<PySeries>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(haversine_nm, m)?)?;
    m.add_function(wrap_pyfunction!(read_tracks, m)?)?;
    m.add_function(wrap_pyfunction!(write_tracks, m)?)?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(synth_tracks, m)?)?;
    m.add_function(wrap_pyfunction!(self_check, m)?)?;
    Ok(())
}
