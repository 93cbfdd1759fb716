//! Python bindings: label maps, flow fields, masks, the simulator, the
//! tracker, training and VPQ evaluation.

use hybridtrack::association::{self as assoc, track_sequence};
use hybridtrack::config::RunConfig;
use hybridtrack::correlation::{CorrelationMatrix, MatrixKind};
use hybridtrack::instance::{self as inst, InstanceTracker};
use hybridtrack::mask::{self as mask, Category, Label};
use hybridtrack::simulator::{self as sim, GeneratedSequence};
use hybridtrack::{flow, pixel, vpq, Error};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.root() {
        Error::Io(_) => PyIOError::new_err(msg),
        Error::Invariant(_) => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for hybridtrack::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Per-pixel panoptic labels with their category table.
#[pyclass(name = "SegmentationMap", module = "pyhybridtrack", frozen, from_py_object)]
#[derive(Clone)]
pub struct PySegmentationMap {
    inner: mask::SegmentationMap,
}

#[pymethods]
impl PySegmentationMap {
    /// `labels` holds `(class_id << 16) | instance_id` per pixel in row-major
    /// order; `categories` holds `(class_id, is_thing, name)`.
    #[new]
    fn new(width: usize, height: usize, labels: Vec<u32>, categories: Vec<(u16, bool, String)>) -> PyResult<Self> {
        let cats = categories
            .into_iter()
            .map(|(class_id, is_thing, name)| Category {
                class_id,
                is_thing,
                name,
            })
            .collect();
        let labels = labels.into_iter().map(Label::from_packed).collect();
        Ok(Self {
            inner: mask::SegmentationMap::new(width, height, labels, cats).py()?,
        })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: mask::read_segmap(path).py()?,
        })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        mask::write_segmap(&self.inner, path).py()
    }

    #[staticmethod]
    fn decode(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: mask::decode_segmap(data).py()?,
        })
    }

    fn encode(&self) -> Vec<u8> {
        mask::encode_segmap(&self.inner)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn labels(&self) -> Vec<u32> {
        self.inner.labels().iter().map(|l| l.packed()).collect()
    }

    fn categories(&self) -> Vec<(u16, bool, String)> {
        self.inner
            .categories()
            .iter()
            .map(|c| (c.class_id, c.is_thing, c.name.clone()))
            .collect()
    }

    /// Thing instances as masks, sorted by `(class_id, instance_id)`.
    fn things(&self) -> Vec<PyInstanceMask> {
        mask::extract_things(&self.inner)
            .into_iter()
            .map(|inner| PyInstanceMask { inner })
            .collect()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "SegmentationMap({}x{}, {} things)",
            self.inner.width(),
            self.inner.height(),
            mask::extract_things(&self.inner).len()
        )
    }
}

/// A binary mask of one instance.
#[pyclass(name = "InstanceMask", module = "pyhybridtrack", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyInstanceMask {
    inner: mask::InstanceMask,
}

#[pymethods]
impl PyInstanceMask {
    #[new]
    #[pyo3(signature = (width, height, pixels, class_id = 0, instance_id = 0))]
    fn new(width: usize, height: usize, pixels: Vec<(usize, usize)>, class_id: u16, instance_id: u16) -> Self {
        Self {
            inner: mask::InstanceMask::from_pixels(width, height, class_id, instance_id, pixels),
        }
    }

    #[getter]
    fn area(&self) -> usize {
        self.inner.area()
    }

    #[getter]
    fn class_id(&self) -> u16 {
        self.inner.class_id()
    }

    #[getter]
    fn instance_id(&self) -> u16 {
        self.inner.instance_id()
    }

    fn pixels(&self) -> Vec<(usize, usize)> {
        self.inner.pixels().collect()
    }

    /// `(x_min, y_min, x_max, y_max)`, inclusive.
    fn bounding_box(&self) -> PyResult<(usize, usize, usize, usize)> {
        Ok(mask::bounding_box(&self.inner).py()?.as_tuple())
    }

    /// Flattened `h x w` RoI after crop, aspect-preserving rescale and padding.
    fn roi(&self, h: usize, w: usize) -> PyResult<Vec<f64>> {
        Ok(mask::crop_scale_pad(&self.inner, h, w).py()?.into_values())
    }

    fn warp(&self, flow: &PyFlowField) -> PyResult<Self> {
        Ok(Self {
            inner: flow::warp_mask(&self.inner, &flow.inner).py()?,
        })
    }
}

/// Dense per-pixel displacement `(u, v)`.
#[pyclass(name = "FlowField", module = "pyhybridtrack", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyFlowField {
    inner: flow::FlowField,
}

#[pymethods]
impl PyFlowField {
    #[new]
    fn new(width: usize, height: usize, vectors: Vec<(f32, f32)>) -> PyResult<Self> {
        let v = vectors.into_iter().map(|(u, v)| [u, v]).collect();
        Ok(Self {
            inner: flow::FlowField::new(width, height, v).py()?,
        })
    }

    #[staticmethod]
    fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self {
            inner: flow::FlowField::constant(width, height, u, v),
        }
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: flow::read_flo(path).py()?,
        })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        flow::write_flo(&self.inner, path).py()
    }

    fn with_noise(&self, sigma: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_gaussian_noise(sigma, seed).py()?,
        })
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn vectors(&self) -> Vec<(f32, f32)> {
        self.inner.vectors().iter().map(|&[u, v]| (u, v)).collect()
    }
}

/// A rendered simulator scene.
#[pyclass(name = "Sequence", module = "pyhybridtrack", frozen)]
pub struct PySequence {
    inner: GeneratedSequence,
}

#[pymethods]
impl PySequence {
    /// Frames with per-frame local instance ids.
    #[getter]
    fn frames(&self) -> Vec<PySegmentationMap> {
        wrap_maps(&self.inner.frames)
    }

    /// Frames relabelled with ground-truth track ids.
    #[getter]
    fn gt_frames(&self) -> Vec<PySegmentationMap> {
        wrap_maps(&self.inner.gt_frames)
    }

    #[getter]
    fn flows(&self) -> Vec<PyFlowField> {
        self.inner
            .flows
            .iter()
            .map(|f| PyFlowField { inner: f.clone() })
            .collect()
    }

    fn write(&self, dir: &str) -> PyResult<()> {
        hybridtrack::sequence::write_sequence(std::path::Path::new(dir), &self.inner).py()
    }
}

fn wrap_maps(maps: &[mask::SegmentationMap]) -> Vec<PySegmentationMap> {
    maps.iter()
        .map(|m| PySegmentationMap { inner: m.clone() })
        .collect()
}

fn unwrap_maps(maps: &[PySegmentationMap]) -> Vec<mask::SegmentationMap> {
    maps.iter().map(|m| m.inner.clone()).collect()
}

/// Renders a built-in scene.
#[pyfunction]
#[pyo3(signature = (name, seed = 0))]
fn simulate(name: &str, seed: u64) -> PyResult<PySequence> {
    Ok(PySequence {
        inner: sim::generate(&sim::preset(name, seed).py()?).py()?,
    })
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    sim::PRESET_NAMES.to_vec()
}

fn parse_config(config: &str) -> PyResult<RunConfig> {
    RunConfig::from_text(config).py()
}

/// Runs the tracker. `config` uses the `key = value` file format.
#[pyfunction]
#[pyo3(signature = (frames, flows, config = "", checkpoint = None))]
fn track(
    py: Python<'_>,
    frames: Vec<PySegmentationMap>,
    flows: Vec<PyFlowField>,
    config: &str,
    checkpoint: Option<&str>,
) -> PyResult<Vec<PySegmentationMap>> {
    let cfg = parse_config(config)?;
    let tracker = checkpoint
        .map(|p| InstanceTracker::new(inst::read_checkpoint(p)?, cfg.roi(), cfg.cosine))
        .transpose()
        .py()?;
    let frames = unwrap_maps(&frames);
    let flows: Vec<_> = flows.into_iter().map(|f| f.inner).collect();
    let out = py
        .detach(|| track_sequence(&frames, &flows, &cfg.tracker(), tracker.as_ref()))
        .py()?;
    Ok(wrap_maps(&out.frames))
}

/// Trains an embedding head on distinct-shape scenes and writes a checkpoint.
/// Returns the per-epoch loss trace.
#[pyfunction]
#[pyo3(signature = (scenes, checkpoint_out, config = ""))]
fn train_synthetic(py: Python<'_>, scenes: u64, checkpoint_out: &str, config: &str) -> PyResult<Vec<f64>> {
    let cfg = parse_config(config)?;
    let outcome = py
        .detach(|| -> hybridtrack::Result<_> {
            let mut pairs = Vec::new();
            for k in 0..scenes {
                let seq = sim::generate(&sim::distinct_shapes(cfg.seed.wrapping_add(k)))?;
                pairs.extend(sim::training_pairs(&seq, &cfg.roi())?);
            }
            inst::train(&pairs, &cfg.train())
        })
        .py()?;
    inst::write_checkpoint(&outcome.params, checkpoint_out).py()?;
    Ok(outcome.loss_trace)
}

/// VPQ report: `{"vpq", "vpq_th", "vpq_st", "windows": {L: vpq}}`.
#[pyfunction]
#[pyo3(signature = (pred, gt, windows = vec![1, 2, 3, 4]))]
fn evaluate<'py>(
    py: Python<'py>,
    pred: Vec<PySegmentationMap>,
    gt: Vec<PySegmentationMap>,
    windows: Vec<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let report = vpq::vpq_report(&unwrap_maps(&pred), &unwrap_maps(&gt), &windows).py()?;
    let out = PyDict::new(py);
    out.set_item("vpq", report.vpq)?;
    out.set_item("vpq_th", report.vpq_th)?;
    out.set_item("vpq_st", report.vpq_st)?;
    let per = PyDict::new(py);
    for w in &report.windows {
        per.set_item(w.window, w.vpq)?;
    }
    out.set_item("windows", per)?;
    Ok(out)
}

#[pyfunction]
fn dice(a: &PyInstanceMask, b: &PyInstanceMask) -> PyResult<f64> {
    pixel::dice(&a.inner, &b.inner).py()
}

/// Dice of every flow-warped `prev` mask against every `cur` mask.
#[pyfunction]
#[pyo3(signature = (prev, flow, cur, class_gated = true))]
fn pixel_correlation(
    prev: Vec<PyInstanceMask>,
    flow: &PyFlowField,
    cur: Vec<PyInstanceMask>,
    class_gated: bool,
) -> PyResult<Vec<Vec<f64>>> {
    let p: Vec<_> = prev.into_iter().map(|m| m.inner).collect();
    let c: Vec<_> = cur.into_iter().map(|m| m.inner).collect();
    Ok(pixel::pixel_correlation(&p, &flow.inner, &c, class_gated).py()?.to_rows())
}

#[pyfunction]
fn match_softmax(logits: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    inst::match_softmax(&logits).probs
}

/// Greedy one-to-one assignment; returns `(row, col, score)` triples.
#[pyfunction]
#[pyo3(signature = (scores, tau_match, mutual = false))]
fn greedy_assign(scores: Vec<Vec<f64>>, tau_match: f64, mutual: bool) -> PyResult<Vec<(usize, usize, f64)>> {
    let m = CorrelationMatrix::from_rows(MatrixKind::Fused, &scores).py()?;
    let mut a = assoc::greedy_assign(&m, tau_match);
    if mutual {
        a = assoc::mutual_check(&m, &a);
    }
    Ok(a.matches.iter().map(|x| (x.row, x.col, x.score)).collect())
}

#[pymodule]
fn pyhybridtrack(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySegmentationMap>()?;
    m.add_class::<PyInstanceMask>()?;
    m.add_class::<PyFlowField>()?;
    m.add_class::<PySequence>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(track, m)?)?;
    m.add_function(wrap_pyfunction!(train_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(pixel_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(match_softmax, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_assign, m)?)?;
    Ok(())
}
