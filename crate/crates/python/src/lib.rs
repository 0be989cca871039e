//! Python bindings: masks, bundles, tracking and evaluation.
//!
//! Every operation returns the same documents the command-line tool writes,
//! so scripts can compare outputs byte for byte.

use std::path::Path;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use pvsg::bundle::{self, graph_to_docs, to_json_compact, to_json_pretty, MaskDoc};
use pvsg::cli::{evaluate_bundles, report_json, track_video};
use pvsg::metrics::{evaluate as evaluate_graphs, EvalConfig, TopKScope};
use pvsg::model::{validate_scene_graph, VideoMeta, Vocabulary};
use pvsg::rle::{self, BinaryMask};
use pvsg::track::TrackerConfig;

create_exception!(pvsg_py, PvsgError, PyException);

fn err(e: pvsg::Error) -> PyErr {
    PvsgError::new_err(e.to_string())
}

/// Run-length encoded binary mask.
#[pyclass(name = "Mask", module = "pvsg_py", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyMask(BinaryMask);

#[pymethods]
impl PyMask {
    #[new]
    fn new(runs: Vec<u32>, height: u32, width: u32) -> PyResult<Self> {
        BinaryMask::from_runs(height, width, runs).map(PyMask).map_err(err)
    }

    /// Encodes a flat row-major sequence of booleans.
    #[staticmethod]
    fn encode(pixels: Vec<bool>, height: u32, width: u32) -> PyResult<Self> {
        rle::encode(&pixels, height, width).map(PyMask).map_err(err)
    }

    fn decode(&self) -> PyResult<Vec<bool>> {
        rle::decode(&self.0).map_err(err)
    }

    #[getter]
    fn height(&self) -> u32 {
        self.0.height()
    }

    #[getter]
    fn width(&self) -> u32 {
        self.0.width()
    }

    #[getter]
    fn runs(&self) -> Vec<u32> {
        self.0.runs().to_vec()
    }

    fn area(&self) -> u64 {
        self.0.area()
    }

    fn iou(&self, other: &PyMask) -> PyResult<f64> {
        rle::mask_iou(&self.0, &other.0).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Mask({}x{}, area={})", self.0.height(), self.0.width(), self.0.area())
    }
}

#[pyfunction]
fn encode(pixels: Vec<bool>, height: u32, width: u32) -> PyResult<PyMask> {
    PyMask::encode(pixels, height, width)
}

#[pyfunction]
fn decode(mask: &PyMask) -> PyResult<Vec<bool>> {
    mask.decode()
}

#[pyfunction]
fn mask_iou(a: &PyMask, b: &PyMask) -> PyResult<f64> {
    a.iou(b)
}

/// A dataset bundle loaded from disk.
#[pyclass(name = "Bundle", module = "pvsg_py", frozen)]
struct PyBundle(bundle::Bundle);

#[pymethods]
impl PyBundle {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        bundle::read_bundle(Path::new(path)).map(PyBundle).map_err(err)
    }

    #[getter]
    fn video_ids(&self) -> Vec<String> {
        self.0.graphs.iter().map(|g| g.meta.video_id.clone()).collect()
    }

    /// Violations as `"<video>: <message>"` lines, as `validate` prints them.
    fn validate(&self) -> Vec<String> {
        self.0
            .graphs
            .iter()
            .flat_map(|g| validate_scene_graph(g, &self.0.vocabulary).into_iter().map(move |v| format!("{}: {v}", g.meta.video_id)))
            .collect()
    }

    fn write(&self, path: &str) -> PyResult<()> {
        bundle::write_bundle(Path::new(path), &self.0.vocabulary, &self.0.graphs).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.graphs.len()
    }
}

fn eval_config(k: Vec<usize>, thresholds: Vec<f64>, gate: f64, top_k_scope: &str) -> PyResult<EvalConfig> {
    let scope = match top_k_scope {
        "per-video" | "per_video" => TopKScope::PerVideo,
        "corpus" => TopKScope::Corpus,
        other => return Err(PvsgError::new_err(format!("unknown top-K scope {other:?}"))),
    };
    Ok(EvalConfig { k_values: k, vol_thresholds: thresholds, mask_gate: gate, top_k_scope: scope })
}

/// Evaluates two bundles (paths or loaded `Bundle`s) and returns the report
/// JSON exactly as `pvsg eval --out` writes it.
#[pyfunction]
#[pyo3(signature = (gt, pred, k = vec![20, 50, 100], thresholds = vec![0.5, 0.1], gate = 0.5, top_k_scope = "per-video"))]
fn evaluate(
    gt: &Bound<'_, PyAny>,
    pred: &Bound<'_, PyAny>,
    k: Vec<usize>,
    thresholds: Vec<f64>,
    gate: f64,
    top_k_scope: &str,
) -> PyResult<String> {
    let cfg = eval_config(k, thresholds, gate, top_k_scope)?;
    let report = match (gt.cast::<PyBundle>(), pred.cast::<PyBundle>()) {
        (Ok(g), Ok(p)) => {
            let (g, p) = (&g.get().0, &p.get().0);
            if g.vocabulary != p.vocabulary {
                return Err(PvsgError::new_err("ground-truth and prediction bundles use different vocabularies"));
            }
            evaluate_graphs(&g.graphs, &p.graphs, &cfg, &g.vocabulary).map_err(err)?
        }
        _ => {
            let (g, p): (String, String) = (gt.extract()?, pred.extract()?);
            evaluate_bundles(Path::new(&g), Path::new(&p), &cfg).map_err(err)?
        }
    };
    Ok(report_json(&report))
}

/// Tracks a mask document (JSON text) and returns the tube graph and mask
/// documents as JSON text.
#[pyfunction]
#[pyo3(signature = (masks_json, vocabulary_json = None, iou_gate = 0.3, max_age = 10, stuff_by_class = true))]
fn build_tubes(
    masks_json: &str,
    vocabulary_json: Option<&str>,
    iou_gate: f64,
    max_age: u32,
    stuff_by_class: bool,
) -> PyResult<(String, String)> {
    let vocab: Vocabulary = match vocabulary_json {
        Some(v) => bundle::parse_json(v, "<vocabulary>").map_err(err)?,
        None => Vocabulary::default_sized(),
    };
    let doc: MaskDoc = bundle::parse_json(masks_json, "<masks>").map_err(err)?;
    let meta = VideoMeta::new(doc.video_id.clone(), doc.num_frames, doc.height, doc.width).map_err(err)?;
    let frames = bundle::mask_doc_frames(&doc, "<masks>").map_err(err)?;
    let cfg = TrackerConfig { iou_gate, max_age, stuff_by_class };
    let graph = track_video(&meta, &frames, &cfg, &vocab).map_err(err)?;
    let (g, m) = graph_to_docs(&graph);
    Ok((to_json_pretty(&g), to_json_compact(&m)))
}

/// Runs a `pvsg` command line in-process; returns (exit status, stdout, stderr).
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String, String) {
    let (mut out, mut errs) = (Vec::new(), Vec::new());
    let argv = std::iter::once("pvsg".to_string()).chain(args);
    let code = pvsg::cli::run(argv, &mut out, &mut errs);
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&errs).into_owned())
}

#[pymodule]
fn pvsg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PvsgError", m.py().get_type::<PvsgError>())?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyBundle>()?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(mask_iou, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(build_tubes, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
