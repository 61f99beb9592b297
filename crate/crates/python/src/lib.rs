//! Python bindings: codecs, metrics, the teacher update, the alignment loss
//! and the synthetic scene generator, on plain Python values.

use panmix::io::{decode_panoptic, encode_image_png, encode_panoptic, PanopticSidecar};
use panmix::metrics::panoptic_quality;
use panmix::synthlab::{lab_catalog, scene_at, DomainSpec};
use panmix::{ClassCatalog, LabelMap2D, LogitVolume, Mask, ParamVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn catalog(name: &str) -> PyResult<ClassCatalog> {
    match name {
        "cityscapes16" => Ok(ClassCatalog::cityscapes16()),
        "lab" => Ok(lab_catalog()),
        other => Err(PyValueError::new_err(format!("unknown catalog '{other}'"))),
    }
}

pub fn rle_encode_bits(bits: Vec<bool>, height: usize, width: usize) -> panmix::Result<Vec<u32>> {
    Ok(panmix::io::rle_encode(&Mask::new(height, width, bits)?))
}

pub fn rle_decode_bits(runs: &[u32], height: usize, width: usize) -> panmix::Result<Vec<bool>> {
    Ok(panmix::io::rle_decode(runs, height, width)?.bits().to_vec())
}

pub fn ema(teacher: Vec<f64>, student: Vec<f64>, alpha: f64) -> panmix::Result<Vec<f64>> {
    let out = panmix::synthlab::ema_update(&ParamVector::new(teacher)?, &ParamVector::new(student)?, alpha)?;
    Ok(out.as_slice().to_vec())
}

pub fn alignment_loss(sim: Vec<f64>, height: usize, width: usize, classes: usize, labels: Vec<u16>) -> panmix::Result<f64> {
    let sim = LogitVolume::new(height, width, classes, sim)?;
    let labels = LabelMap2D::new(height, width, labels)?;
    Ok(panmix::losses::cda_loss(&sim, &labels)?.value)
}

/// Row-major run lengths of a binary mask, starting with a run of zeros.
#[pyfunction]
fn rle_encode(bits: Vec<bool>, height: usize, width: usize) -> PyResult<Vec<u32>> {
    rle_encode_bits(bits, height, width).map_err(value_err)
}

#[pyfunction]
fn rle_decode(runs: Vec<u32>, height: usize, width: usize) -> PyResult<Vec<bool>> {
    rle_decode_bits(&runs, height, width).map_err(value_err)
}

/// `alpha * teacher + (1 - alpha) * student`, elementwise.
#[pyfunction]
fn ema_update(teacher: Vec<f64>, student: Vec<f64>, alpha: f64) -> PyResult<Vec<f64>> {
    ema(teacher, student, alpha).map_err(value_err)
}

/// Alignment loss of a row-major `height x width x classes` similarity volume.
#[pyfunction]
fn cda_loss(sim: Vec<f64>, height: usize, width: usize, classes: usize, labels: Vec<u16>) -> PyResult<f64> {
    alignment_loss(sim, height, width, classes, labels).map_err(value_err)
}

/// Panoptic quality between two encoded labels (PNG bytes plus sidecar JSON).
#[pyfunction]
#[pyo3(signature = (gt_png, gt_sidecar, pred_png, pred_sidecar, catalog_name = "cityscapes16"))]
fn panoptic_quality_png<'py>(
    py: Python<'py>,
    gt_png: &[u8],
    gt_sidecar: &str,
    pred_png: &[u8],
    pred_sidecar: &str,
    catalog_name: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let cat = catalog(catalog_name)?;
    let decode = |png: &[u8], side: &str| -> PyResult<_> {
        let sidecar: PanopticSidecar = serde_json::from_str(side).map_err(value_err)?;
        decode_panoptic(png, &sidecar, &cat).map_err(value_err)
    };
    let stats = panoptic_quality(&decode(gt_png, gt_sidecar)?, &decode(pred_png, pred_sidecar)?, &cat).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("msq", stats.msq())?;
    out.set_item("mrq", stats.mrq())?;
    out.set_item("mpq", stats.mpq())?;
    Ok(out)
}

/// One synthetic scene: `(image_png, panoptic_png, sidecar_json)`.
#[pyfunction]
#[pyo3(signature = (seed, index = 0, height = 32, width = 32))]
fn generate_scene<'py>(
    py: Python<'py>,
    seed: u64,
    index: u64,
    height: usize,
    width: usize,
) -> PyResult<(Bound<'py, PyBytes>, Bound<'py, PyBytes>, String)> {
    let spec = DomainSpec {
        height,
        width,
        ..DomainSpec::default()
    };
    let (image, label) = scene_at(&spec, seed, index).map_err(value_err)?;
    let image_png = encode_image_png(&image).map_err(value_err)?;
    let (png, sidecar) = encode_panoptic(&label, &lab_catalog()).map_err(value_err)?;
    let side = serde_json::to_string(&sidecar).map_err(value_err)?;
    Ok((PyBytes::new(py, &image_png), PyBytes::new(py, &png), side))
}

#[pymodule]
fn panmix_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("IGNORE", panmix::IGNORE)?;
    m.add_function(wrap_pyfunction!(rle_encode, m)?)?;
    m.add_function(wrap_pyfunction!(rle_decode, m)?)?;
    m.add_function(wrap_pyfunction!(ema_update, m)?)?;
    m.add_function(wrap_pyfunction!(cda_loss, m)?)?;
    m.add_function(wrap_pyfunction!(panoptic_quality_png, m)?)?;
    m.add_function(wrap_pyfunction!(generate_scene, m)?)?;
    Ok(())
}
