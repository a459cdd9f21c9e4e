//! Python bindings: the main pipeline operations exposed as plain
//! functions plus a loaded-model handle. Images cross the boundary as
//! flat f32 lists with explicit (height, width); structured values
//! (mask geometry, configs) travel as JSON strings.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use adgan_core::checkpoint::Checkpoint;
use adgan_core::config::RunConfig;
use adgan_core::image_io::ImageTensor;
use adgan_core::inference::{binarize, semantic_postprocess, translate, TileConfig};
use adgan_core::masksynth::{
    generate_mask, rasterize_instance_mask, rasterize_mask, MaskSpec, MaskSynthConfig,
};
use adgan_core::model::{AdGanModel, DomainLabel};
use adgan_core::morphology::LabelMap;
use adgan_core::phantom::{render_phantom as render_phantom_rs, PhantomParams};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn image_from(data: Vec<f32>, height: usize, width: usize) -> PyResult<ImageTensor> {
    if data.len() != height * width {
        return Err(PyValueError::new_err(format!(
            "data length {} does not match {height}x{width}",
            data.len()
        )));
    }
    Ok(ImageTensor::new(height, width, data))
}

fn domain_from(name: &str) -> PyResult<DomainLabel> {
    match name {
        "image" => Ok(DomainLabel::image()),
        "mask" => Ok(DomainLabel::mask()),
        other => Err(PyValueError::new_err(format!(
            "domain must be 'image' or 'mask', got '{other}'"
        ))),
    }
}

/// Sample a non-overlapping ellipse mask; returns the geometry as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, seed))]
fn sample_mask_spec(config_json: &str, seed: u64) -> PyResult<String> {
    let config: MaskSynthConfig = serde_json::from_str(config_json).map_err(err)?;
    let spec = generate_mask(&config, seed).map_err(err)?;
    serde_json::to_string(&spec).map_err(err)
}

/// Rasterize a mask spec: binary (+1/-1) or ternary instance coding.
#[pyfunction]
#[pyo3(signature = (spec_json, instance = false, edge_width = 2))]
fn rasterize_spec(
    spec_json: &str,
    instance: bool,
    edge_width: usize,
) -> PyResult<(usize, usize, Vec<f32>)> {
    let spec: MaskSpec = serde_json::from_str(spec_json).map_err(err)?;
    let img = if instance {
        rasterize_instance_mask(&spec, edge_width)
    } else {
        rasterize_mask(&spec)
    };
    Ok((img.height, img.width, img.data().to_vec()))
}

/// Render one phantom image plus its ground-truth mask.
#[pyfunction]
#[pyo3(signature = (spec_json, params_json, seed))]
fn render_phantom(
    spec_json: &str,
    params_json: &str,
    seed: u64,
) -> PyResult<(usize, usize, Vec<f32>, Vec<f32>)> {
    let spec: MaskSpec = serde_json::from_str(spec_json).map_err(err)?;
    let params: PhantomParams = serde_json::from_str(params_json).map_err(err)?;
    let (img, gt) = render_phantom_rs(&spec, &params, seed).map_err(err)?;
    Ok((img.height, img.width, img.data().to_vec(), gt.data().to_vec()))
}

/// Generate a full phantom dataset directory; returns the manifest JSON.
#[pyfunction]
#[pyo3(signature = (n_images, config_json, out_dir, seed = 0, instance = false))]
fn make_dataset(
    n_images: usize,
    config_json: &str,
    out_dir: &str,
    seed: u64,
    instance: bool,
) -> PyResult<String> {
    let cfg: RunConfig = serde_json::from_str(config_json).map_err(err)?;
    let manifest = adgan_core::phantom::make_dataset(
        n_images,
        &cfg.masksynth,
        &cfg.phantom,
        seed,
        out_dir,
        instance,
    )
    .map_err(err)?;
    serde_json::to_string(&manifest).map_err(err)
}

/// The default run configuration as JSON (single source of truth).
#[pyfunction]
fn default_config() -> PyResult<String> {
    serde_json::to_string_pretty(&RunConfig::default()).map_err(err)
}

/// Learning rate at an iteration of the constant-then-linear schedule.
#[pyfunction]
fn lr_at(config_json: &str, iteration: u64) -> PyResult<f64> {
    let cfg: RunConfig = serde_json::from_str(config_json).map_err(err)?;
    adgan_core::trainer::lr_at(&cfg.train, iteration).map_err(err)
}

/// Train from two unpaired directories; returns the final checkpoint path.
#[pyfunction]
#[pyo3(signature = (images_dir, masks_dir, config_json, out_dir))]
fn train(images_dir: &str, masks_dir: &str, config_json: &str, out_dir: &str) -> PyResult<String> {
    let cfg: RunConfig = serde_json::from_str(config_json).map_err(err)?;
    cfg.validate().map_err(err)?;
    let outcome =
        adgan_core::trainer::fit(images_dir, masks_dir, cfg.generator, cfg.train, out_dir, None)
            .map_err(err)?;
    Ok(outcome.final_checkpoint.display().to_string())
}

/// Pixel precision/recall/DICE between two binary masks (>0 = foreground).
#[pyfunction]
fn pixel_metrics(
    pred: Vec<f32>,
    gt: Vec<f32>,
    height: usize,
    width: usize,
) -> PyResult<(f64, f64, f64)> {
    let p = image_from(pred, height, width)?;
    let g = image_from(gt, height, width)?;
    let r = adgan_core::metrics::pixel_metrics(&p, &g).map_err(err)?;
    Ok((r.precision, r.recall, r.dice))
}

/// Object-level F1 (greedy IoU matching) and SEG score between label maps.
#[pyfunction]
#[pyo3(signature = (pred, gt, height, width, iou_threshold = 0.5))]
fn object_scores(
    pred: Vec<u32>,
    gt: Vec<u32>,
    height: usize,
    width: usize,
    iou_threshold: f64,
) -> PyResult<(f64, f64)> {
    if pred.len() != height * width || gt.len() != height * width {
        return Err(PyValueError::new_err("label length mismatch"));
    }
    let mut p = LabelMap::new(height, width, pred);
    let mut g = LabelMap::new(height, width, gt);
    p.relabel_contiguous();
    g.relabel_contiguous();
    let r = adgan_core::metrics::object_f1(&p, &g, iou_threshold).map_err(err)?;
    Ok((r.f1, r.seg_score))
}

/// Cell-segmentation-benchmark overall score: mean of SEG and DET.
#[pyfunction]
fn op_csb(seg: f64, det: f64) -> f64 {
    adgan_core::metrics::op_csb(seg, det)
}

/// Checkpoint summary (iteration, parameter shapes).
#[pyfunction]
fn describe_checkpoint(path: &str) -> PyResult<String> {
    Ok(Checkpoint::load(path).map_err(err)?.describe())
}

/// A trained model loaded from a checkpoint.
#[pyclass]
struct Model {
    inner: AdGanModel,
    tile: TileConfig,
}

#[pymethods]
impl Model {
    #[new]
    fn new(ckpt_path: &str) -> PyResult<Self> {
        let ckpt = Checkpoint::load(ckpt_path).map_err(err)?;
        let tile = TileConfig {
            tile: ckpt.train.crop.max(64),
            overlap: 32,
        };
        Ok(Self {
            inner: ckpt.restore_model().map_err(err)?,
            tile,
        })
    }

    /// Cross-domain translation of one image (flat f32, [-1, 1]).
    #[pyo3(signature = (data, height, width, src = "image", dst = "mask"))]
    fn translate(
        &self,
        data: Vec<f32>,
        height: usize,
        width: usize,
        src: &str,
        dst: &str,
    ) -> PyResult<Vec<f32>> {
        let x = image_from(data, height, width)?;
        let y = translate(
            &self.inner,
            &x,
            &domain_from(src)?,
            &domain_from(dst)?,
            &self.tile,
        )
        .map_err(err)?;
        Ok(y.data().to_vec())
    }

    /// Semantic segmentation: translate to the mask domain and binarize.
    #[pyo3(signature = (data, height, width, threshold = 0.0))]
    fn segment(
        &self,
        data: Vec<f32>,
        height: usize,
        width: usize,
        threshold: f32,
    ) -> PyResult<Vec<f32>> {
        let x = image_from(data, height, width)?;
        let y = translate(
            &self.inner,
            &x,
            &DomainLabel::image(),
            &DomainLabel::mask(),
            &self.tile,
        )
        .map_err(err)?;
        Ok(binarize(&y, threshold).data().to_vec())
    }

    /// Instance labels from a binary mask (erosion + watershed).
    #[pyo3(signature = (mask, height, width, erosion_radius = 2))]
    fn postprocess(
        &self,
        mask: Vec<f32>,
        height: usize,
        width: usize,
        erosion_radius: usize,
    ) -> PyResult<Vec<u32>> {
        let m = image_from(mask, height, width)?;
        Ok(semantic_postprocess(&m, erosion_radius).data().to_vec())
    }

    /// Spatially pooled content features of one image.
    #[pyo3(signature = (data, height, width, domain = "image"))]
    fn content_features(
        &self,
        data: Vec<f32>,
        height: usize,
        width: usize,
        domain: &str,
    ) -> PyResult<Vec<f32>> {
        let x = image_from(data, height, width)?;
        let c = self.inner.encode(&x, &domain_from(domain)?).map_err(err)?;
        Ok(c.pooled().remove(0))
    }

    /// Style layer inventory for a domain label.
    fn style_summary<'py>(&self, py: Python<'py>, domain: &str) -> PyResult<Bound<'py, PyDict>> {
        let bundle = self.inner.style_bundle(&domain_from(domain)?).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("n_layers", bundle.encoder.len() + bundle.decoder.len())?;
        d.set_item("total_params", bundle.total_params())?;
        Ok(d)
    }
}

#[pymodule]
fn adgan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(sample_mask_spec, m)?)?;
    m.add_function(wrap_pyfunction!(rasterize_spec, m)?)?;
    m.add_function(wrap_pyfunction!(render_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(make_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(lr_at, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(pixel_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(object_scores, m)?)?;
    m.add_function(wrap_pyfunction!(op_csb, m)?)?;
    m.add_function(wrap_pyfunction!(describe_checkpoint, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
