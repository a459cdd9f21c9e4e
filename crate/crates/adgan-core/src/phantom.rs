//! Phantom microscopy renderer: pseudo-fluorescence images with known
//! ground truth, so the whole pipeline trains and evaluates without any
//! external dataset.
//!
//! Ground-truth masks are written to a separate directory that the trainer
//! never reads; the mask domain used for training is sampled independently
//! of the rendered images, preserving the unpaired setting.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::image_io::{normalize_min_max, save_image, save_label_png16, ImageIoError, ImageTensor};
use crate::masksynth::{
    generate_mask, rasterize_instance_mask, rasterize_labels, rasterize_mask, MaskSpec,
    MaskSynthConfig, SynthError,
};
use crate::rng::{derive_seed, purpose, rng_from_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomParams {
    /// Per-object peak intensity drawn uniformly from [lo, hi], in (0, 1].
    pub peak_intensity_range: [f64; 2],
    /// Radial intensity profile exponent: peak * (1 - r)^falloff.
    pub radial_falloff: f64,
    /// Gaussian blur sigma in pixels (0 disables).
    pub blur_sigma: f64,
    /// Additive Gaussian noise sigma in intensity units.
    pub noise_sigma: f64,
    /// Flat intensity added outside objects, in [0, 0.3).
    pub background_level: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        // Blur plus falloff soften boundaries enough that plain
        // thresholding does not trivially solve the segmentation.
        Self {
            peak_intensity_range: [0.6, 1.0],
            radial_falloff: 0.5,
            blur_sigma: 1.0,
            noise_sigma: 0.03,
            background_level: 0.05,
        }
    }
}

impl PhantomParams {
    pub fn validate(&self) -> Result<(), PhantomError> {
        let [lo, hi] = self.peak_intensity_range;
        let ok = lo > 0.0
            && lo <= hi
            && hi <= 1.0
            && self.radial_falloff >= 0.0
            && self.blur_sigma >= 0.0
            && self.noise_sigma >= 0.0
            && (0.0..0.3).contains(&self.background_level)
            && [lo, hi, self.radial_falloff, self.blur_sigma, self.noise_sigma]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(PhantomError::InvalidParams(format!("{self:?}")))
        }
    }
}

#[derive(Debug)]
pub enum PhantomError {
    InvalidParams(String),
    Synth(SynthError),
    Image(ImageIoError),
    Io(io::Error),
}

impl fmt::Display for PhantomError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhantomError::InvalidParams(m) => write!(f, "invalid phantom params: {m}"),
            PhantomError::Synth(e) => write!(f, "mask synthesis failed: {e}"),
            PhantomError::Image(e) => write!(f, "image i/o failed: {e}"),
            PhantomError::Io(e) => write!(f, "i/o failed: {e}"),
        }
    }
}

impl std::error::Error for PhantomError {}

impl From<SynthError> for PhantomError {
    fn from(e: SynthError) -> Self {
        PhantomError::Synth(e)
    }
}
impl From<ImageIoError> for PhantomError {
    fn from(e: ImageIoError) -> Self {
        PhantomError::Image(e)
    }
}
impl From<io::Error> for PhantomError {
    fn from(e: io::Error) -> Self {
        PhantomError::Io(e)
    }
}

/// Separable Gaussian blur with mirrored borders.
fn gaussian_blur(img: &mut ImageTensor, sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for k in -radius..=radius {
        kernel.push((-((k * k) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    let kernel: Vec<f32> = kernel.iter().map(|v| (v / sum) as f32).collect();
    let (h, w) = (img.height as isize, img.width as isize);
    let mirror = |i: isize, n: isize| -> usize {
        let j = if i < 0 {
            -i
        } else if i >= n {
            2 * n - 2 - i
        } else {
            i
        };
        j.clamp(0, n - 1) as usize
    };
    // Horizontal pass.
    let mut tmp = vec![0.0f32; (h * w) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (ki, kv) in kernel.iter().enumerate() {
                let sx = mirror(x + ki as isize - radius, w);
                acc += kv * img.get(y as usize, sx);
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    // Vertical pass.
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (ki, kv) in kernel.iter().enumerate() {
                let sy = mirror(y + ki as isize - radius, h);
                acc += kv * tmp[sy * w as usize + x as usize];
            }
            img.set(y as usize, x as usize, acc);
        }
    }
}

/// Render one phantom image plus its quarantined ground-truth mask.
pub fn render_phantom(
    spec: &MaskSpec,
    params: &PhantomParams,
    seed: u64,
) -> Result<(ImageTensor, ImageTensor), PhantomError> {
    params.validate()?;
    let (h, w) = (spec.canvas_h, spec.canvas_w);
    let gt = rasterize_mask(spec);
    let mut rng = rng_from_seed(derive_seed(seed, purpose::PHANTOM_NOISE, 0));

    let mut img = ImageTensor::filled(h, w, 0.0);
    for e in &spec.ellipses {
        let peak = rng.random_range(params.peak_intensity_range[0]..=params.peak_intensity_range[1]);
        let (ex, ey) = e.bbox_half_extents();
        let x0 = ((e.center_x - ex).floor().max(0.0)) as usize;
        let x1 = ((e.center_x + ex).ceil().min((w - 1) as f64)) as usize;
        let y0 = ((e.center_y - ey).floor().max(0.0)) as usize;
        let y1 = ((e.center_y + ey).ceil().min((h - 1) as f64)) as usize;
        let (s, c) = e.theta.sin_cos();
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 - e.center_x;
                let dy = y as f64 - e.center_y;
                let u = (dx * c + dy * s) / e.major_a;
                let v = (-dx * s + dy * c) / e.minor_b;
                let r2 = u * u + v * v;
                if r2 <= 1.0 {
                    let r = r2.sqrt();
                    let val = peak * (1.0 - r).powf(params.radial_falloff);
                    img.set(y, x, val as f32);
                }
            }
        }
    }

    gaussian_blur(&mut img, params.blur_sigma);

    if params.background_level > 0.0 {
        let bg = params.background_level as f32;
        for (v, m) in img.data_mut().iter_mut().zip(gt.data()) {
            if *m < 0.0 {
                *v += bg;
            }
        }
    }

    if params.noise_sigma > 0.0 {
        let normal = Normal::new(0.0f64, params.noise_sigma).expect("sigma validated");
        for v in img.data_mut() {
            *v += normal.sample(&mut rng) as f32;
        }
    }

    Ok((normalize_min_max(img), gt))
}

/// One image entry in a dataset manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestImage {
    pub image: String,
    pub gt_mask: String,
    pub gt_labels: String,
    pub seed: u64,
    pub n_objects: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestMask {
    pub mask: String,
    pub seed: u64,
    pub n_objects: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub n_images: usize,
    pub instance_masks: bool,
    pub mask_config: MaskSynthConfig,
    pub phantom: PhantomParams,
    pub images: Vec<ManifestImage>,
    pub unpaired_masks: Vec<ManifestMask>,
}

/// Generate a full phantom dataset under `out_dir`:
///
/// - `images/`          rendered phantoms (16-bit PNG)
/// - `gt_masks/`        paired ground truth, for evaluation only
/// - `gt_labels/`       per-object ids (16-bit PNG), for object metrics
/// - `unpaired_masks/`  freshly sampled mask domain, never paired
///
/// Ground truth stays out of the training inputs by construction: the
/// trainer takes only `images/` and `unpaired_masks/`.
pub fn make_dataset(
    n_images: usize,
    mask_config: &MaskSynthConfig,
    params: &PhantomParams,
    seed: u64,
    out_dir: impl AsRef<Path>,
    instance_masks: bool,
) -> Result<DatasetManifest, PhantomError> {
    if n_images == 0 {
        return Err(PhantomError::InvalidParams("n_images must be >= 1".into()));
    }
    mask_config.validate()?;
    params.validate()?;
    let out = out_dir.as_ref();
    let images_dir = out.join("images");
    let gt_dir = out.join("gt_masks");
    let labels_dir = out.join("gt_labels");
    let unpaired_dir = out.join("unpaired_masks");
    for d in [&images_dir, &gt_dir, &labels_dir, &unpaired_dir] {
        fs::create_dir_all(d)?;
    }

    let mut manifest = DatasetManifest {
        seed,
        n_images,
        instance_masks,
        mask_config: mask_config.clone(),
        phantom: params.clone(),
        images: Vec::with_capacity(n_images),
        unpaired_masks: Vec::with_capacity(n_images),
    };

    for i in 0..n_images {
        let img_seed = derive_seed(seed, purpose::MASK_GEOMETRY, i as u64);
        let spec = generate_mask(mask_config, img_seed)?;
        let (img, gt) = render_phantom(&spec, params, img_seed)?;
        let name = format!("img_{i:05}.png");
        save_image(&img, images_dir.join(&name), 16)?;
        save_image(&gt, gt_dir.join(&name), 8)?;
        let labels = rasterize_labels(&spec);
        save_label_png16(&labels, spec.canvas_h, spec.canvas_w, labels_dir.join(&name))?;
        manifest.images.push(ManifestImage {
            image: format!("images/{name}"),
            gt_mask: format!("gt_masks/{name}"),
            gt_labels: format!("gt_labels/{name}"),
            seed: img_seed,
            n_objects: spec.ellipses.len(),
        });

        // Independent mask stream: different purpose tag, never paired.
        let mask_seed = derive_seed(seed, purpose::MASK_GEOMETRY ^ 0xffff, (n_images + i) as u64);
        let mspec = generate_mask(mask_config, mask_seed)?;
        let mask_img = if instance_masks {
            rasterize_instance_mask(&mspec, 2)
        } else {
            rasterize_mask(&mspec)
        };
        let mname = format!("mask_{i:05}.png");
        save_image(&mask_img, unpaired_dir.join(&mname), 8)?;
        manifest.unpaired_masks.push(ManifestMask {
            mask: format!("unpaired_masks/{mname}"),
            seed: mask_seed,
            n_objects: mspec.ellipses.len(),
        });
    }

    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(out.join("manifest.json"), json)?;
    Ok(manifest)
}

/// Paths of the two training inputs inside a dataset directory.
pub fn dataset_dirs(root: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    (
        root.as_ref().join("images"),
        root.as_ref().join("unpaired_masks"),
    )
}
