//! Inference over a trained model: cross-domain translation (tiled for
//! large inputs), semantic and instance segmentation post-processing,
//! mask-to-image synthesis, and domain-label interpolation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::image_io::ImageTensor;
use crate::model::{AdGanModel, DomainLabel, ModelError};
use crate::morphology::{
    binary_erosion, connected_components_bool, distance_transform_sq, watershed, LabelMap,
};

#[derive(Debug)]
pub enum InferError {
    Model(ModelError),
    Shape(String),
    Config(String),
}

impl fmt::Display for InferError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InferError::Model(e) => write!(f, "{e}"),
            InferError::Shape(m) => write!(f, "shape error: {m}"),
            InferError::Config(m) => write!(f, "invalid inference config: {m}"),
        }
    }
}

impl std::error::Error for InferError {}

impl From<ModelError> for InferError {
    fn from(e: ModelError) -> Self {
        InferError::Model(e)
    }
}

/// Tiling parameters for full-frame inference. Images at most `tile` on
/// both sides run in one pass; larger images run on overlapping tiles
/// with center-cropped stitching.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileConfig {
    pub tile: usize,
    pub overlap: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self {
            tile: 256,
            overlap: 32,
        }
    }
}

impl TileConfig {
    pub fn validate(&self) -> Result<(), InferError> {
        if self.tile == 0 || self.tile % 4 != 0 {
            return Err(InferError::Config(format!(
                "tile {} must be a positive multiple of 4",
                self.tile
            )));
        }
        if self.overlap < 16 {
            return Err(InferError::Config(format!(
                "overlap {} must be at least 16 px",
                self.overlap
            )));
        }
        if self.overlap >= self.tile {
            return Err(InferError::Config("overlap must be smaller than tile".into()));
        }
        Ok(())
    }
}

/// 1-D tile layout: start offsets plus the half-open range each tile
/// contributes to the stitched output (overlaps split at their midpoint,
/// outermost borders kept).
fn tile_plan(len: usize, tile: usize, stride: usize) -> Vec<(usize, usize, usize)> {
    if len <= tile {
        return vec![(0, 0, len)];
    }
    let mut starts = Vec::new();
    let mut s = 0usize;
    loop {
        if s + tile >= len {
            starts.push(len - tile);
            break;
        }
        starts.push(s);
        s += stride;
    }
    starts.dedup();
    let mut plan = Vec::with_capacity(starts.len());
    for (i, &s) in starts.iter().enumerate() {
        let keep_lo = if i == 0 {
            0
        } else {
            (starts[i - 1] + tile + s) / 2
        };
        let keep_hi = if i + 1 == starts.len() {
            len
        } else {
            (s + tile + starts[i + 1]) / 2
        };
        plan.push((s, keep_lo, keep_hi));
    }
    plan
}

/// Single-pass translation of a whole tensor (spatial dims must be
/// multiples of 4). Reconstruction is the `d_src == d_dst` case.
fn translate_whole(
    model: &AdGanModel,
    x: &ImageTensor,
    d_src: &DomainLabel,
    d_dst: &DomainLabel,
) -> Result<ImageTensor, InferError> {
    let c = model.encode(x, d_src)?;
    Ok(model.decode(&c, d_dst)?)
}

/// Cross-domain translation with tiling for frames larger than the
/// configured tile. Overlap is split at midpoints; tiles at the frame
/// borders keep their outer margins, so a tiled pass over a uniform image
/// reproduces the untiled output exactly.
pub fn translate(
    model: &AdGanModel,
    x: &ImageTensor,
    d_src: &DomainLabel,
    d_dst: &DomainLabel,
    tiling: &TileConfig,
) -> Result<ImageTensor, InferError> {
    tiling.validate()?;
    d_src.validate()?;
    d_dst.validate()?;
    if x.height % 4 != 0 || x.width % 4 != 0 {
        return Err(InferError::Shape(format!(
            "input {}x{} not a multiple of 4",
            x.height, x.width
        )));
    }
    if x.height <= tiling.tile && x.width <= tiling.tile {
        return translate_whole(model, x, d_src, d_dst);
    }
    let stride = tiling.tile - tiling.overlap;
    let rows = tile_plan(x.height, tiling.tile, stride);
    let cols = tile_plan(x.width, tiling.tile, stride);
    let mut out = ImageTensor::filled(x.height, x.width, 0.0);
    for &(sy, ky0, ky1) in &rows {
        for &(sx, kx0, kx1) in &cols {
            let th = tiling.tile.min(x.height);
            let tw = tiling.tile.min(x.width);
            let mut patch = ImageTensor::filled(th, tw, 0.0);
            for y in 0..th {
                for xx in 0..tw {
                    patch.set(y, xx, x.get(sy + y, sx + xx));
                }
            }
            let translated = translate_whole(model, &patch, d_src, d_dst)?;
            for y in ky0..ky1 {
                for xx in kx0..kx1 {
                    out.set(y, xx, translated.get(y - sy, xx - sx));
                }
            }
        }
    }
    Ok(out)
}

/// Threshold a [-1, 1] output into a +/-1 binary mask. The default
/// threshold 0 is the midpoint of the mask encoding.
pub fn binarize(y: &ImageTensor, threshold: f32) -> ImageTensor {
    let data = y
        .data()
        .iter()
        .map(|&v| if v > threshold { 1.0 } else { -1.0 })
        .collect();
    ImageTensor::new(y.height, y.width, data)
}

/// Ternary decomposition of a [-1, 1] image at (t_lo, t_hi): background
/// below t_lo, edge in [t_lo, t_hi], interior above t_hi.
pub struct Ternary {
    pub interior: Vec<bool>,
    pub edge: Vec<bool>,
}

pub fn ternarize(y: &ImageTensor, t_lo: f32, t_hi: f32) -> Ternary {
    let mut interior = vec![false; y.data().len()];
    let mut edge = vec![false; y.data().len()];
    for (i, &v) in y.data().iter().enumerate() {
        if v > t_hi {
            interior[i] = true;
        } else if v >= t_lo {
            edge[i] = true;
        }
    }
    Ternary { interior, edge }
}

/// Default ternarization thresholds: even thirds of [-1, 1], matching the
/// 0/128/255 encoding of instance masks.
pub const TERNARY_LO: f32 = -0.33;
pub const TERNARY_HI: f32 = 0.33;

/// Split a binary semantic mask into instances: erosion shrinks blobs so
/// touching nuclei separate, the eroded components seed a watershed over
/// the original mask with the negated distance transform as relief.
pub fn semantic_postprocess(mask: &ImageTensor, erosion_radius: usize) -> LabelMap {
    let (h, w) = (mask.height, mask.width);
    let fg: Vec<bool> = mask.data().iter().map(|&v| v > 0.0).collect();
    if !fg.iter().any(|&v| v) {
        return LabelMap::empty(h, w);
    }
    let eroded = binary_erosion(&fg, h, w, erosion_radius);
    // If erosion wiped out every marker, fall back to raw components.
    let markers = if eroded.iter().any(|&v| v) {
        connected_components_bool(&eroded, h, w)
    } else {
        connected_components_bool(&fg, h, w)
    };
    let dt = distance_transform_sq(&fg, h, w);
    let relief: Vec<f64> = dt.iter().map(|&d| -d).collect();
    let mut labels = watershed(&relief, &markers, &fg);
    // Erosion can orphan thin foreground slivers disconnected from every
    // marker; claim them as their own components.
    let unreached: Vec<bool> = labels
        .data()
        .iter()
        .zip(&fg)
        .map(|(&l, &f)| f && l == 0)
        .collect();
    if unreached.iter().any(|&v| v) {
        let extra = connected_components_bool(&unreached, h, w);
        let base = labels.n_labels() as u32;
        for (dst, &e) in labels.data_mut().iter_mut().zip(extra.data()) {
            if e > 0 {
                *dst = base + e;
            }
        }
    }
    labels.relabel_contiguous();
    labels
}

/// Instance assignment from an already ternarized translation: interior
/// components become markers; the watershed floods the interior∪edge
/// region so edge pixels join their instance.
pub fn instances_from_ternary(tern: &Ternary, height: usize, width: usize) -> LabelMap {
    let markers = connected_components_bool(&tern.interior, height, width);
    if markers.n_labels() == 0 {
        return LabelMap::empty(height, width);
    }
    let union: Vec<bool> = tern
        .interior
        .iter()
        .zip(&tern.edge)
        .map(|(&a, &b)| a || b)
        .collect();
    let dt = distance_transform_sq(&union, height, width);
    let relief: Vec<f64> = dt.iter().map(|&d| -d).collect();
    let mut labels = watershed(&relief, &markers, &union);
    labels.relabel_contiguous();
    labels
}

/// End-to-end instance segmentation: translate to the mask domain,
/// ternarize, and run the marker-based watershed.
pub fn instance_segment(
    model: &AdGanModel,
    x: &ImageTensor,
    t_lo: f32,
    t_hi: f32,
    tiling: &TileConfig,
) -> Result<LabelMap, InferError> {
    let y = translate(model, x, &DomainLabel::image(), &DomainLabel::mask(), tiling)?;
    let tern = ternarize(&y, t_lo, t_hi);
    Ok(instances_from_ternary(&tern, y.height, y.width))
}

/// Decode one content map under linearly interpolated domain labels.
/// `steps = 2` returns exactly [reconstruction, translation].
pub fn interpolate_domains(
    model: &AdGanModel,
    x: &ImageTensor,
    d_src: &DomainLabel,
    d_dst: &DomainLabel,
    steps: usize,
) -> Result<Vec<ImageTensor>, InferError> {
    if steps < 2 {
        return Err(InferError::Config("steps must be >= 2".into()));
    }
    let c = model.encode(x, d_src)?;
    let mut frames = Vec::with_capacity(steps);
    for k in 0..steps {
        let alpha = k as f32 / (steps - 1) as f32;
        let d = d_src.lerp(d_dst, alpha);
        frames.push(model.decode(&c, &d)?);
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GeneratorConfig;

    fn desk_model() -> AdGanModel {
        AdGanModel::new(GeneratorConfig::desk(), 11).unwrap()
    }

    fn disc_mask(h: usize, w: usize, blobs: &[(f64, f64, f64)]) -> ImageTensor {
        let mut m = ImageTensor::filled(h, w, -1.0);
        for y in 0..h {
            for x in 0..w {
                for &(cy, cx, r) in blobs {
                    if (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r {
                        m.set(y, x, 1.0);
                    }
                }
            }
        }
        m
    }

    #[test]
    fn binarize_edge_cases() {
        let neg = ImageTensor::filled(4, 4, -1.0);
        assert!(binarize(&neg, 0.0).data().iter().all(|&v| v == -1.0));
        let pos = ImageTensor::filled(4, 4, 1.0);
        assert!(binarize(&pos, 0.0).data().iter().all(|&v| v == 1.0));
        // Binarize inverts the +/-1 encoding exactly.
        let spec = crate::masksynth::generate_mask(
            &crate::masksynth::MaskSynthConfig {
                n_max: 4,
                a_range: [5.0, 8.0],
                e_range: [0.25, 0.75],
                canvas: [48, 48],
                max_attempts_per_object: 100,
            },
            3,
        )
        .unwrap();
        let m = crate::masksynth::rasterize_mask(&spec);
        assert_eq!(binarize(&m, 0.0).data(), m.data());
    }

    #[test]
    fn semantic_postprocess_counts() {
        let two = disc_mask(48, 48, &[(14.0, 14.0, 7.0), (34.0, 34.0, 7.0)]);
        assert_eq!(semantic_postprocess(&two, 2).n_labels(), 2);
        let empty = ImageTensor::filled(16, 16, -1.0);
        assert_eq!(semantic_postprocess(&empty, 2).n_labels(), 0);
        // Dumbbell: two overlapping circles with a thin neck split in two.
        let dumbbell = disc_mask(40, 64, &[(20.0, 20.0, 10.0), (20.0, 39.8, 10.0)]);
        let labels = semantic_postprocess(&dumbbell, 2);
        assert_eq!(labels.n_labels(), 2);
        // All foreground pixels assigned.
        for (l, v) in labels.data().iter().zip(dumbbell.data()) {
            assert_eq!(*l > 0, *v > 0.0);
        }
    }

    #[test]
    fn instance_pipeline_recovers_exact_ternary_fixture() {
        // Build an exact ternary image of two separated objects and check
        // the pass-through path recovers both instances with interiors intact.
        let spec = crate::masksynth::MaskSpec {
            canvas_h: 64,
            canvas_w: 64,
            ellipses: vec![
                crate::masksynth::EllipseSpec {
                    center_x: 18.0,
                    center_y: 20.0,
                    major_a: 10.0,
                    minor_b: 7.0,
                    theta: 0.4,
                },
                crate::masksynth::EllipseSpec {
                    center_x: 46.0,
                    center_y: 42.0,
                    major_a: 9.0,
                    minor_b: 6.0,
                    theta: 2.0,
                },
            ],
            seed: 0,
        };
        let tern_img = crate::masksynth::rasterize_instance_mask(&spec, 2);
        let tern = ternarize(&tern_img, TERNARY_LO, TERNARY_HI);
        let labels = instances_from_ternary(&tern, 64, 64);
        assert_eq!(labels.n_labels(), 2);
        // Interior pixels keep their object assignment exactly.
        let obj = crate::masksynth::rasterize_labels(&spec);
        for i in 0..64 * 64 {
            if tern.interior[i] {
                assert!(labels.data()[i] > 0);
            }
            if labels.data()[i] > 0 {
                assert!(obj[i] > 0, "instance pixel outside any object");
            }
        }
        let empty = ternarize(&ImageTensor::filled(16, 16, -1.0), TERNARY_LO, TERNARY_HI);
        assert_eq!(instances_from_ternary(&empty, 16, 16).n_labels(), 0);
    }

    #[test]
    fn interpolation_endpoints_equal_reconstruction_and_translation() {
        let m = desk_model();
        let x = ImageTensor::new(
            32,
            32,
            (0..1024).map(|i| ((i % 23) as f32 / 11.5) - 1.0).collect(),
        );
        let frames =
            interpolate_domains(&m, &x, &DomainLabel::image(), &DomainLabel::mask(), 2).unwrap();
        let tiling = TileConfig::default();
        let recon = translate(&m, &x, &DomainLabel::image(), &DomainLabel::image(), &tiling).unwrap();
        let trans = translate(&m, &x, &DomainLabel::image(), &DomainLabel::mask(), &tiling).unwrap();
        assert_eq!(frames[0].data(), recon.data());
        assert_eq!(frames[1].data(), trans.data());
        assert!(interpolate_domains(&m, &x, &DomainLabel::image(), &DomainLabel::mask(), 1).is_err());
    }

    #[test]
    fn ten_step_interpolation_is_finite_and_moving() {
        let m = desk_model();
        let x = ImageTensor::new(
            16,
            16,
            (0..256).map(|i| ((i % 13) as f32 / 6.5) - 1.0).collect(),
        );
        let frames =
            interpolate_domains(&m, &x, &DomainLabel::image(), &DomainLabel::mask(), 10).unwrap();
        assert_eq!(frames.len(), 10);
        let mut moved = false;
        for k in 1..10 {
            let l1: f64 = frames[k]
                .data()
                .iter()
                .zip(frames[k - 1].data())
                .map(|(a, b)| (a - b).abs() as f64)
                .sum::<f64>()
                / 256.0;
            assert!(l1.is_finite());
            if l1 > 0.0 {
                moved = true;
            }
        }
        assert!(moved, "style interpolation produced a constant sequence");
    }

    #[test]
    fn tiled_translation_on_uniform_image_matches_untiled() {
        let m = desk_model();
        let x = ImageTensor::filled(96, 96, 0.3);
        let tiling = TileConfig {
            tile: 64,
            overlap: 16,
        };
        let tiled = translate(&m, &x, &DomainLabel::image(), &DomainLabel::mask(), &tiling).unwrap();
        let whole = translate(
            &m,
            &x,
            &DomainLabel::image(),
            &DomainLabel::mask(),
            &TileConfig {
                tile: 96,
                overlap: 16,
            },
        )
        .unwrap();
        let max_diff = tiled
            .data()
            .iter()
            .zip(whole.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_diff <= 1e-6, "tiled vs untiled diff {max_diff}");
    }

    #[test]
    fn tile_plan_covers_range_without_gaps() {
        for (len, tile, stride) in [(96usize, 64usize, 48usize), (200, 64, 40), (64, 64, 48), (130, 64, 48)] {
            let plan = tile_plan(len, tile, stride);
            assert_eq!(plan[0].1, 0);
            assert_eq!(plan.last().unwrap().2, len);
            for w in plan.windows(2) {
                assert_eq!(w[0].2, w[1].1, "keep ranges must abut: {plan:?}");
            }
            for &(s, k0, k1) in &plan {
                assert!(k0 >= s && k1 <= s + tile, "keep range outside tile");
            }
        }
    }

    #[test]
    fn label_shuffling_does_not_change_downstream_metrics() {
        let mask = disc_mask(48, 48, &[(14.0, 14.0, 7.0), (34.0, 34.0, 7.0)]);
        let labels = semantic_postprocess(&mask, 2);
        let mut shuffled = labels.clone();
        for v in shuffled.data_mut() {
            *v = match *v {
                1 => 2,
                2 => 1,
                other => other,
            };
        }
        let r = crate::metrics::object_f1(&shuffled, &labels, 0.5).unwrap();
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.seg_score, 1.0);
    }
}
