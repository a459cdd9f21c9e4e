//! Synthetic mask domain: randomly rotated, non-overlapping ellipses.
//!
//! Masks are the target domain of image-to-mask translation. Geometry is
//! sampled from uniform ranges (major axis from the size property,
//! eccentricity from [e_min, e_max] with b = sqrt(1-e^2)*a), rotated and
//! placed by rejection sampling against the rasterized footprints of the
//! already-placed objects, so "non-overlapping" means exactly what the
//! network sees: no shared pixels.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::image_io::ImageTensor;
use crate::rng::Rng;

pub const FOREGROUND: f32 = 1.0;
pub const BACKGROUND: f32 = -1.0;
/// Gray code used for instance-mask object edges.
pub const EDGE: f32 = 0.0;

/// One rotated ellipse, in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipseSpec {
    pub center_x: f64,
    pub center_y: f64,
    /// Semi-major axis in pixels.
    pub major_a: f64,
    /// Semi-minor axis in pixels; 0 < minor_b <= major_a.
    pub minor_b: f64,
    /// Rotation in radians, in [0, pi).
    pub theta: f64,
}

impl EllipseSpec {
    /// Half-extents of the axis-aligned bounding box of the rotated ellipse.
    pub fn bbox_half_extents(&self) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let ex = ((self.major_a * c).powi(2) + (self.minor_b * s).powi(2)).sqrt();
        let ey = ((self.major_a * s).powi(2) + (self.minor_b * c).powi(2)).sqrt();
        (ex, ey)
    }

    /// Implicit-equation membership test at a pixel center.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        let (s, c) = self.theta.sin_cos();
        let u = (dx * c + dy * s) / self.major_a;
        let v = (-dx * s + dy * c) / self.minor_b;
        u * u + v * v <= 1.0
    }
}

/// Geometric description of one synthetic mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub canvas_h: usize,
    pub canvas_w: usize,
    pub ellipses: Vec<EllipseSpec>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSynthConfig {
    /// Upper bound n on objects per mask; the count is drawn from
    /// [ceil(n/2), n].
    pub n_max: usize,
    /// Semi-major axis range [a_min, a_max] in pixels.
    pub a_range: [f64; 2],
    /// Eccentricity range; minor axis follows b = sqrt(1-e^2)*a.
    pub e_range: [f64; 2],
    /// Canvas (height, width).
    pub canvas: [usize; 2],
    /// Placement attempts per object before its geometry is resampled.
    pub max_attempts_per_object: usize,
}

impl Default for MaskSynthConfig {
    fn default() -> Self {
        Self {
            n_max: 15,
            a_range: [20.0, 30.0],
            e_range: [0.25, 0.75],
            canvas: [256, 256],
            max_attempts_per_object: 100,
        }
    }
}

/// Geometry resamples per object before giving up on the whole placement.
const GEOMETRY_RESAMPLES: usize = 10;

impl MaskSynthConfig {
    pub fn min_count(&self) -> usize {
        self.n_max.div_ceil(2)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_max == 0 {
            return bad("n_max must be >= 1".into());
        }
        if !(self.a_range[0] > 0.0 && self.a_range[0] <= self.a_range[1]) {
            return bad(format!("a_range {:?} must satisfy 0 < a_min <= a_max", self.a_range));
        }
        if !(0.0 <= self.e_range[0] && self.e_range[0] <= self.e_range[1] && self.e_range[1] < 1.0)
        {
            return bad(format!(
                "e_range {:?} must satisfy 0 <= e_min <= e_max < 1",
                self.e_range
            ));
        }
        if self.canvas[0] == 0 || self.canvas[1] == 0 {
            return bad("canvas dims must be positive".into());
        }
        if self.max_attempts_per_object == 0 {
            return bad("max_attempts_per_object must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum SynthError {
    InvalidConfig(String),
    /// Fewer than ceil(n/2) objects fit after exhausting all attempts.
    PlacementExhausted { placed: usize, required: usize },
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::InvalidConfig(m) => write!(f, "invalid mask synthesis config: {m}"),
            SynthError::PlacementExhausted { placed, required } => write!(
                f,
                "placement exhausted: {placed} objects placed, {required} required"
            ),
        }
    }
}

impl std::error::Error for SynthError {}

/// Sample ellipse geometry (center left at the origin; placement sets it).
pub fn sample_ellipse(rng: &mut Rng, config: &MaskSynthConfig) -> EllipseSpec {
    let a = rng.random_range(config.a_range[0]..=config.a_range[1]);
    let e = rng.random_range(config.e_range[0]..=config.e_range[1]);
    let b = (1.0 - e * e).sqrt() * a;
    let theta = rng.random_range(0.0..PI);
    EllipseSpec {
        center_x: 0.0,
        center_y: 0.0,
        major_a: a,
        minor_b: b,
        theta,
    }
}

/// Pixel footprint of one ellipse, as indices into the canvas.
fn footprint(e: &EllipseSpec, h: usize, w: usize) -> Vec<usize> {
    let (ex, ey) = e.bbox_half_extents();
    let x0 = ((e.center_x - ex).floor().max(0.0)) as usize;
    let x1 = ((e.center_x + ex).ceil().min((w - 1) as f64)) as usize;
    let y0 = ((e.center_y - ey).floor().max(0.0)) as usize;
    let y1 = ((e.center_y + ey).ceil().min((h - 1) as f64)) as usize;
    let mut px = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if e.contains(x as f64, y as f64) {
                px.push(y * w + x);
            }
        }
    }
    px
}

/// Draw a target count from [ceil(n/2), n] and place ellipses one by one,
/// rejecting any candidate whose rasterized footprint touches an already
/// placed object. Runs are bounded: `max_attempts_per_object` placements
/// per geometry, up to 10 geometry resamples per object.
pub fn place_nonoverlapping(rng: &mut Rng, config: &MaskSynthConfig) -> Result<MaskSpec, SynthError> {
    config.validate()?;
    let [h, w] = config.canvas;
    let min_count = config.min_count();
    let target = rng.random_range(min_count..=config.n_max);

    let mut occupied = vec![false; h * w];
    let mut ellipses: Vec<EllipseSpec> = Vec::with_capacity(target);

    'objects: for _ in 0..target {
        for _ in 0..GEOMETRY_RESAMPLES {
            let mut cand = sample_ellipse(rng, config);
            let (ex, ey) = cand.bbox_half_extents();
            // Center range keeping the ellipse fully inside the canvas.
            let (xlo, xhi) = (ex, (w - 1) as f64 - ex);
            let (ylo, yhi) = (ey, (h - 1) as f64 - ey);
            if xlo > xhi || ylo > yhi {
                continue; // cannot fit at any position; resample geometry
            }
            for _ in 0..config.max_attempts_per_object {
                cand.center_x = rng.random_range(xlo..=xhi);
                cand.center_y = rng.random_range(ylo..=yhi);
                let px = footprint(&cand, h, w);
                if !px.is_empty() && px.iter().all(|&i| !occupied[i]) {
                    for &i in &px {
                        occupied[i] = true;
                    }
                    ellipses.push(cand);
                    continue 'objects;
                }
            }
        }
        // This object could not be placed; earlier objects stand.
        break;
    }

    if ellipses.len() < min_count {
        return Err(SynthError::PlacementExhausted {
            placed: ellipses.len(),
            required: min_count,
        });
    }
    Ok(MaskSpec {
        canvas_h: h,
        canvas_w: w,
        ellipses,
        seed: 0,
    })
}

/// Convenience wrapper: seed a fresh stream, place, and record the seed.
pub fn generate_mask(config: &MaskSynthConfig, seed: u64) -> Result<MaskSpec, SynthError> {
    let mut rng = crate::rng::rng_from_seed(seed);
    let mut spec = place_nonoverlapping(&mut rng, config)?;
    spec.seed = seed;
    Ok(spec)
}

/// Rasterize to a binary mask: foreground +1, background -1.
pub fn rasterize_mask(spec: &MaskSpec) -> ImageTensor {
    let mut img = ImageTensor::filled(spec.canvas_h, spec.canvas_w, BACKGROUND);
    for e in &spec.ellipses {
        for i in footprint(e, spec.canvas_h, spec.canvas_w) {
            img.data_mut()[i] = FOREGROUND;
        }
    }
    img
}

/// Rasterize to per-object labels (0 = background, k >= 1 = object k).
/// Placement guarantees footprints are disjoint, so the label of a pixel
/// is unambiguous.
pub fn rasterize_labels(spec: &MaskSpec) -> Vec<u32> {
    let mut labels = vec![0u32; spec.canvas_h * spec.canvas_w];
    for (k, e) in spec.ellipses.iter().enumerate() {
        for i in footprint(e, spec.canvas_h, spec.canvas_w) {
            labels[i] = (k + 1) as u32;
        }
    }
    labels
}

/// Number of pixels claimed by more than one ellipse (0 for valid specs).
pub fn pairwise_overlap_pixels(spec: &MaskSpec) -> usize {
    let mut counts = vec![0u8; spec.canvas_h * spec.canvas_w];
    let mut overlaps = 0usize;
    for e in &spec.ellipses {
        for i in footprint(e, spec.canvas_h, spec.canvas_w) {
            counts[i] += 1;
            if counts[i] == 2 {
                overlaps += 1;
            }
        }
    }
    overlaps
}

/// Rasterize to a ternary instance mask: interior +1, a boundary ring of
/// `edge_width` pixels at the gray code 0, background -1. The ring is the
/// morphological erosion residue of each object's own footprint, so even
/// tangent objects keep separated interiors.
pub fn rasterize_instance_mask(spec: &MaskSpec, edge_width: usize) -> ImageTensor {
    assert!(edge_width >= 1, "edge_width must be >= 1");
    let (h, w) = (spec.canvas_h, spec.canvas_w);
    let mut img = ImageTensor::filled(h, w, BACKGROUND);

    let ew = edge_width as isize;
    let mut disk: Vec<(isize, isize)> = Vec::new();
    for dy in -ew..=ew {
        for dx in -ew..=ew {
            if dy * dy + dx * dx <= ew * ew {
                disk.push((dy, dx));
            }
        }
    }

    for e in &spec.ellipses {
        let px = footprint(e, h, w);
        let mut inside = vec![false; h * w];
        for &i in &px {
            inside[i] = true;
        }
        for &i in &px {
            let (y, x) = ((i / w) as isize, (i % w) as isize);
            let eroded = disk.iter().all(|&(dy, dx)| {
                let (ny, nx) = (y + dy, x + dx);
                ny >= 0
                    && ny < h as isize
                    && nx >= 0
                    && nx < w as isize
                    && inside[ny as usize * w + nx as usize]
            });
            img.data_mut()[i] = if eroded { FOREGROUND } else { EDGE };
        }
    }
    img
}

/// Axis ratio (minor/major, in (0, 1]) of a lone rasterized object,
/// measured from second central moments of the foreground pixels.
pub fn moment_axis_ratio(mask: &ImageTensor) -> Option<f64> {
    let mut n = 0.0f64;
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(y, x) > 0.0 {
                n += 1.0;
                sx += x as f64;
                sy += y as f64;
            }
        }
    }
    if n < 4.0 {
        return None;
    }
    let (cx, cy) = (sx / n, sy / n);
    let (mut mxx, mut myy, mut mxy) = (0.0f64, 0.0f64, 0.0f64);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(y, x) > 0.0 {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                mxx += dx * dx;
                myy += dy * dy;
                mxy += dx * dy;
            }
        }
    }
    mxx /= n;
    myy /= n;
    mxy /= n;
    let tr = mxx + myy;
    let det = mxx * myy - mxy * mxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let l1 = tr / 2.0 + disc;
    let l2 = (tr / 2.0 - disc).max(0.0);
    if l1 <= 0.0 {
        return None;
    }
    Some((l2 / l1).sqrt())
}
