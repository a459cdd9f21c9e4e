//! Single-channel image tensors and PNG/TIFF I/O.
//!
//! Images are held as f32 grids normalized to [-1, 1]. Loading applies
//! per-image min-max normalization (a constant image maps to all -1);
//! saving is the inverse affine map onto the integer range of the chosen
//! bit depth. Binary/ternary masks use the fixed codes -1/0/+1 so they
//! survive the 8-bit round trip exactly (0, 128, 255).

use std::fmt;
use std::io;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

/// Single-channel image with values in [-1, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    pub height: usize,
    pub width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width, "image data length mismatch");
        Self {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn in_range(&self) -> bool {
        self.data.iter().all(|v| (-1.0..=1.0).contains(v))
    }

    /// Count of pixels strictly above a threshold.
    pub fn count_above(&self, thr: f32) -> usize {
        self.data.iter().filter(|&&v| v > thr).count()
    }
}

#[derive(Debug)]
pub enum ImageIoError {
    Io(io::Error),
    Decode(String),
    /// Input had more than one channel; the pipeline is grayscale-only.
    MultiChannel { path: String, channels: u32 },
    /// Tensor passed to save was outside [-1, 1]; refusing to clamp silently.
    OutOfRange { min: f32, max: f32 },
    UnsupportedBitDepth(u8),
}

impl fmt::Display for ImageIoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageIoError::Io(e) => write!(f, "image i/o error: {e}"),
            ImageIoError::Decode(m) => write!(f, "image decode error: {m}"),
            ImageIoError::MultiChannel { path, channels } => {
                write!(f, "{path}: expected single-channel image, got {channels} channels")
            }
            ImageIoError::OutOfRange { min, max } => {
                write!(f, "tensor range [{min}, {max}] exceeds [-1, 1]; not saving")
            }
            ImageIoError::UnsupportedBitDepth(b) => write!(f, "unsupported bit depth {b}"),
        }
    }
}

impl std::error::Error for ImageIoError {}

impl From<io::Error> for ImageIoError {
    fn from(e: io::Error) -> Self {
        ImageIoError::Io(e)
    }
}

impl From<image::ImageError> for ImageIoError {
    fn from(e: image::ImageError) -> Self {
        ImageIoError::Decode(e.to_string())
    }
}

/// Load an 8- or 16-bit single-channel PNG/TIFF and min-max normalize it
/// to [-1, 1]. A constant image maps to all -1.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor, ImageIoError> {
    let path = path.as_ref();
    let img = image::open(path)?;
    let raw: (usize, usize, Vec<f32>) = match img {
        DynamicImage::ImageLuma8(b) => {
            let (w, h) = (b.width() as usize, b.height() as usize);
            (h, w, b.into_raw().into_iter().map(|v| v as f32).collect())
        }
        DynamicImage::ImageLuma16(b) => {
            let (w, h) = (b.width() as usize, b.height() as usize);
            (h, w, b.into_raw().into_iter().map(|v| v as f32).collect())
        }
        other => {
            return Err(ImageIoError::MultiChannel {
                path: path.display().to_string(),
                channels: other.color().channel_count() as u32,
            })
        }
    };
    let (h, w, vals) = raw;
    Ok(normalize_min_max(ImageTensor::new(h, w, vals)))
}

/// Min-max normalize arbitrary values to [-1, 1] (constant input -> all -1).
pub fn normalize_min_max(mut t: ImageTensor) -> ImageTensor {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in t.data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi > lo {
        let s = 2.0 / (hi - lo);
        for v in t.data_mut() {
            *v = (*v - lo) * s - 1.0;
        }
    } else {
        t.data_mut().fill(-1.0);
    }
    t
}

/// Save a [-1, 1] tensor as an 8- or 16-bit grayscale PNG (or TIFF, by
/// file extension). Out-of-range input is an error, not a silent clamp.
pub fn save_image(t: &ImageTensor, path: impl AsRef<Path>, bit_depth: u8) -> Result<(), ImageIoError> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in t.data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo < -1.0 || hi > 1.0 {
        return Err(ImageIoError::OutOfRange { min: lo, max: hi });
    }
    let (w, h) = (t.width as u32, t.height as u32);
    match bit_depth {
        8 => {
            let buf: Vec<u8> = t
                .data()
                .iter()
                .map(|&v| ((v + 1.0) * 0.5 * 255.0).round() as u8)
                .collect();
            let img: ImageBuffer<Luma<u8>, _> =
                ImageBuffer::from_raw(w, h, buf).expect("buffer size");
            img.save(path.as_ref())?;
        }
        16 => {
            let buf: Vec<u16> = t
                .data()
                .iter()
                .map(|&v| ((v + 1.0) * 0.5 * 65535.0).round() as u16)
                .collect();
            let img: ImageBuffer<Luma<u16>, _> =
                ImageBuffer::from_raw(w, h, buf).expect("buffer size");
            img.save(path.as_ref())?;
        }
        b => return Err(ImageIoError::UnsupportedBitDepth(b)),
    }
    Ok(())
}

/// Save an instance label map as 16-bit grayscale PNG (ids stored raw).
pub fn save_label_png16(labels: &[u32], height: usize, width: usize, path: impl AsRef<Path>) -> Result<(), ImageIoError> {
    let buf: Vec<u16> = labels
        .iter()
        .map(|&v| u16::try_from(v).unwrap_or(u16::MAX))
        .collect();
    let img: ImageBuffer<Luma<u16>, _> =
        ImageBuffer::from_raw(width as u32, height as u32, buf).expect("buffer size");
    img.save(path.as_ref())?;
    Ok(())
}

/// Load a 16-bit label PNG back into raw ids.
pub fn load_label_png16(path: impl AsRef<Path>) -> Result<(Vec<u32>, usize, usize), ImageIoError> {
    let img = image::open(path.as_ref())?;
    match img {
        DynamicImage::ImageLuma16(b) => {
            let (w, h) = (b.width() as usize, b.height() as usize);
            Ok((b.into_raw().into_iter().map(|v| v as u32).collect(), h, w))
        }
        DynamicImage::ImageLuma8(b) => {
            let (w, h) = (b.width() as usize, b.height() as usize);
            Ok((b.into_raw().into_iter().map(|v| v as u32).collect(), h, w))
        }
        other => Err(ImageIoError::MultiChannel {
            path: path.as_ref().display().to_string(),
            channels: other.color().channel_count() as u32,
        }),
    }
}
