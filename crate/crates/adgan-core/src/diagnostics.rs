//! Lossy-transformation diagnostics and content-feature export.
//!
//! Translation can corrupt content two ways: at the macro level (object
//! deletion/addition) and at the micro level (location offset, shape
//! difference). The report quantifies both against a reference labeling
//! using a permissive IoU matching, so shifted objects are measured as
//! offsets instead of being double-counted as deletion plus addition.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::image_io::ImageTensor;
use crate::metrics::MetricsError;
use crate::model::{AdGanModel, DomainLabel, ModelError};
use crate::morphology::LabelMap;

/// Matching threshold for diagnostics; deliberately permissive compared
/// with the 0.5 used for scoring.
pub const DIAGNOSTIC_IOU: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossyReport {
    /// Predicted object count minus reference object count.
    pub count_delta: i64,
    /// Centroid distance per matched pair, in pixels.
    pub matched_centroid_offsets: Vec<f64>,
    pub mean_offset: f64,
    /// IoU per matched pair (shape agreement).
    pub per_object_iou: Vec<f64>,
    pub unmatched_reference: usize,
    pub unmatched_pred: usize,
}

#[derive(Debug)]
pub enum DiagnosticsError {
    Metrics(MetricsError),
    Model(ModelError),
    Io(std::io::Error),
}

impl fmt::Display for DiagnosticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagnosticsError::Metrics(e) => write!(f, "{e}"),
            DiagnosticsError::Model(e) => write!(f, "{e}"),
            DiagnosticsError::Io(e) => write!(f, "feature export i/o error: {e}"),
        }
    }
}

impl std::error::Error for DiagnosticsError {}

impl From<MetricsError> for DiagnosticsError {
    fn from(e: MetricsError) -> Self {
        DiagnosticsError::Metrics(e)
    }
}
impl From<ModelError> for DiagnosticsError {
    fn from(e: ModelError) -> Self {
        DiagnosticsError::Model(e)
    }
}
impl From<std::io::Error> for DiagnosticsError {
    fn from(e: std::io::Error) -> Self {
        DiagnosticsError::Io(e)
    }
}

/// Greedy IoU matching at the diagnostic threshold, then offsets and IoUs
/// per matched pair.
pub fn lossy_report(pred: &LabelMap, reference: &LabelMap) -> Result<LossyReport, DiagnosticsError> {
    if (pred.height, pred.width) != (reference.height, reference.width) {
        return Err(MetricsError::ShapeMismatch {
            pred: (pred.height, pred.width),
            gt: (reference.height, reference.width),
        }
        .into());
    }
    let nr = reference.n_labels();
    let np = pred.n_labels();
    let mut inter = vec![vec![0u64; np + 1]; nr + 1];
    let mut area_r = vec![0u64; nr + 1];
    let mut area_p = vec![0u64; np + 1];
    for (r, p) in reference.data().iter().zip(pred.data()) {
        inter[*r as usize][*p as usize] += 1;
        area_r[*r as usize] += 1;
        area_p[*p as usize] += 1;
    }
    let mut pairs = Vec::new();
    for r in 1..=nr {
        for p in 1..=np {
            if inter[r][p] > 0 {
                let iou = inter[r][p] as f64 / (area_r[r] + area_p[p] - inter[r][p]) as f64;
                if iou >= DIAGNOSTIC_IOU {
                    pairs.push((iou, r, p));
                }
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let cent_r = reference.centroids();
    let cent_p = pred.centroids();
    let mut used_r = vec![false; nr + 1];
    let mut used_p = vec![false; np + 1];
    let mut offsets = Vec::new();
    let mut ious = Vec::new();
    for (iou, r, p) in pairs {
        if used_r[r] || used_p[p] {
            continue;
        }
        used_r[r] = true;
        used_p[p] = true;
        let (ry, rx) = cent_r[r];
        let (py, px) = cent_p[p];
        offsets.push(((ry - py).powi(2) + (rx - px).powi(2)).sqrt());
        ious.push(iou);
    }
    let mean_offset = if offsets.is_empty() {
        0.0
    } else {
        offsets.iter().sum::<f64>() / offsets.len() as f64
    };
    Ok(LossyReport {
        count_delta: np as i64 - nr as i64,
        unmatched_reference: (1..=nr).filter(|&r| !used_r[r]).count(),
        unmatched_pred: (1..=np).filter(|&p| !used_p[p]).count(),
        matched_centroid_offsets: offsets,
        mean_offset,
        per_object_iou: ious,
    })
}

/// One row per image: identifier, domain tag, then the spatially averaged
/// content channels. The embedding itself (t-SNE or similar) is external.
pub fn export_content_features<W: Write>(
    model: &AdGanModel,
    images: &[(String, ImageTensor)],
    domain: &DomainLabel,
    domain_tag: &str,
    out: &mut W,
) -> Result<usize, DiagnosticsError> {
    let c = model.config.content();
    write!(out, "id,domain")?;
    for i in 0..c {
        write!(out, ",c{i}")?;
    }
    writeln!(out)?;
    for (name, img) in images {
        let content = model.encode(img, domain)?;
        let pooled = content.pooled();
        write!(out, "{name},{domain_tag}")?;
        for v in &pooled[0] {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(images.len())
}
