//! Pixel- and object-level segmentation metrics: precision/recall/DICE,
//! object F1 at an IoU threshold, and the cell-tracking-style SEG score
//! (mean Jaccard over majority-overlap matches).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::image_io::ImageTensor;
use crate::morphology::LabelMap;

pub use crate::morphology::{connected_components, connected_components_bool};

#[derive(Debug)]
pub enum MetricsError {
    ShapeMismatch {
        pred: (usize, usize),
        gt: (usize, usize),
    },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::ShapeMismatch { pred, gt } => {
                write!(f, "shape mismatch: pred {pred:?} vs gt {gt:?}")
            }
        }
    }
}

impl std::error::Error for MetricsError {}

/// Pixel-level counts and ratios. Conventions for empty denominators:
/// a ratio whose error terms are all zero is 1 (perfect agreement),
/// otherwise 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelReport {
    pub n_tp: u64,
    pub n_fp: u64,
    pub n_fn: u64,
    pub precision: f64,
    pub recall: f64,
    pub dice: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Compare binary masks (foreground where value > 0).
pub fn pixel_metrics(pred: &ImageTensor, gt: &ImageTensor) -> Result<PixelReport, MetricsError> {
    if (pred.height, pred.width) != (gt.height, gt.width) {
        return Err(MetricsError::ShapeMismatch {
            pred: (pred.height, pred.width),
            gt: (gt.height, gt.width),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (p, g) in pred.data().iter().zip(gt.data()) {
        match (*p > 0.0, *g > 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(PixelReport {
        n_tp: tp,
        n_fp: fp,
        n_fn: fn_,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        dice: ratio(2 * tp, 2 * tp + fp + fn_),
    })
}

/// Object-level report: greedy one-to-one IoU matching for F1, plus the
/// SEG score; OP_csb only when an externally computed DET is supplied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectReport {
    pub n_gt: usize,
    pub n_pred: usize,
    pub matches: usize,
    pub f1: f64,
    pub seg_score: f64,
    pub op_csb: Option<f64>,
}

/// Pairwise intersection counts between two label maps, as a dense
/// (n_gt + 1) x (n_pred + 1) matrix of pixel counts.
fn intersection_matrix(gt: &LabelMap, pred: &LabelMap) -> (Vec<Vec<u64>>, Vec<u64>, Vec<u64>) {
    let ng = gt.n_labels();
    let np = pred.n_labels();
    let mut inter = vec![vec![0u64; np + 1]; ng + 1];
    let mut area_g = vec![0u64; ng + 1];
    let mut area_p = vec![0u64; np + 1];
    for (g, p) in gt.data().iter().zip(pred.data()) {
        inter[*g as usize][*p as usize] += 1;
        area_g[*g as usize] += 1;
        area_p[*p as usize] += 1;
    }
    (inter, area_g, area_p)
}

fn check_shapes(pred: &LabelMap, gt: &LabelMap) -> Result<(), MetricsError> {
    if (pred.height, pred.width) != (gt.height, gt.width) {
        return Err(MetricsError::ShapeMismatch {
            pred: (pred.height, pred.width),
            gt: (gt.height, gt.width),
        });
    }
    Ok(())
}

/// Greedy one-to-one matching in descending IoU order; a pair counts as
/// matched when IoU >= threshold. At thresholds >= 0.5 any candidate pair
/// is unique per object, so greedy matching equals the optimal matching.
pub fn object_f1(
    pred: &LabelMap,
    gt: &LabelMap,
    iou_threshold: f64,
) -> Result<ObjectReport, MetricsError> {
    check_shapes(pred, gt)?;
    let (inter, area_g, area_p) = intersection_matrix(gt, pred);
    let (ng, np) = (area_g.len() - 1, area_p.len() - 1);

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for g in 1..=ng {
        for p in 1..=np {
            if inter[g][p] > 0 {
                let union = area_g[g] + area_p[p] - inter[g][p];
                let iou = inter[g][p] as f64 / union as f64;
                if iou >= iou_threshold {
                    pairs.push((iou, g, p));
                }
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_g = vec![false; ng + 1];
    let mut used_p = vec![false; np + 1];
    let mut matches = 0usize;
    for (_, g, p) in pairs {
        if !used_g[g] && !used_p[p] {
            used_g[g] = true;
            used_p[p] = true;
            matches += 1;
        }
    }
    let f1 = if ng + np == 0 {
        1.0
    } else {
        2.0 * matches as f64 / (ng + np) as f64
    };
    Ok(ObjectReport {
        n_gt: ng,
        n_pred: np,
        matches,
        f1,
        seg_score: seg_score(pred, gt)?,
        op_csb: None,
    })
}

/// SEG: for each ground-truth object R, take the predicted object S with
/// |R ∩ S| > 0.5 |R| (unique when it exists) and average the Jaccard
/// |R ∩ S| / |R ∪ S| over all R; unmatched objects contribute 0.
pub fn seg_score(pred: &LabelMap, gt: &LabelMap) -> Result<f64, MetricsError> {
    check_shapes(pred, gt)?;
    let (inter, area_g, area_p) = intersection_matrix(gt, pred);
    let (ng, np) = (area_g.len() - 1, area_p.len() - 1);
    if ng == 0 {
        return Ok(1.0); // nothing required of the prediction
    }
    let mut total = 0.0f64;
    for g in 1..=ng {
        let mut matched: Option<usize> = None;
        for p in 1..=np {
            if 2 * inter[g][p] > area_g[g] {
                // Majority overlap is exclusive: only one S can exceed half of R.
                debug_assert!(matched.is_none(), "second majority match for one object");
                matched = Some(p);
            }
        }
        if let Some(p) = matched {
            let union = area_g[g] + area_p[p] - inter[g][p];
            total += inter[g][p] as f64 / union as f64;
        }
    }
    Ok(total / ng as f64)
}

/// Cell-segmentation-benchmark overall score: the mean of SEG and DET.
pub fn op_csb(seg: f64, det: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&seg) && (0.0..=1.0).contains(&det));
    0.5 * (seg + det)
}

/// Mean and (population) standard deviation of a sequence.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}
