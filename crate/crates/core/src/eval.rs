//! MOT text ingestion and single-class mAP@0.5.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::codec_features::BoundingBox;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("frame size {0}x{1} must be positive")]
    BadFrameSize(f64, f64),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Pedestrian class id of the MOT ground-truth convention.
pub const PEDESTRIAN: i32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRow {
    pub id: i64,
    pub bbox: BoundingBox,
    pub conf: f64,
    pub class: Option<i32>,
    pub visibility: Option<f64>,
}

/// Rows keyed by (1-based) frame number.
pub type MotFrames = BTreeMap<u32, Vec<MotRow>>;

/// Parses `frame,id,x,y,w,h[,conf[,class[,vis]]]` with top-left pixel boxes.
///
/// With `ground_truth`, rows with `conf <= 0` are dropped. Rows whose class
/// column is present and neither pedestrian nor `-1` are ignored.
pub fn load_mot(text: &str, width: f64, height: f64, ground_truth: bool) -> Result<MotFrames> {
    if !(width > 0.0 && height > 0.0) {
        return Err(EvalError::BadFrameSize(width, height));
    }
    let mut out = MotFrames::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let bad = |reason: String| EvalError::Malformed { line, reason };
        let cols: Vec<&str> = raw.split(',').map(str::trim).collect();
        if cols.len() < 6 {
            return Err(bad(format!("expected at least 6 columns, found {}", cols.len())));
        }
        let num = |k: usize| -> Result<f64> {
            cols[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("column {} is not a number: {:?}", k + 1, cols[k])))
        };
        let frame = num(0)?;
        if frame < 0.0 || frame.fract() != 0.0 || frame > f64::from(u32::MAX) {
            return Err(bad(format!("bad frame number {}", cols[0])));
        }
        let id = num(1)?;
        let (x, y, w, h) = (num(2)?, num(3)?, num(4)?, num(5)?);
        if w <= 0.0 || h <= 0.0 {
            return Err(bad(format!("non-positive box size {w}x{h}")));
        }
        let conf = if cols.len() > 6 { num(6)? } else { 1.0 };
        let class = if cols.len() > 7 { Some(num(7)? as i32) } else { None };
        let visibility = if cols.len() > 8 { Some(num(8)?) } else { None };
        if matches!(class, Some(c) if c != PEDESTRIAN && c != -1) || (ground_truth && conf <= 0.0) {
            continue;
        }
        out.entry(frame as u32).or_default().push(MotRow {
            id: id as i64,
            bbox: BoundingBox::from_pixels_tlwh(x, y, w, h, width, height),
            conf,
            class,
            visibility,
        });
    }
    Ok(out)
}

/// Writes rows as `frame,id,x,y,w,h,conf,class,vis` lines.
pub fn write_mot(frames: &MotFrames, width: f64, height: f64) -> String {
    let mut s = String::new();
    for (frame, rows) in frames {
        for r in rows {
            let (x, y, w, h) = r.bbox.to_pixels_tlwh(width, height);
            let _ = writeln!(
                s,
                "{frame},{},{x},{y},{w},{h},{},{},{}",
                r.id,
                r.conf,
                r.class.unwrap_or(PEDESTRIAN),
                r.visibility.unwrap_or(1.0)
            );
        }
    }
    s
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub bbox: BoundingBox,
    pub conf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApSummary {
    /// `None` when there is no ground truth at all.
    pub ap: Option<f64>,
    pub gt_count: usize,
    pub pred_count: usize,
    pub true_positives: usize,
}

/// Whether each prediction, in ranking order, is a true positive.
fn match_ranked(preds: &BTreeMap<u32, Vec<ScoredBox>>, gt: &BTreeMap<u32, Vec<BoundingBox>>) -> Vec<bool> {
    let mut ranked: Vec<(u32, &ScoredBox)> =
        preds.iter().flat_map(|(&f, v)| v.iter().map(move |p| (f, p))).collect();
    // stable: ties keep frame, then input order
    ranked.sort_by(|a, b| b.1.conf.total_cmp(&a.1.conf));
    let mut used: BTreeMap<u32, Vec<bool>> = gt.iter().map(|(&f, v)| (f, vec![false; v.len()])).collect();
    ranked
        .iter()
        .map(|(f, p)| {
            let (Some(boxes), Some(taken)) = (gt.get(f), used.get_mut(f)) else {
                return false;
            };
            let mut best: Option<(usize, f64)> = None;
            for (k, g) in boxes.iter().enumerate() {
                if taken[k] {
                    continue;
                }
                let v = iou(&p.bbox, g);
                if v >= 0.5 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((k, v));
                }
            }
            match best {
                Some((k, _)) => {
                    taken[k] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Single-class average precision at IoU 0.5 with all-point interpolation.
pub fn ap_at_50(preds: &BTreeMap<u32, Vec<ScoredBox>>, gt: &BTreeMap<u32, Vec<BoundingBox>>) -> ApSummary {
    let gt_count: usize = gt.values().map(Vec::len).sum();
    let hits = match_ranked(preds, gt);
    let tp_total = hits.iter().filter(|&&h| h).count();
    let summary = ApSummary {
        ap: None,
        gt_count,
        pred_count: hits.len(),
        true_positives: tp_total,
    };
    if gt_count == 0 {
        return summary;
    }
    let mut precision = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (k, &h) in hits.iter().enumerate() {
        tp += usize::from(h);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    // precision envelope from the right
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let sum: f64 = hits.iter().zip(&precision).filter(|(h, _)| **h).map(|(_, p)| *p).sum();
    ApSummary {
        ap: Some(sum / gt_count as f64),
        ..summary
    }
}

/// mAP@0.5 of a single class; `None` marks the undefined no-ground-truth case.
pub fn map_at_50(preds: &BTreeMap<u32, Vec<ScoredBox>>, gt: &BTreeMap<u32, Vec<BoundingBox>>) -> Option<f64> {
    ap_at_50(preds, gt).ap
}
