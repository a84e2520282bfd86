use crate::codec_features::BoundingBox;

use super::params::OUTPUT_DIM;
use super::{Delta, ModelError, Result};

/// Smallest predicted width/height seen by the GIoU term.
pub const MIN_SIZE: f64 = 1e-3;
const P_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda_box: f64,
    pub lambda_giou: f64,
    pub lambda_cls: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Proposal slots per GOP; slots past the real proposals are padding.
    pub slots: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_box: 5.0,
            lambda_giou: 2.0,
            lambda_cls: 2.0,
            alpha: 0.25,
            gamma: 2.0,
            slots: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub l_box: f64,
    pub l_giou: f64,
    pub l_cls: f64,
}

impl LossParts {
    pub fn combine(l_box: f64, l_giou: f64, l_cls: f64, cfg: &LossConfig) -> Self {
        Self {
            total: cfg.lambda_box * l_box + cfg.lambda_giou * l_giou + cfg.lambda_cls * l_cls,
            l_box,
            l_giou,
            l_cls,
        }
    }
}

/// Interval overlap and hull along one axis, with derivatives with respect to
/// the predicted endpoints. Ties split the derivative evenly.
struct Axis {
    inter: f64,
    d_inter: [f64; 2],
    hull: f64,
    d_hull: [f64; 2],
}

fn axis(p0: f64, p1: f64, q0: f64, q1: f64) -> Axis {
    let side = |a: f64, b: f64| -> f64 {
        // 1 when a is the binding endpoint, 0.5 on a tie
        if a == b {
            0.5
        } else {
            f64::from(u8::from(a > b))
        }
    };
    let inter = p1.min(q1) - p0.max(q0);
    let (inter, d_inter) = if inter > 0.0 {
        (inter, [-side(p0, q0), side(q1, p1)])
    } else {
        (0.0, [0.0, 0.0])
    };
    let hull = p1.max(q1) - p0.min(q0);
    Axis {
        inter,
        d_inter,
        hull,
        d_hull: [-side(q0, p0), side(p1, q1)],
    }
}

/// GIoU of a `(cx, cy, w, h)` prediction against `t`, and its gradient with
/// respect to the prediction.
pub(crate) fn giou_grad(p: [f64; 4], t: &BoundingBox) -> (f64, [f64; 4]) {
    let ax = axis(p[0] - p[2] / 2.0, p[0] + p[2] / 2.0, t.x0(), t.x1());
    let ay = axis(p[1] - p[3] / 2.0, p[1] + p[3] / 2.0, t.y0(), t.y1());
    let i = ax.inter * ay.inter;
    let u = p[2] * p[3] + t.w * t.h - i;
    let c = ax.hull * ay.hull;
    let g = i / u - 1.0 + u / c;
    // derivatives w.r.t. (x0, x1, y0, y1)
    let mut de = [0.0; 4];
    for k in 0..4 {
        let (di, dc, da) = if k < 2 {
            let sign = if k == 0 { -1.0 } else { 1.0 };
            (ax.d_inter[k] * ay.inter, ax.d_hull[k] * ay.hull, sign * p[3])
        } else {
            let sign = if k == 2 { -1.0 } else { 1.0 };
            (ay.d_inter[k - 2] * ax.inter, ay.d_hull[k - 2] * ax.hull, sign * p[2])
        };
        let du = da - di;
        de[k] = di / u - i * du / (u * u) + du / c - u * dc / (c * c);
    }
    let grad = [de[0] + de[1], de[2] + de[3], (de[1] - de[0]) / 2.0, (de[3] - de[2]) / 2.0];
    (g, grad)
}

/// Generalized IoU, in `(-1, 1]`.
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    giou_grad([a.cx, a.cy, a.w, a.h], b).0
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Loss and `dL/dp` on an already clamped probability.
fn focal_dp(p: f64, target: bool, alpha: f64, gamma: f64) -> (f64, f64) {
    if target {
        let q = 1.0 - p;
        let l = -alpha * q.powf(gamma) * p.ln();
        let dq = if gamma == 0.0 { 0.0 } else { gamma * q.powf(gamma - 1.0) };
        (l, -alpha * (-dq * p.ln() + q.powf(gamma) / p))
    } else {
        let l = -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln();
        let dp = if gamma == 0.0 { 0.0 } else { gamma * p.powf(gamma - 1.0) };
        (l, -(1.0 - alpha) * (dp * (1.0 - p).ln() - p.powf(gamma) / (1.0 - p)))
    }
}

pub fn focal_loss(p: f64, target: bool, alpha: f64, gamma: f64) -> f64 {
    focal_dp(p.clamp(P_EPS, 1.0 - P_EPS), target, alpha, gamma).0
}

/// Focal loss of `sigmoid(z)` and its derivative in `z` (zero where clamped).
pub(crate) fn focal_logit(z: f64, target: bool, alpha: f64, gamma: f64) -> (f64, f64) {
    let p = sigmoid(z);
    let pc = p.clamp(P_EPS, 1.0 - P_EPS);
    let (l, dl) = focal_dp(pc, target, alpha, gamma);
    if pc != p {
        (l, 0.0)
    } else {
        (l, dl * p * (1.0 - p))
    }
}

/// One proposal's contribution: raw head outputs, the boxes they refine,
/// and the ground truth (`None` once the object is gone).
pub(crate) struct SeqTargets<'a> {
    pub out: &'a [[f64; OUTPUT_DIM]],
    pub align: &'a [BoundingBox],
    pub target: &'a [Option<BoundingBox>],
}

pub(crate) struct LossGrad {
    pub parts: LossParts,
    pub d_real: Vec<Vec<[f64; OUTPUT_DIM]>>,
    /// Gradient for the shared padding sequence, already weighted by the
    /// number of padding slots.
    pub d_pad: Vec<[f64; OUTPUT_DIM]>,
}

pub(crate) fn loss_grad(seqs: &[SeqTargets], pad_out: &[[f64; OUTPUT_DIM]], cfg: &LossConfig) -> Result<LossGrad> {
    let n = seqs.len();
    if n > cfg.slots {
        return Err(ModelError::TooManyProposals { count: n, slots: cfg.slots });
    }
    let t_len = pad_out.len();
    for (j, s) in seqs.iter().enumerate() {
        if s.out.len() != t_len || s.align.len() != t_len || s.target.len() != t_len {
            return Err(ModelError::Shape(format!(
                "proposal {j}: {} outputs, {} alignment boxes, {} targets for {t_len} frames",
                s.out.len(),
                s.align.len(),
                s.target.len()
            )));
        }
    }
    let m = seqs.iter().flat_map(|s| s.target).filter(|t| t.is_some()).count();
    let mut d_real = vec![vec![[0.0; OUTPUT_DIM]; t_len]; n];
    let mut d_pad = vec![[0.0; OUTPUT_DIM]; t_len];
    let (mut sum_l1, mut sum_giou, mut sum_cls) = (0.0, 0.0, 0.0);
    let cls_norm = (cfg.slots * t_len) as f64;
    let box_w = if m > 0 { cfg.lambda_box / (4 * m) as f64 } else { 0.0 };
    let giou_w = if m > 0 { cfg.lambda_giou / m as f64 } else { 0.0 };
    let cls_w = if t_len > 0 { cfg.lambda_cls / cls_norm } else { 0.0 };

    for (j, s) in seqs.iter().enumerate() {
        for t in 0..t_len {
            let o = &s.out[t];
            let d = &mut d_real[j][t];
            let (l, dz) = focal_logit(o[4], s.target[t].is_some(), cfg.alpha, cfg.gamma);
            sum_cls += l;
            d[4] = cls_w * dz;
            let Some(y) = s.target[t] else { continue };
            let a = &s.align[t];
            let pred = [a.cx + o[0], a.cy + o[1], a.w + o[2], a.h + o[3]];
            let yv = [y.cx, y.cy, y.w, y.h];
            for k in 0..4 {
                let r = pred[k] - yv[k];
                sum_l1 += r.abs();
                d[k] = box_w * if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
            let clamped = [pred[0], pred[1], pred[2].max(MIN_SIZE), pred[3].max(MIN_SIZE)];
            let (g, mut dg) = giou_grad(clamped, &y);
            sum_giou += 1.0 - g;
            for k in 2..4 {
                if pred[k] < MIN_SIZE {
                    dg[k] = 0.0;
                }
            }
            for k in 0..4 {
                d[k] -= giou_w * dg[k];
            }
        }
    }
    let pad_slots = (cfg.slots - n) as f64;
    if pad_slots > 0.0 {
        for (t, o) in pad_out.iter().enumerate() {
            let (l, dz) = focal_logit(o[4], false, cfg.alpha, cfg.gamma);
            sum_cls += pad_slots * l;
            d_pad[t][4] = cls_w * pad_slots * dz;
        }
    }
    let l_box = if m > 0 { sum_l1 / (4 * m) as f64 } else { 0.0 };
    let l_giou = if m > 0 { sum_giou / m as f64 } else { 0.0 };
    let l_cls = if t_len > 0 { sum_cls / cls_norm } else { 0.0 };
    Ok(LossGrad {
        parts: LossParts::combine(l_box, l_giou, l_cls, cfg),
        d_real,
        d_pad,
    })
}

/// Total loss from predicted deltas.
///
/// `pred[j][t]` refines `align[j][t]` towards `target[j][t]`; `pad` holds the
/// outputs shared by every padding slot.
pub fn loss_total(
    pred: &[Vec<Delta>],
    align: &[Vec<BoundingBox>],
    target: &[Vec<Option<BoundingBox>>],
    pad: &[Delta],
    cfg: &LossConfig,
) -> Result<LossParts> {
    if pred.len() != align.len() || pred.len() != target.len() {
        return Err(ModelError::Shape(format!(
            "{} predictions, {} alignments, {} targets",
            pred.len(),
            align.len(),
            target.len()
        )));
    }
    let outs: Vec<Vec<[f64; OUTPUT_DIM]>> = pred.iter().map(|p| p.iter().map(Delta::to_array).collect()).collect();
    let pad: Vec<[f64; OUTPUT_DIM]> = pad.iter().map(Delta::to_array).collect();
    let seqs: Vec<SeqTargets> = outs
        .iter()
        .zip(align)
        .zip(target)
        .map(|((out, align), target)| SeqTargets { out, align, target })
        .collect();
    Ok(loss_grad(&seqs, &pad, cfg)?.parts)
}
