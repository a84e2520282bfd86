//! Box propagation over a GOP: the motion-vector averaging baseline and the
//! learned refinement tracker.

use thiserror::Error;

use crate::bafe::{assemble_features, BafeConfig, BafeError};
use crate::codec_features::{mv_to_pixels, BoundingBox, Gop, MotionVectorField, TrackPoint, Trajectory, MB_SIZE};
use crate::temporal_model::{forward_gop, Delta, ModelError, ModelParams, Variant};

/// Proposal capacity of the learned tracker.
pub const MAX_PROPOSALS: usize = 200;
pub const MIN_BOX_SIZE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("{count} initial boxes exceed the limit of {max}")]
    TooManyBoxes { count: usize, max: usize },
    #[error("model was trained as {model} but tracking asked for {requested}")]
    VariantMismatch { model: &'static str, requested: &'static str },
    #[error("model expects {model_mv} MV and {model_dct} DCT features, BAFE config gives {cfg_mv} and {cfg_dct}")]
    DimsMismatch {
        model_mv: usize,
        model_dct: usize,
        cfg_mv: usize,
        cfg_dct: usize,
    },
    #[error("invalid initial box {index}: {bbox:?}")]
    InvalidBox { index: usize, bbox: BoundingBox },
    #[error(transparent)]
    Bafe(#[from] BafeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T, E = TrackError> = std::result::Result<T, E>;

fn check_init(init: &[BoundingBox]) -> Result<()> {
    match init.iter().position(|b| !b.is_valid()) {
        Some(index) => Err(TrackError::InvalidBox { index, bbox: init[index] }),
        None => Ok(()),
    }
}

/// Mean pixel motion of the macroblocks whose centers lie inside `b`,
/// in normalized units. Zero when no center is covered.
pub fn mean_box_motion(mv: &MotionVectorField, b: &BoundingBox) -> (f64, f64) {
    let d = mv.dims();
    let (w, h) = (f64::from(d.width()), f64::from(d.height()));
    let m = f64::from(MB_SIZE);
    // MB c has its center at (c + 0.5) * 16 px
    let range = |lo: f64, hi: f64, n: usize| {
        let first = (lo / m - 0.5).ceil().max(0.0) as usize;
        let last = (hi / m - 0.5).floor();
        if last < 0.0 {
            return first..first;
        }
        first..(last as usize + 1).min(n)
    };
    let cols = range(b.x0() * w, b.x1() * w, d.mb_cols());
    let rows = range(b.y0() * h, b.y1() * h, d.mb_rows());
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for r in rows {
        for c in cols.clone() {
            let (px, py) = mv_to_pixels(mv.get(c, r));
            sx += px;
            sy += py;
            n += 1;
        }
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    (sx / n as f64 / w, sy / n as f64 / h)
}

/// Shifts a box so it lies inside the frame, or centers it when it is
/// larger than the frame.
fn shift_inside(b: BoundingBox) -> BoundingBox {
    let fit = |c: f64, s: f64| if s >= 1.0 { 0.5 } else { c.clamp(s / 2.0, 1.0 - s / 2.0) };
    BoundingBox {
        cx: fit(b.cx, b.w),
        cy: fit(b.cy, b.h),
        ..b
    }
}

pub fn mean_mv_step(mv: &MotionVectorField, b: &BoundingBox) -> BoundingBox {
    let (dx, dy) = mean_box_motion(mv, b);
    shift_inside(BoundingBox {
        cx: b.cx + dx,
        cy: b.cy + dy,
        ..*b
    })
}

fn mean_mv_boxes(gop: &Gop, init: &BoundingBox) -> Vec<BoundingBox> {
    let mut out = Vec::with_capacity(gop.gop_size());
    let mut b = *init;
    out.push(b);
    for pf in gop.pframes() {
        b = mean_mv_step(pf.mv(), &b);
        out.push(b);
    }
    out
}

fn to_trajectory(boxes: &[BoundingBox]) -> Trajectory {
    let mut t = Trajectory::new();
    for (frame, &bbox) in boxes.iter().enumerate() {
        t.push(TrackPoint {
            frame,
            bbox,
            objectness: 1.0,
            active: true,
        })
        .expect("frames increase");
    }
    t
}

/// Translates every box by the mean motion inside it, frame after frame.
/// Trajectories cover frames `0..gop_size`, frame 0 being the initial box.
pub fn mean_mv_track(gop: &Gop, init: &[BoundingBox]) -> Result<Vec<Trajectory>> {
    check_init(init)?;
    Ok(init.iter().map(|b| to_trajectory(&mean_mv_boxes(gop, b))).collect())
}

/// Adds a refinement to a box, then clamps the size to `[1e-3, 1]` and the
/// center so the box still overlaps the frame.
pub fn apply_aboxes(prev: &BoundingBox, d: &Delta) -> BoundingBox {
    let w = (prev.w + d.dw).clamp(MIN_BOX_SIZE, 1.0);
    let h = (prev.h + d.dh).clamp(MIN_BOX_SIZE, 1.0);
    // keep at least a sliver (a quarter of the minimum size) inside
    let keep = |c: f64, s: f64| {
        let slack = s / 2.0 - MIN_BOX_SIZE / 4.0;
        c.clamp(-slack, 1.0 + slack)
    };
    BoundingBox {
        cx: keep(prev.cx + d.dx, w),
        cy: keep(prev.cy + d.dy, h),
        w,
        h,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BafeTrackConfig {
    pub bafe: BafeConfig,
    pub variant: Variant,
    pub threshold: f64,
}

impl Default for BafeTrackConfig {
    fn default() -> Self {
        Self {
            bafe: BafeConfig::default(),
            variant: Variant::MvDct,
            threshold: 0.5,
        }
    }
}

/// Mean-MV alignment, box-aligned features, model refinements, then
/// accumulation from the initial boxes. A proposal whose objectness drops
/// below the threshold is frozen and marked inactive from that frame on.
pub fn bafe_track(gop: &Gop, init: &[BoundingBox], params: &ModelParams, cfg: &BafeTrackConfig) -> Result<Vec<Trajectory>> {
    if init.len() > MAX_PROPOSALS {
        return Err(TrackError::TooManyBoxes {
            count: init.len(),
            max: MAX_PROPOSALS,
        });
    }
    if params.variant != cfg.variant {
        return Err(TrackError::VariantMismatch {
            model: params.variant.name(),
            requested: cfg.variant.name(),
        });
    }
    if !params.dims.matches(&cfg.bafe) {
        return Err(TrackError::DimsMismatch {
            model_mv: params.dims.mv_len,
            model_dct: params.dims.dct_len,
            cfg_mv: cfg.bafe.mv_len(),
            cfg_dct: cfg.bafe.dct_len(),
        });
    }
    check_init(init)?;
    let alignment: Vec<Vec<BoundingBox>> = init
        .iter()
        .map(|b| {
            let mut boxes = mean_mv_boxes(gop, b);
            boxes.pop();
            boxes
        })
        .collect();
    let feats = assemble_features(gop, &alignment, &cfg.bafe)?;
    let deltas = if init.is_empty() { Vec::new() } else { forward_gop(params, &feats)? };
    Ok(init
        .iter()
        .zip(&deltas)
        .map(|(b0, ds)| {
            let mut t = Trajectory::new();
            let mut point = TrackPoint {
                frame: 0,
                bbox: *b0,
                objectness: 1.0,
                active: true,
            };
            t.push(point).expect("first point");
            for (i, d) in ds.iter().enumerate() {
                point.frame = i + 1;
                if point.active {
                    point.objectness = d.objectness();
                    if point.objectness >= cfg.threshold {
                        point.bbox = apply_aboxes(&point.bbox, d);
                    } else {
                        point.active = false;
                    }
                }
                t.push(point).expect("frames increase");
            }
            t
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec_features::{FrameDims, MotionVector, PFrame, ResidualBlockPlane};
    use crate::temporal_model::{init_params, ModelDims};
    use proptest::prelude::*;

    fn gop_with(fields: Vec<MotionVectorField>) -> Gop {
        let dims = fields[0].dims();
        let pframes = fields
            .into_iter()
            .map(|mv| PFrame::new(mv, ResidualBlockPlane::empty(dims, 8).unwrap()).unwrap())
            .collect();
        Gop::new(dims, pframes).unwrap()
    }

    fn dims() -> FrameDims {
        FrameDims::new(160, 128).unwrap()
    }

    #[test]
    fn uniform_field_moves_two_pixels_per_frame() {
        let d = dims();
        let gop = gop_with(vec![MotionVectorField::uniform(d, MotionVector::new(4, 0)); 5]);
        let b = BoundingBox::from_pixels_tlwh(40.0, 40.0, 32.0, 32.0, 160.0, 128.0);
        let t = &mean_mv_track(&gop, &[b]).unwrap()[0];
        assert_eq!(t.len(), 6);
        for (i, p) in t.points().iter().enumerate() {
            assert!((p.bbox.cx * 160.0 - (56.0 + 2.0 * i as f64)).abs() < 1e-9);
            assert_eq!((p.bbox.w, p.bbox.h, p.objectness), (b.w, b.h, 1.0));
        }
    }

    #[test]
    fn zero_field_is_static() {
        let d = dims();
        let gop = gop_with(vec![MotionVectorField::zeros(d); 3]);
        let b = BoundingBox { cx: 0.3, cy: 0.6, w: 0.2, h: 0.1 };
        assert!(mean_mv_track(&gop, &[b]).unwrap()[0].points().iter().all(|p| p.bbox == b));
    }

    #[test]
    fn straddling_box_averages_two_regions() {
        let d = dims();
        let mut f = MotionVectorField::zeros(d);
        for r in 0..d.mb_rows() {
            f.set(2, r, MotionVector::new(2, 0));
        }
        // covers MB centers (40, 24) and (56, 24): one MB from each region
        let b = BoundingBox::from_pixels_tlwh(36.0, 18.0, 24.0, 12.0, 160.0, 128.0);
        let (dx, dy) = mean_box_motion(&f, &b);
        assert!((dx * 160.0 - 0.5).abs() < 1e-12 && dy == 0.0);
        let mut f2 = MotionVectorField::zeros(d);
        f2.set(2, 1, MotionVector::new(4, 0));
        let (dx, _) = mean_box_motion(&f2, &b);
        assert!((dx * 160.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uncovered_box_does_not_move() {
        let d = dims();
        let f = MotionVectorField::uniform(d, MotionVector::new(6, 6));
        let b = BoundingBox::from_pixels_tlwh(1.0, 1.0, 4.0, 4.0, 160.0, 128.0);
        assert_eq!(mean_box_motion(&f, &b), (0.0, 0.0));
    }

    #[test]
    fn mean_mv_keeps_box_in_frame() {
        let d = dims();
        let gop = gop_with(vec![MotionVectorField::uniform(d, MotionVector::new(40, 0)); 5]);
        let b = BoundingBox { cx: 0.8, cy: 0.5, w: 0.2, h: 0.2 };
        for p in mean_mv_track(&gop, &[b]).unwrap()[0].points() {
            assert!(p.bbox.x1() <= 1.0 + 1e-12 && p.bbox.x0() >= -1e-12);
        }
    }

    #[test]
    fn aboxes_examples() {
        let b = BoundingBox { cx: 0.5, cy: 0.5, w: 0.2, h: 0.2 };
        let r = apply_aboxes(&b, &Delta { dx: 0.01, dy: -0.02, ..Default::default() });
        assert!((r.cx - 0.51).abs() < 1e-12 && (r.cy - 0.48).abs() < 1e-12);
        assert_eq!((r.w, r.h), (0.2, 0.2));
        assert_eq!(apply_aboxes(&b, &Delta::default()), b);
        let r = apply_aboxes(&b, &Delta { dw: -0.3, ..Default::default() });
        assert_eq!(r.w, MIN_BOX_SIZE);
    }

    fn tiny_bafe() -> BafeConfig {
        BafeConfig { mv_grid: 2, dct_grid: 1, margin: 0.5 }
    }

    #[test]
    fn zero_model_keeps_init_boxes() {
        let d = dims();
        let gop = gop_with(vec![MotionVectorField::uniform(d, MotionVector::new(4, 2)); 5]);
        let cfg = BafeTrackConfig { bafe: tiny_bafe(), variant: Variant::MvDct, threshold: 0.5 };
        let dims = ModelDims { box_embed: 3, fused: 4, hidden: 3, head_hidden: 3, ..ModelDims::for_bafe(&cfg.bafe) };
        let p = ModelParams::zeros(dims, Variant::MvDct).unwrap();
        let init = [BoundingBox { cx: 0.4, cy: 0.5, w: 0.2, h: 0.3 }, BoundingBox { cx: 0.7, cy: 0.2, w: 0.1, h: 0.1 }];
        let tracks = bafe_track(&gop, &init, &p, &cfg).unwrap();
        for (t, b) in tracks.iter().zip(&init) {
            assert_eq!(t.len(), 6);
            for q in &t.points()[1..] {
                assert_eq!(q.bbox, *b);
                assert_eq!(q.objectness, 0.5);
                assert!(q.active);
            }
        }
    }

    #[test]
    fn low_objectness_freezes_proposal() {
        let d = dims();
        let gop = gop_with(vec![MotionVectorField::zeros(d); 3]);
        let cfg = BafeTrackConfig { bafe: tiny_bafe(), variant: Variant::Mv, threshold: 0.5 };
        let dims = ModelDims { box_embed: 2, fused: 2, hidden: 2, head_hidden: 2, ..ModelDims::for_bafe(&cfg.bafe) };
        let mut p = ModelParams::zeros(dims, Variant::Mv).unwrap();
        let n = p.values.len();
        p.values[n - 5] = 0.05; // dx bias
        p.values[n - 1] = -1.0; // objectness logit
        let init = [BoundingBox { cx: 0.4, cy: 0.5, w: 0.2, h: 0.3 }];
        let t = &bafe_track(&gop, &init, &p, &cfg).unwrap()[0];
        assert!(t.points()[1..].iter().all(|q| !q.active && q.bbox == init[0]));
    }

    #[test]
    fn capacity_and_mismatch_errors() {
        let d = dims();
        let gop = gop_with(vec![MotionVectorField::zeros(d); 2]);
        let cfg = BafeTrackConfig { bafe: tiny_bafe(), variant: Variant::MvDct, threshold: 0.5 };
        let dims = ModelDims { box_embed: 2, fused: 2, hidden: 2, head_hidden: 2, ..ModelDims::for_bafe(&cfg.bafe) };
        let p = init_params(dims, Variant::MvDct, 0).unwrap();
        let b = BoundingBox { cx: 0.4, cy: 0.5, w: 0.2, h: 0.3 };
        assert!(matches!(
            bafe_track(&gop, &vec![b; 201], &p, &cfg),
            Err(TrackError::TooManyBoxes { count: 201, .. })
        ));
        assert!(bafe_track(&gop, &vec![b; 200], &p, &cfg).is_ok());
        let wrong = BafeTrackConfig { variant: Variant::Dct, ..cfg };
        assert!(matches!(bafe_track(&gop, &[b], &p, &wrong), Err(TrackError::VariantMismatch { .. })));
        let wrong = BafeTrackConfig { bafe: BafeConfig::default(), ..cfg };
        assert!(matches!(bafe_track(&gop, &[b], &p, &wrong), Err(TrackError::DimsMismatch { .. })));
    }

    proptest! {
        #[test]
        fn aboxes_output_is_valid(
            cx in -0.2f64..1.2, cy in -0.2f64..1.2, w in 0.001f64..1.0, h in 0.001f64..1.0,
            dx in -2.0f64..2.0, dy in -2.0f64..2.0, dw in -2.0f64..2.0, dh in -2.0f64..2.0,
        ) {
            let r = apply_aboxes(&BoundingBox { cx, cy, w, h }, &Delta { dx, dy, dw, dh, logit: 0.0 });
            prop_assert!(r.is_valid(), "{:?}", r);
            prop_assert!(r.w >= MIN_BOX_SIZE && r.w <= 1.0 && r.h >= MIN_BOX_SIZE && r.h <= 1.0);
        }

        #[test]
        fn bafe_track_is_deterministic_and_valid(seed in 0u64..1000, mvx in -8i16..8, mvy in -8i16..8) {
            let d = dims();
            let gop = gop_with(vec![MotionVectorField::uniform(d, MotionVector::new(mvx, mvy)); 4]);
            let cfg = BafeTrackConfig { bafe: tiny_bafe(), variant: Variant::MvDct, threshold: 0.0 };
            let dims = ModelDims { box_embed: 3, fused: 3, hidden: 3, head_hidden: 3, ..ModelDims::for_bafe(&cfg.bafe) };
            let mut p = init_params(dims, Variant::MvDct, seed).unwrap();
            p.values.iter_mut().for_each(|v| *v *= 5.0);
            let init = [BoundingBox { cx: 0.1, cy: 0.9, w: 0.1, h: 0.1 }];
            let a = bafe_track(&gop, &init, &p, &cfg).unwrap();
            prop_assert_eq!(&a, &bafe_track(&gop, &init, &p, &cfg).unwrap());
            for q in a[0].points() {
                prop_assert!(q.bbox.is_valid());
            }
        }
    }
}
