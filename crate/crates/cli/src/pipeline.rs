//! Glue between CFF GOPs, MOT files and the trackers. Frames are numbered
//! from 1 across the whole file, GOP after GOP.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use rayon::prelude::*;

use mvtrack_core::codec_features::{BoundingBox, Gop, Trajectory};
use mvtrack_core::eval::{MotFrames, MotRow, ScoredBox, PEDESTRIAN};
use mvtrack_core::mini_encoder::{GroundTruth, SyntheticGop};
use mvtrack_core::temporal_model::ModelParams;
use mvtrack_core::trackers::{bafe_track, mean_mv_track, BafeTrackConfig};

/// First (I-frame) number of every GOP.
pub fn gop_starts(gops: &[Gop]) -> Vec<u32> {
    let mut next = 1u32;
    gops.iter()
        .map(|g| {
            let s = next;
            next += g.gop_size() as u32;
            s
        })
        .collect()
}

pub fn is_pframe(starts: &[u32], gops: &[Gop], frame: u32) -> bool {
    match starts.binary_search(&frame) {
        Ok(_) => false,
        Err(0) => false,
        Err(i) => frame < starts[i - 1] + gops[i - 1].gop_size() as u32,
    }
}

/// Ground truth of synthetic GOPs as MOT rows; object ids are unique
/// across the whole file.
pub fn synthetic_gt_rows(data: &[SyntheticGop]) -> MotFrames {
    let gops: Vec<Gop> = data.iter().map(|s| s.gop.clone()).collect();
    let starts = gop_starts(&gops);
    let mut out = MotFrames::new();
    let mut next_id = 1i64;
    for (sg, &start) in data.iter().zip(&starts) {
        let objects = sg.gt.first().map_or(0, Vec::len);
        for j in 0..objects {
            for (n, frame) in sg.gt.iter().enumerate() {
                if let Some(b) = frame[j] {
                    out.entry(start + n as u32).or_default().push(MotRow {
                        id: next_id + j as i64,
                        bbox: b,
                        conf: 1.0,
                        class: Some(PEDESTRIAN),
                        visibility: Some(1.0),
                    });
                }
            }
        }
        next_id += objects as i64;
    }
    out
}

/// Per-GOP ground truth indexed `[frame][object]`, objects being the ids
/// present in the GOP's first frame in ascending order.
pub fn gt_per_gop(gops: &[Gop], rows: &MotFrames) -> Vec<GroundTruth> {
    let starts = gop_starts(gops);
    gops.iter()
        .zip(&starts)
        .map(|(g, &start)| {
            let mut ids: Vec<i64> = rows.get(&start).map_or(Vec::new(), |r| r.iter().map(|r| r.id).collect());
            ids.sort_unstable();
            ids.dedup();
            (0..g.gop_size() as u32)
                .map(|n| {
                    let frame = rows.get(&(start + n));
                    ids.iter()
                        .map(|id| frame.and_then(|rs| rs.iter().find(|r| r.id == *id)).map(|r| r.bbox))
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Initial boxes of each GOP: the rows of its first frame.
pub fn init_boxes(gops: &[Gop], rows: &MotFrames) -> Vec<Vec<(i64, BoundingBox)>> {
    gop_starts(gops)
        .iter()
        .map(|s| rows.get(s).map_or(Vec::new(), |r| r.iter().map(|r| (r.id, r.bbox)).collect()))
        .collect()
}

pub enum Tracker {
    MeanMv,
    Bafe { params: Box<ModelParams>, cfg: BafeTrackConfig },
}

impl Tracker {
    pub fn name(&self) -> String {
        match self {
            Tracker::MeanMv => "mean-mv".to_string(),
            Tracker::Bafe { cfg, .. } => format!("bafe-{}", cfg.variant.name()),
        }
    }

    pub fn track(&self, gop: &Gop, init: &[BoundingBox]) -> Result<Vec<Trajectory>> {
        Ok(match self {
            Tracker::MeanMv => mean_mv_track(gop, init)?,
            Tracker::Bafe { params, cfg } => bafe_track(gop, init, params, cfg)?,
        })
    }
}

pub type Tracks = Vec<Vec<(i64, Trajectory)>>;

pub fn track_all(gops: &[Gop], inits: &[Vec<(i64, BoundingBox)>], tracker: &Tracker) -> Result<Tracks> {
    if gops.len() != inits.len() {
        bail!("{} GOPs but {} sets of initial boxes", gops.len(), inits.len());
    }
    gops.par_iter()
        .zip(inits)
        .map(|(g, init)| {
            let boxes: Vec<BoundingBox> = init.iter().map(|(_, b)| *b).collect();
            let t = tracker.track(g, &boxes)?;
            Ok(init.iter().map(|(id, _)| *id).zip(t).collect())
        })
        .collect()
}

/// Active P-frame boxes as MOT rows, objectness as confidence.
pub fn result_rows(gops: &[Gop], tracks: &Tracks) -> MotFrames {
    let mut out = MotFrames::new();
    for (start, gop_tracks) in gop_starts(gops).iter().zip(tracks) {
        for (id, t) in gop_tracks {
            for p in t.points().iter().filter(|p| p.frame > 0 && p.active) {
                out.entry(start + p.frame as u32).or_default().push(MotRow {
                    id: *id,
                    bbox: p.bbox,
                    conf: p.objectness,
                    class: Some(PEDESTRIAN),
                    visibility: Some(1.0),
                });
            }
        }
    }
    out
}

/// Predictions and ground truth restricted to P-frames.
pub fn pframe_sets(
    gops: &[Gop],
    results: &MotFrames,
    gt: &MotFrames,
) -> (BTreeMap<u32, Vec<ScoredBox>>, BTreeMap<u32, Vec<BoundingBox>>) {
    let starts = gop_starts(gops);
    let preds = results
        .iter()
        .filter(|(f, _)| is_pframe(&starts, gops, **f))
        .map(|(f, rows)| (*f, rows.iter().map(|r| ScoredBox { bbox: r.bbox, conf: r.conf }).collect()))
        .collect();
    let truth = gt
        .iter()
        .filter(|(f, _)| is_pframe(&starts, gops, **f))
        .map(|(f, rows)| (*f, rows.iter().map(|r| r.bbox).collect()))
        .collect();
    (preds, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mvtrack_core::codec_features::{FrameDims, MotionVectorField, PFrame, ResidualBlockPlane};

    fn gop(size: usize) -> Gop {
        let d = FrameDims::new(32, 32).unwrap();
        let pf = PFrame::new(MotionVectorField::zeros(d), ResidualBlockPlane::empty(d, 4).unwrap()).unwrap();
        Gop::new(d, vec![pf; size - 1]).unwrap()
    }

    #[test]
    fn frame_numbering() {
        let gops = vec![gop(3), gop(2), gop(4)];
        assert_eq!(gop_starts(&gops), vec![1, 4, 6]);
        let p: Vec<u32> = (0..12).filter(|&f| is_pframe(&gop_starts(&gops), &gops, f)).collect();
        assert_eq!(p, vec![2, 3, 5, 7, 8, 9]);
    }
}
