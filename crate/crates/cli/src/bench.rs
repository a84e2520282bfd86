//! Multi-stream replay benchmark over a fixed worker pool.

use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use mvtrack_core::codec_features::{mv_values_per_frame, rgb_samples_per_frame, BoundingBox, Gop};

use crate::pipeline::Tracker;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub workers: usize,
    pub streams: usize,
    pub fps_target: f64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TrackerBench {
    pub tracker: String,
    /// Medians over repetitions of the per-repetition percentiles.
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub frames_per_repetition: usize,
    pub sustainable_streams: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BenchReport {
    pub config_hash: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub boxes: usize,
    pub mv_values_per_frame: usize,
    pub rgb_samples_per_frame: usize,
    pub rgb_to_mv_ratio: f64,
    pub workers: usize,
    pub streams: usize,
    pub fps_target: f64,
    pub repetitions: usize,
    /// One-off per-frame cost of indexing the residual blocks, paid at load
    /// time and excluded from tracker latencies.
    pub block_index_ms_per_frame: f64,
    pub trackers: Vec<TrackerBench>,
    /// Mean-MV sustainable streams over those of the first learned tracker.
    pub stream_ratio: Option<f64>,
}

/// `n` boxes laid out on a fixed grid, independent of resolution.
pub fn default_boxes(n: usize) -> Vec<BoundingBox> {
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let rows = n.div_ceil(cols).max(1);
    (0..n)
        .map(|k| BoundingBox {
            cx: ((k % cols) as f64 + 0.5) / cols as f64,
            cy: ((k / cols) as f64 + 0.5) / rows as f64,
            w: 0.5 / cols as f64,
            h: 0.5 / rows as f64,
        })
        .collect()
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Per-frame latencies in seconds of one replay of every stream: each GOP's
/// tracking time divided by its P-frame count.
fn replay(pool: &rayon::ThreadPool, gops: &[Gop], boxes: &[BoundingBox], tracker: &Tracker, streams: usize) -> Result<Vec<f64>> {
    let per_stream: Vec<Result<Vec<f64>>> = pool.install(|| {
        (0..streams)
            .into_par_iter()
            .map(|_| {
                let mut lat = Vec::with_capacity(gops.len());
                for g in gops {
                    let t0 = Instant::now();
                    let tracks = tracker.track(g, boxes)?;
                    let dt = t0.elapsed().as_secs_f64();
                    std::hint::black_box(tracks);
                    lat.push(dt / (g.gop_size() - 1) as f64);
                }
                Ok(lat)
            })
            .collect()
    });
    let mut all = Vec::new();
    for s in per_stream {
        all.extend(s?);
    }
    Ok(all)
}

pub fn run_bench(
    gops: &[Gop],
    boxes: &[BoundingBox],
    trackers: &[Tracker],
    opts: &BenchOptions,
    config_hash: &str,
    seed: u64,
) -> Result<BenchReport> {
    let dims = gops.first().map(Gop::dims).context("CFF holds no GOPs")?;
    let mv = mv_values_per_frame(dims);
    let rgb = rgb_samples_per_frame(dims);
    let t0 = Instant::now();
    let mut frames = 0usize;
    for g in gops {
        for pf in g.pframes() {
            std::hint::black_box(pf.residual_y().block_sums());
            frames += 1;
        }
    }
    let index_ms = t0.elapsed().as_secs_f64() * 1e3 / frames.max(1) as f64;
    let mut report = BenchReport {
        config_hash: config_hash.to_string(),
        seed,
        width: dims.width(),
        height: dims.height(),
        boxes: boxes.len(),
        mv_values_per_frame: mv,
        rgb_samples_per_frame: rgb,
        rgb_to_mv_ratio: rgb as f64 / mv as f64,
        workers: opts.workers,
        streams: opts.streams,
        fps_target: opts.fps_target,
        repetitions: opts.repetitions,
        block_index_ms_per_frame: index_ms,
        trackers: Vec::new(),
        stream_ratio: None,
    };
    if opts.streams == 0 {
        return Ok(report);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .context("building worker pool")?;
    for tracker in trackers {
        replay(&pool, gops, boxes, tracker, opts.streams)?; // warm-up
        let (mut p50s, mut p95s) = (Vec::new(), Vec::new());
        let mut frames = 0;
        for _ in 0..opts.repetitions.max(1) {
            let mut lat = replay(&pool, gops, boxes, tracker, opts.streams)?;
            lat.sort_by(f64::total_cmp);
            frames = lat.len();
            p50s.push(percentile(&lat, 0.5));
            p95s.push(percentile(&lat, 0.95));
        }
        let (p50, p95) = (median(p50s), median(p95s));
        let sustainable = (opts.workers as f64 / (opts.fps_target * p95)).floor();
        report.trackers.push(TrackerBench {
            tracker: tracker.name(),
            p50_ms: p50 * 1e3,
            p95_ms: p95 * 1e3,
            frames_per_repetition: frames,
            sustainable_streams: if sustainable.is_finite() { sustainable as u64 } else { u64::MAX },
        });
    }
    let mean_mv = report.trackers.iter().find(|t| t.tracker == "mean-mv");
    let learned = report.trackers.iter().find(|t| t.tracker != "mean-mv");
    if let (Some(m), Some(b)) = (mean_mv, learned) {
        if b.sustainable_streams > 0 {
            report.stream_ratio = Some(m.sustainable_streams as f64 / b.sustainable_streams as f64);
        }
    }
    Ok(report)
}
