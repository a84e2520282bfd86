//! Command implementations behind the `mvtrack` binary.

pub mod bench;
pub mod config;
pub mod pipeline;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use mvtrack_core::codec_features::{read_cff, write_cff, Gop};
use mvtrack_core::eval::{ap_at_50, load_mot, write_mot, MotFrames};
use mvtrack_core::mini_encoder::generate_dataset;
use mvtrack_core::mpeg4_parser::parse_stream;
use mvtrack_core::temporal_model::{build_sample, init_params, train, ModelError, ModelParams};
use mvtrack_core::trackers::BafeTrackConfig;

use bench::{default_boxes, run_bench, BenchOptions};
use config::Config;
use pipeline::{gt_per_gop, init_boxes, pframe_sets, result_rows, synthetic_gt_rows, track_all, Tracker};

#[derive(Debug, Parser)]
#[command(name = "mvtrack", version, about = "Compressed-domain object tracking from motion vectors and DCT residuals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrackerArg {
    MeanMv,
    Bafe,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: CFF plus MOT ground truth.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CFF path.
        #[arg(long)]
        out: PathBuf,
        /// Output MOT ground-truth path.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse an MPEG-4 Part 2 elementary stream into a CFF.
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the refinement model on a CFF with MOT ground truth.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        cff: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Output checkpoint path; a JSON loss log is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// `mv`, `dct` or `mv+dct`.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Propagate initial boxes (rows at each GOP's first frame) through a CFF.
    Track {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        cff: PathBuf,
        /// MOT file providing the initial boxes.
        #[arg(long)]
        init: PathBuf,
        #[arg(long, value_enum, default_value = "mean-mv")]
        tracker: TrackerArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// MOT results output.
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines per-frame diagnostics.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// mAP@0.5 of tracking results against ground truth over P-frames.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        /// CFF the results were produced from (frame size and GOP layout).
        #[arg(long)]
        cff: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        results: PathBuf,
        /// JSON report path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a CFF as several streams and measure per-frame latency.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        cff: PathBuf,
        /// Learned-tracker checkpoint; only Mean-MV is measured without it.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        streams: Option<usize>,
        #[arg(long)]
        fps: Option<f64>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        boxes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit status for an error: 2 for internal failures, 1 for bad input.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    let internal = e
        .chain()
        .any(|c| matches!(c.downcast_ref::<ModelError>(), Some(ModelError::NonFinite { .. })));
    if internal {
        2
    } else {
        1
    }
}

fn read_gops(path: &Path) -> Result<Vec<Gop>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_cff(std::io::BufReader::new(f)).with_context(|| format!("reading CFF {}", path.display()))
}

fn write_gops(path: &Path, gops: &[Gop]) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    write_cff(gops, &mut w).with_context(|| format!("writing CFF {}", path.display()))?;
    w.flush()?;
    Ok(())
}

fn frame_size(gops: &[Gop]) -> Result<(f64, f64)> {
    let d = gops.first().map(Gop::dims).context("CFF holds no GOPs")?;
    Ok((f64::from(d.width()), f64::from(d.height())))
}

fn read_mot(path: &Path, gops: &[Gop], ground_truth: bool) -> Result<MotFrames> {
    let (w, h) = frame_size(gops)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_mot(&text, w, h, ground_truth).with_context(|| format!("parsing MOT file {}", path.display()))
}

fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    let f = fs::File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    ModelParams::read_checkpoint(std::io::BufReader::new(f)).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn with_seed(mut cfg: Config, seed: Option<u64>) -> Config {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out, gt, seed } => cmd_synth(&with_seed(Config::load(config.as_deref())?, seed), &out, &gt),
        Command::Extract { input, out } => cmd_extract(&input, &out),
        Command::Train {
            config,
            cff,
            gt,
            out,
            epochs,
            seed,
            variant,
        } => {
            let mut cfg = with_seed(Config::load(config.as_deref())?, seed);
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(v) = variant {
                cfg.model.variant = v;
            }
            cmd_train(&cfg, &cff, &gt, &out)
        }
        Command::Track {
            config,
            cff,
            init,
            tracker,
            checkpoint,
            out,
            log,
        } => cmd_track(&Config::load(config.as_deref())?, &cff, &init, tracker, checkpoint.as_deref(), &out, log.as_deref()),
        Command::Eval {
            config,
            cff,
            gt,
            results,
            out,
        } => cmd_eval(&Config::load(config.as_deref())?, &cff, &gt, &results, out.as_deref()),
        Command::Bench {
            config,
            cff,
            checkpoint,
            workers,
            streams,
            fps,
            repetitions,
            boxes,
            out,
        } => {
            let mut cfg = Config::load(config.as_deref())?;
            let b = &mut cfg.bench;
            b.workers = workers.unwrap_or(b.workers);
            b.streams = streams.unwrap_or(b.streams);
            b.fps_target = fps.unwrap_or(b.fps_target);
            b.repetitions = repetitions.unwrap_or(b.repetitions);
            b.boxes = boxes.unwrap_or(b.boxes);
            cmd_bench(&cfg, &cff, checkpoint.as_deref(), out.as_deref())
        }
    }
}

pub fn cmd_synth(cfg: &Config, out: &Path, gt: &Path) -> Result<()> {
    let ds = cfg.dataset()?;
    let data = generate_dataset(&ds).context("generating dataset")?;
    let gops: Vec<Gop> = data.iter().map(|s| s.gop.clone()).collect();
    write_gops(out, &gops)?;
    let rows = synthetic_gt_rows(&data);
    let (w, h) = (f64::from(ds.dims.width()), f64::from(ds.dims.height()));
    fs::write(gt, write_mot(&rows, w, h)).with_context(|| format!("writing {}", gt.display()))?;
    let row_count: usize = rows.values().map(Vec::len).sum();
    println!(
        "synth: {} GOPs of {} frames, {}x{}, {} GT rows, mv_noise_sigma {}, residual_noise_sigma {}, seed {}, config {}",
        gops.len(),
        ds.gop_size,
        ds.dims.width(),
        ds.dims.height(),
        row_count,
        ds.encode.mv_noise_sigma,
        ds.encode.residual_noise_sigma,
        cfg.seed,
        cfg.hash()
    );
    Ok(())
}

pub fn cmd_extract(input: &Path, out: &Path) -> Result<()> {
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let gops = parse_stream(&bytes).with_context(|| format!("parsing {}", input.display()))?;
    for (i, g) in gops.iter().enumerate() {
        let mvs: usize = g.pframes().iter().map(|p| p.mv().vectors().iter().filter(|v| v.dx != 0 || v.dy != 0).count()).sum();
        let blocks: usize = g.pframes().iter().map(|p| p.residual_y().nonzero_block_count()).sum();
        log::info!("GOP {i}: {} frames, {mvs} nonzero MVs, {blocks} residual blocks", g.gop_size());
    }
    write_gops(out, &gops)?;
    println!("extract: {} GOPs written to {}", gops.len(), out.display());
    Ok(())
}

pub fn cmd_train(cfg: &Config, cff: &Path, gt: &Path, out: &Path) -> Result<()> {
    let gops = read_gops(cff)?;
    let rows = read_mot(gt, &gops, true)?;
    let bafe = cfg.bafe()?;
    let variant = cfg.variant()?;
    let samples = gops
        .iter()
        .zip(gt_per_gop(&gops, &rows))
        .map(|(g, t)| build_sample(g, &t, &bafe))
        .collect::<Result<Vec<_>, _>>()
        .context("building training samples")?;
    let params = init_params(cfg.dims()?, variant, cfg.seed)?;
    let tc = cfg.train();
    log::info!("training {} parameters on {} GOPs for {} epochs", params.param_count(), samples.len(), tc.epochs);
    let (params, losses) = train(params, &samples, &tc).context("training")?;
    let f = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = BufWriter::new(f);
    params.write_checkpoint(&mut w)?;
    w.flush()?;
    let log_path = out.with_extension("json");
    write_json(
        Some(&log_path),
        &json!({
            "config_hash": cfg.hash(),
            "seed": cfg.seed,
            "variant": variant.name(),
            "param_count": params.param_count(),
            "epochs": tc.epochs,
            "gops": samples.len(),
            "epoch_loss": losses,
        }),
    )?;
    match (losses.first(), losses.last()) {
        (Some(a), Some(b)) => println!("train: loss {a:.5} -> {b:.5} over {} epochs, checkpoint {}", losses.len(), out.display()),
        _ => println!("train: no epochs run, checkpoint {}", out.display()),
    }
    Ok(())
}

fn bafe_tracker(cfg: &Config, checkpoint: &Path) -> Result<Tracker> {
    let params = read_checkpoint(checkpoint)?;
    let tc = BafeTrackConfig {
        bafe: cfg.bafe()?,
        variant: params.variant,
        threshold: cfg.track.threshold,
    };
    Ok(Tracker::Bafe {
        params: Box::new(params),
        cfg: tc,
    })
}

pub fn cmd_track(
    cfg: &Config,
    cff: &Path,
    init: &Path,
    tracker: TrackerArg,
    checkpoint: Option<&Path>,
    out: &Path,
    log_path: Option<&Path>,
) -> Result<()> {
    let gops = read_gops(cff)?;
    let rows = read_mot(init, &gops, false)?;
    let tracker = match (tracker, checkpoint) {
        (TrackerArg::MeanMv, _) => Tracker::MeanMv,
        (TrackerArg::Bafe, Some(c)) => bafe_tracker(cfg, c)?,
        (TrackerArg::Bafe, None) => bail!("--tracker bafe needs --checkpoint"),
    };
    let tracks = track_all(&gops, &init_boxes(&gops, &rows), &tracker)?;
    let results = result_rows(&gops, &tracks);
    let (w, h) = frame_size(&gops)?;
    fs::write(out, write_mot(&results, w, h)).with_context(|| format!("writing {}", out.display()))?;
    if let Some(p) = log_path {
        let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        let mut lw = BufWriter::new(f);
        writeln!(lw, "{}", json!({"config_hash": cfg.hash(), "seed": cfg.seed, "tracker": tracker.name()}))?;
        for (start, gop_tracks) in pipeline::gop_starts(&gops).iter().zip(&tracks) {
            for (id, t) in gop_tracks {
                for pt in t.points() {
                    let b = pt.bbox;
                    writeln!(
                        lw,
                        "{}",
                        json!({
                            "frame": start + pt.frame as u32,
                            "proposal": id,
                            "box": [b.cx, b.cy, b.w, b.h],
                            "objectness": pt.objectness,
                            "active": pt.active,
                        })
                    )?;
                }
            }
        }
        lw.flush()?;
    }
    let count: usize = results.values().map(Vec::len).sum();
    println!("track: {} over {} GOPs, {count} result rows", tracker.name(), gops.len());
    Ok(())
}

pub fn cmd_eval(cfg: &Config, cff: &Path, gt: &Path, results: &Path, out: Option<&Path>) -> Result<()> {
    let gops = read_gops(cff)?;
    let truth = read_mot(gt, &gops, true)?;
    let res = read_mot(results, &gops, false)?;
    let (preds, gt_boxes) = pframe_sets(&gops, &res, &truth);
    let s = ap_at_50(&preds, &gt_boxes);
    let name = results.file_stem().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    write_json(
        out,
        &json!({
            "config_hash": cfg.hash(),
            "seed": cfg.seed,
            "sequences": [{
                "name": name,
                "ap50": s.ap,
                "gt_boxes": s.gt_count,
                "predictions": s.pred_count,
                "true_positives": s.true_positives,
            }],
            "map50": s.ap,
            "no_ground_truth": s.ap.is_none(),
        }),
    )
}

pub fn cmd_bench(cfg: &Config, cff: &Path, checkpoint: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let gops = read_gops(cff)?;
    let mut trackers = vec![Tracker::MeanMv];
    if let Some(c) = checkpoint {
        trackers.push(bafe_tracker(cfg, c)?);
    }
    let b = &cfg.bench;
    if b.fps_target <= 0.0 {
        bail!("bench.fps_target must be positive");
    }
    let opts = BenchOptions {
        workers: b.workers.max(1),
        streams: b.streams,
        fps_target: b.fps_target,
        repetitions: b.repetitions.max(1),
    };
    let report = run_bench(&gops, &default_boxes(b.boxes), &trackers, &opts, &cfg.hash(), cfg.seed)?;
    write_json(out, &serde_json::to_value(&report)?)?;
    Ok(())
}
