use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codec_features::{BoundingBox, FrameDims, Gop};

use super::{encode_gop, synth_sequence, EncodeConfig, EncoderError, GroundTruth, Result, SynthObject, SynthSpec};

/// Random scene parameters for a batch of synthetic GOPs.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub dims: FrameDims,
    pub gop_size: usize,
    pub gop_count: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    /// Object side lengths in pixels, inclusive.
    pub object_size: (u32, u32),
    /// Largest per-axis object speed in pixels per frame.
    pub max_speed: f64,
    /// Round velocities to whole pixels.
    pub integer_velocity: bool,
    /// Whole-scene translation: background and objects share one velocity.
    pub global_pan: bool,
    /// Allow objects to move out of the frame during the GOP.
    pub allow_exit: bool,
    /// Minimum distance in pixels from the frame edge while an object must stay inside.
    pub edge_margin: u32,
    pub encode: EncodeConfig,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            dims: FrameDims::new(160, 128).expect("static dims"),
            gop_size: 6,
            gop_count: 200,
            objects_min: 1,
            objects_max: 4,
            object_size: (16, 40),
            max_speed: 4.0,
            integer_velocity: false,
            global_pan: false,
            allow_exit: true,
            edge_margin: 0,
            encode: EncodeConfig::default(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EncoderError::InvalidSpec(m));
        if self.gop_size < 2 {
            return bad(format!("gop_size {} < 2", self.gop_size));
        }
        if self.objects_min > self.objects_max {
            return bad("objects_min > objects_max".into());
        }
        let (lo, hi) = self.object_size;
        let room = self.dims.width().min(self.dims.height()).saturating_sub(2 * self.edge_margin);
        if lo == 0 || lo > hi || hi > room {
            return bad(format!("object_size {:?} does not fit the frame", self.object_size));
        }
        if !(self.max_speed >= 0.0 && self.max_speed <= f64::from(self.encode.search_range)) {
            return bad(format!(
                "max_speed {} outside [0, search_range {}]",
                self.max_speed, self.encode.search_range
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticGop {
    pub spec: SynthSpec,
    pub gop: Gop,
    pub gt: GroundTruth,
}

/// Builds `gop_count` independent GOPs. GOP `g` draws from stream `g` of a
/// ChaCha8 generator seeded with `cfg.seed`, so output does not depend on
/// thread scheduling.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Vec<SyntheticGop>> {
    cfg.validate()?;
    (0..cfg.gop_count)
        .into_par_iter()
        .map(|g| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(g as u64);
            let spec = random_spec(cfg, &mut rng);
            let (frames, gt) = synth_sequence(&spec)?;
            let gop = encode_gop(&frames, &cfg.encode, &mut rng)?;
            Ok(SyntheticGop { spec, gop, gt })
        })
        .collect()
}

fn random_spec<R: Rng>(cfg: &DatasetConfig, rng: &mut R) -> SynthSpec {
    let (wf, hf) = (f64::from(cfg.dims.width()), f64::from(cfg.dims.height()));
    let span = (cfg.gop_size - 1) as f64;
    let speed = |rng: &mut R| {
        let v = rng.random_range(-cfg.max_speed..=cfg.max_speed);
        if cfg.integer_velocity {
            v.round()
        } else {
            v
        }
    };
    let pan = if cfg.global_pan {
        (speed(rng), speed(rng))
    } else {
        (0.0, 0.0)
    };
    let count = rng.random_range(cfg.objects_min..=cfg.objects_max);
    let mut objects = Vec::with_capacity(count);
    for _ in 0..count {
        let w = f64::from(rng.random_range(cfg.object_size.0..=cfg.object_size.1));
        let h = f64::from(rng.random_range(cfg.object_size.0..=cfg.object_size.1));
        let mut v = if cfg.global_pan { pan } else { (speed(rng), speed(rng)) };
        let m = f64::from(cfg.edge_margin);
        let place = |len: f64, frame: f64, vel: &mut f64, rng: &mut R| -> f64 {
            let (mut lo, mut hi) = (0.0, frame - len);
            if !cfg.allow_exit {
                lo = m + (-*vel * span).max(0.0);
                hi = frame - len - m - (*vel * span).max(0.0);
                if lo > hi {
                    *vel = 0.0;
                    lo = m;
                    hi = frame - len - m;
                }
            }
            rng.random_range(lo..=hi).floor().max(lo.ceil()).min(hi)
        };
        let x0 = place(w, wf, &mut v.0, rng);
        let y0 = place(h, hf, &mut v.1, rng);
        objects.push(SynthObject {
            init: BoundingBox::from_pixels_tlwh(x0, y0, w, h, wf, hf),
            velocity: v,
            texture_seed: rng.random(),
        });
    }
    SynthSpec {
        dims: cfg.dims,
        gop_size: cfg.gop_size,
        objects,
        background_seed: rng.random(),
        background_velocity: pan,
        search_range: cfg.encode.search_range,
        mv_noise_sigma: cfg.encode.mv_noise_sigma,
        residual_noise_sigma: cfg.encode.residual_noise_sigma,
    }
}
