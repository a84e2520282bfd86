use crate::codec_features::{BoundingBox, FrameDims};

use super::{EncoderError, LumaFrame, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthObject {
    /// Box at frame 0. Must lie inside the frame.
    pub init: BoundingBox,
    /// Pixels per frame.
    pub velocity: (f64, f64),
    pub texture_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub dims: FrameDims,
    pub gop_size: usize,
    pub objects: Vec<SynthObject>,
    pub background_seed: u64,
    /// Pixels per frame. Non-zero values pan the whole background.
    pub background_velocity: (f64, f64),
    /// Encoder search range in pixels; bounds every velocity.
    pub search_range: u32,
    /// Half-pel standard deviation, applied by the encoder.
    pub mv_noise_sigma: f64,
    pub residual_noise_sigma: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gop_size < 2 {
            return Err(EncoderError::InvalidSpec(format!("gop_size {} < 2", self.gop_size)));
        }
        if self.search_range == 0 {
            return Err(EncoderError::InvalidRange(0));
        }
        if !(self.mv_noise_sigma >= 0.0 && self.residual_noise_sigma >= 0.0) {
            return Err(EncoderError::InvalidSpec("noise sigmas must be >= 0".into()));
        }
        let r = f64::from(self.search_range);
        let in_range = |(vx, vy): (f64, f64)| vx.is_finite() && vy.is_finite() && vx.abs() <= r && vy.abs() <= r;
        if !in_range(self.background_velocity) {
            return Err(EncoderError::InvalidSpec(format!(
                "background velocity {:?} exceeds search range {r}",
                self.background_velocity
            )));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !in_range(o.velocity) {
                return Err(EncoderError::InvalidSpec(format!(
                    "object {i} velocity {:?} exceeds search range {r}",
                    o.velocity
                )));
            }
            let b = o.init;
            let eps = 1e-9;
            if !b.is_valid() || b.x0() < -eps || b.y0() < -eps || b.x1() > 1.0 + eps || b.y1() > 1.0 + eps {
                return Err(EncoderError::InvalidSpec(format!("object {i} box {b:?} not inside frame")));
            }
        }
        Ok(())
    }
}

/// Ground truth per frame, per object. `None` once the object has left the frame.
pub type GroundTruth = Vec<Vec<Option<BoundingBox>>>;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash3(seed: u64, x: i64, y: i64) -> u64 {
    mix(mix(seed ^ mix(x as u64)) ^ (y as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Procedural texture on the infinite integer plane: 4x4 coarse cells plus
/// per-pixel detail.
pub fn texture(seed: u64, x: i64, y: i64) -> u8 {
    let coarse = hash3(seed, x.div_euclid(4), y.div_euclid(4)) % 160;
    let fine = hash3(seed ^ 0x5555_AAAA_5555_AAAA, x, y) % 96;
    (coarse + fine) as u8
}

/// Pixel rectangle (x0, y0, w, h) of an object at frame `n`.
fn object_rect(o: &SynthObject, dims: FrameDims, n: usize) -> (f64, f64, f64, f64) {
    let (wf, hf) = (f64::from(dims.width()), f64::from(dims.height()));
    let (x0, y0, w, h) = o.init.to_pixels_tlwh(wf, hf);
    (x0 + o.velocity.0 * n as f64, y0 + o.velocity.1 * n as f64, w, h)
}

/// Renders the sequence and its exact ground truth.
pub fn synth_sequence(spec: &SynthSpec) -> Result<(Vec<LumaFrame>, GroundTruth)> {
    spec.validate()?;
    let dims = spec.dims;
    let (wf, hf) = (f64::from(dims.width()), f64::from(dims.height()));
    let mut frames = Vec::with_capacity(spec.gop_size);
    let mut gt = Vec::with_capacity(spec.gop_size);
    for n in 0..spec.gop_size {
        let bgx = spec.background_velocity.0 * n as f64;
        let bgy = spec.background_velocity.1 * n as f64;
        let rects: Vec<_> = spec.objects.iter().map(|o| object_rect(o, dims, n)).collect();
        let mut samples = Vec::with_capacity(dims.pixel_count());
        for y in 0..dims.height() {
            let py = f64::from(y) + 0.5;
            for x in 0..dims.width() {
                let px = f64::from(x) + 0.5;
                let mut v = texture(spec.background_seed, (px - bgx).floor() as i64, (py - bgy).floor() as i64);
                for (o, &(x0, y0, w, h)) in spec.objects.iter().zip(&rects) {
                    if px >= x0 && px < x0 + w && py >= y0 && py < y0 + h {
                        v = texture(o.texture_seed, (px - x0).floor() as i64, (py - y0).floor() as i64);
                    }
                }
                samples.push(v);
            }
        }
        frames.push(LumaFrame::new(dims, samples)?);
        gt.push(
            spec.objects
                .iter()
                .map(|o| {
                    let b = BoundingBox {
                        cx: o.init.cx + o.velocity.0 * n as f64 / wf,
                        cy: o.init.cy + o.velocity.1 * n as f64 / hf,
                        ..o.init
                    };
                    b.clip_to_unit()
                })
                .collect(),
        );
    }
    Ok((frames, gt))
}
