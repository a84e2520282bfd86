//! Block-matching encoder and synthetic sequence generator.
//!
//! Produces [`Gop`]s in the same data model as the bitstream parser, with
//! exact ground truth, for training and as a correctness oracle.

mod dataset;
pub mod dct;
mod motion;
mod residual;
mod synth;

pub use dataset::{generate_dataset, DatasetConfig, SyntheticGop};
pub use dct::{dct8x8, idct8x8, ZIGZAG};
pub use motion::{estimate_motion, motion_compensate};
pub use residual::compute_residual;
pub use synth::{synth_sequence, texture, GroundTruth, SynthObject, SynthSpec};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::codec_features::{FeatureError, FrameDims, Gop, MotionVector, PFrame};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("frame dimensions differ")]
    DimsMismatch,
    #[error("sample count {found} does not match {expected}")]
    SampleCount { expected: usize, found: usize },
    #[error("search range must be >= 1, got {0}")]
    InvalidRange(u32),
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

pub type Result<T, E = EncoderError> = std::result::Result<T, E>;

/// 8-bit luminance plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LumaFrame {
    dims: FrameDims,
    samples: Vec<u8>,
}

impl LumaFrame {
    pub fn new(dims: FrameDims, samples: Vec<u8>) -> Result<Self> {
        if samples.len() != dims.pixel_count() {
            return Err(EncoderError::SampleCount {
                expected: dims.pixel_count(),
                found: samples.len(),
            });
        }
        Ok(Self { dims, samples })
    }

    pub fn filled(dims: FrameDims, value: u8) -> Self {
        Self {
            dims,
            samples: vec![value; dims.pixel_count()],
        }
    }

    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.dims.width() as usize + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        let w = self.dims.width() as usize;
        self.samples[y * w + x] = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeConfig {
    pub quant_scale: u16,
    pub search_range: u32,
    /// Half-pel standard deviation of the rounded Gaussian added to each MV component.
    pub mv_noise_sigma: f64,
    /// Pixel standard deviation of the Gaussian added to residual samples.
    pub residual_noise_sigma: f64,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            quant_scale: 4,
            search_range: 8,
            mv_noise_sigma: 0.0,
            residual_noise_sigma: 0.0,
        }
    }
}

/// Encodes frames 1.. as P-frames predicted from their predecessor.
///
/// MV noise is added after the search and clamped to the declared range
/// (4R half-pel). The residual is taken against the compensation with the
/// vectors actually emitted, so MV errors show up in the residual.
pub fn encode_gop<R: Rng + ?Sized>(frames: &[LumaFrame], cfg: &EncodeConfig, rng: &mut R) -> Result<Gop> {
    if frames.len() < 2 {
        return Err(EncoderError::TooFewFrames(frames.len()));
    }
    let dims = frames[0].dims();
    if frames.iter().any(|f| f.dims() != dims) {
        return Err(EncoderError::DimsMismatch);
    }
    if cfg.quant_scale == 0 {
        return Err(FeatureError::ZeroQuant.into());
    }
    let mv_noise = gaussian(cfg.mv_noise_sigma)?;
    let res_noise = gaussian(cfg.residual_noise_sigma)?;
    let limit = 4 * cfg.search_range as i32;
    let mut pframes = Vec::with_capacity(frames.len() - 1);
    for pair in frames.windows(2) {
        let (reference, cur) = (&pair[0], &pair[1]);
        let mut mv = estimate_motion(cur, reference, cfg.search_range)?;
        if let Some(dist) = mv_noise {
            for v in mv.vectors_mut() {
                let jitter = |c: i16, rng: &mut R| -> i16 {
                    let n = dist.sample(rng).round() as i32;
                    (i32::from(c) + n).clamp(-limit, limit) as i16
                };
                *v = MotionVector::new(jitter(v.dx, rng), jitter(v.dy, rng));
            }
        }
        let residual = match res_noise {
            Some(dist) => residual::residual_with(cur, reference, &mv, cfg.quant_scale, |_| dist.sample(rng))?,
            None => compute_residual(cur, reference, &mv, cfg.quant_scale)?,
        };
        pframes.push(PFrame::new(mv, residual)?);
    }
    Ok(Gop::new(dims, pframes)?)
}

fn gaussian(sigma: f64) -> Result<Option<Normal<f64>>> {
    if sigma == 0.0 {
        return Ok(None);
    }
    Normal::new(0.0, sigma)
        .map(Some)
        .map_err(|e| EncoderError::InvalidSpec(format!("noise sigma {sigma}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn textured(dims: FrameDims, shift: i64) -> LumaFrame {
        let s = (0..dims.height() as i64)
            .flat_map(|y| (0..dims.width() as i64).map(move |x| texture(3, x - shift, y)))
            .collect();
        LumaFrame::new(dims, s).unwrap()
    }

    #[test]
    fn static_frames_encode_to_nothing() {
        let dims = FrameDims::new(48, 32).unwrap();
        let f = textured(dims, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gop = encode_gop(&[f.clone(), f.clone(), f], &EncodeConfig::default(), &mut rng).unwrap();
        assert_eq!(gop.gop_size(), 3);
        for pf in gop.pframes() {
            assert!(pf.mv().vectors().iter().all(|v| *v == MotionVector::ZERO));
            assert!(pf.residual_y().is_empty());
        }
    }

    #[test]
    fn global_shift_gives_constant_field() {
        let dims = FrameDims::new(64, 48).unwrap();
        let frames: Vec<_> = (0..4).map(|n| textured(dims, 2 * n)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gop = encode_gop(&frames, &EncodeConfig::default(), &mut rng).unwrap();
        for pf in gop.pframes() {
            // the leftmost column sees new content; all other macroblocks are exact
            for row in 0..dims.mb_rows() {
                for col in 1..dims.mb_cols() {
                    assert_eq!(pf.mv().get(col, row), MotionVector::new(4, 0));
                }
            }
            for ((_, c), _) in pf.residual_y().blocks() {
                assert!(c < 2, "interior residual at block column {c}");
            }
        }
    }

    #[test]
    fn mv_noise_perturbs_most_vectors() {
        let dims = FrameDims::new(256, 256).unwrap();
        let frames = vec![textured(dims, 0), textured(dims, 0)];
        let cfg = EncodeConfig {
            mv_noise_sigma: 1.0,
            ..EncodeConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gop = encode_gop(&frames, &cfg, &mut rng).unwrap();
        let pf = &gop.pframes()[0];
        let moved = pf.mv().vectors().iter().filter(|v| **v != MotionVector::ZERO).count();
        assert!(moved * 2 >= pf.mv().vectors().len());
        assert!(!pf.residual_y().is_empty());
    }

    #[test]
    fn too_few_frames() {
        let dims = FrameDims::new(16, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(encode_gop(&[LumaFrame::filled(dims, 0)], &EncodeConfig::default(), &mut rng).is_err());
    }
}
