//! Run configuration: a TOML file with one table per stage. Every key is
//! optional and unknown keys are rejected by name.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mvtrack_core::bafe::BafeConfig;
use mvtrack_core::codec_features::FrameDims;
use mvtrack_core::mini_encoder::{DatasetConfig, EncodeConfig};
use mvtrack_core::temporal_model::{LossConfig, ModelDims, TrainConfig, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub synth: SynthSection,
    pub bafe: BafeSection,
    pub model: ModelSection,
    pub loss: LossSection,
    pub train: TrainSection,
    pub track: TrackSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub width: u32,
    pub height: u32,
    pub gop_size: usize,
    pub gop_count: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    pub object_min: u32,
    pub object_max: u32,
    pub max_speed: f64,
    pub integer_velocity: bool,
    pub global_pan: bool,
    pub allow_exit: bool,
    pub edge_margin: u32,
    pub quant_scale: u16,
    pub search_range: u32,
    pub mv_noise_sigma: f64,
    pub residual_noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BafeSection {
    pub mv_grid: usize,
    pub dct_grid: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// `mv`, `dct` or `mv+dct`.
    pub variant: String,
    pub box_embed: usize,
    pub fused: usize,
    pub hidden: usize,
    pub head_hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub lambda_box: f64,
    pub lambda_giou: f64,
    pub lambda_cls: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub slots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackSection {
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub workers: usize,
    pub streams: usize,
    pub fps_target: f64,
    pub repetitions: usize,
    /// Boxes per GOP when no initial boxes are given.
    pub boxes: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            synth: SynthSection::default(),
            bafe: BafeSection::default(),
            model: ModelSection::default(),
            loss: LossSection::default(),
            train: TrainSection::default(),
            track: TrackSection::default(),
            bench: BenchSection::default(),
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            width: d.dims.width(),
            height: d.dims.height(),
            gop_size: d.gop_size,
            gop_count: d.gop_count,
            objects_min: d.objects_min,
            objects_max: d.objects_max,
            object_min: d.object_size.0,
            object_max: d.object_size.1,
            max_speed: d.max_speed,
            integer_velocity: d.integer_velocity,
            global_pan: d.global_pan,
            allow_exit: d.allow_exit,
            edge_margin: d.edge_margin,
            quant_scale: d.encode.quant_scale,
            search_range: d.encode.search_range,
            mv_noise_sigma: d.encode.mv_noise_sigma,
            residual_noise_sigma: d.encode.residual_noise_sigma,
        }
    }
}

impl Default for BafeSection {
    fn default() -> Self {
        let b = BafeConfig::default();
        Self {
            mv_grid: b.mv_grid,
            dct_grid: b.dct_grid,
            margin: b.margin,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelDims::for_bafe(&BafeConfig::default());
        Self {
            variant: Variant::MvDct.name().to_string(),
            box_embed: d.box_embed,
            fused: d.fused,
            hidden: d.hidden,
            head_hidden: d.head_hidden,
        }
    }
}

impl Default for LossSection {
    fn default() -> Self {
        let l = LossConfig::default();
        Self {
            lambda_box: l.lambda_box,
            lambda_giou: l.lambda_giou,
            lambda_cls: l.lambda_cls,
            alpha: l.alpha,
            gamma: l.gamma,
            slots: l.slots,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            lr: t.lr,
            batch_size: t.batch_size,
        }
    }
}

impl Default for TrackSection {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            workers: 1,
            streams: 1,
            fps_target: 30.0,
            repetitions: 5,
            boxes: 10,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow::anyhow!("config: {}", e.message().trim()).context(describe_span(text, e.span())))
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("in config {}", p.display()))
            }
        }
    }

    /// SHA-256 of the fully resolved configuration.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(canonical.as_bytes()))
    }

    pub fn dataset(&self) -> Result<DatasetConfig> {
        let s = &self.synth;
        let dims = FrameDims::new(s.width, s.height)
            .with_context(|| format!("synth.width/synth.height ({}x{})", s.width, s.height))?;
        if s.gop_size < 2 {
            bail!("synth.gop_size must be >= 2 (got {})", s.gop_size);
        }
        let cfg = DatasetConfig {
            dims,
            gop_size: s.gop_size,
            gop_count: s.gop_count,
            objects_min: s.objects_min,
            objects_max: s.objects_max,
            object_size: (s.object_min, s.object_max),
            max_speed: s.max_speed,
            integer_velocity: s.integer_velocity,
            global_pan: s.global_pan,
            allow_exit: s.allow_exit,
            edge_margin: s.edge_margin,
            encode: EncodeConfig {
                quant_scale: s.quant_scale,
                search_range: s.search_range,
                mv_noise_sigma: s.mv_noise_sigma,
                residual_noise_sigma: s.residual_noise_sigma,
            },
            seed: self.seed,
        };
        cfg.validate().context("synth section")?;
        Ok(cfg)
    }

    pub fn bafe(&self) -> Result<BafeConfig> {
        let b = BafeConfig {
            mv_grid: self.bafe.mv_grid,
            dct_grid: self.bafe.dct_grid,
            margin: self.bafe.margin,
        };
        b.validate().context("bafe section")?;
        Ok(b)
    }

    pub fn variant(&self) -> Result<Variant> {
        self.model.variant.parse().context("model.variant")
    }

    pub fn dims(&self) -> Result<ModelDims> {
        let m = &self.model;
        let d = ModelDims {
            box_embed: m.box_embed,
            fused: m.fused,
            hidden: m.hidden,
            head_hidden: m.head_hidden,
            ..ModelDims::for_bafe(&self.bafe()?)
        };
        d.validate().context("model section")?;
        Ok(d)
    }

    pub fn loss(&self) -> LossConfig {
        let l = &self.loss;
        LossConfig {
            lambda_box: l.lambda_box,
            lambda_giou: l.lambda_giou,
            lambda_cls: l.lambda_cls,
            alpha: l.alpha,
            gamma: l.gamma,
            slots: l.slots,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            lr: self.train.lr,
            batch_size: self.train.batch_size,
            seed: self.seed,
            loss: self.loss(),
            ..TrainConfig::default()
        }
    }
}

fn describe_span(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!("at line {line}")
        }
        None => "in config".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_hash_is_stable() {
        let c = Config::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(Config::parse(&text).unwrap(), c);
        assert_eq!(c.hash(), Config::parse("").unwrap().hash());
        let other = Config::parse("seed = 3").unwrap();
        assert_ne!(other.hash(), c.hash());
    }

    #[test]
    fn unknown_key_is_named() {
        let e = Config::parse("[synth]\ngop_sise = 4\n").unwrap_err();
        assert!(format!("{e:#}").contains("gop_sise"), "{e:#}");
    }

    #[test]
    fn short_gop_rejected() {
        let c = Config::parse("[synth]\ngop_size = 1\n").unwrap();
        let e = c.dataset().unwrap_err();
        assert!(format!("{e:#}").contains("gop_size"), "{e:#}");
    }
}
