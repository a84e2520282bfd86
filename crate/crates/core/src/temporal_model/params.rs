use std::io::{Read, Write};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bafe::BafeConfig;

use super::{ModelError, Result};

pub const OUTPUT_DIM: usize = 5;
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MVTK";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Which feature channels reach the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Mv,
    Dct,
    MvDct,
}

impl Variant {
    pub fn uses_mv(self) -> bool {
        self != Variant::Dct
    }

    pub fn uses_dct(self) -> bool {
        self != Variant::Mv
    }

    /// Bit 0: MV channels, bit 1: DCT channels.
    pub fn mask(self) -> u8 {
        u8::from(self.uses_mv()) | (u8::from(self.uses_dct()) << 1)
    }

    pub fn from_mask(m: u8) -> Option<Self> {
        match m {
            1 => Some(Variant::Mv),
            2 => Some(Variant::Dct),
            3 => Some(Variant::MvDct),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Mv => "mv",
            Variant::Dct => "dct",
            Variant::MvDct => "mv+dct",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mv" => Ok(Variant::Mv),
            "dct" => Ok(Variant::Dct),
            "mv+dct" | "mv_dct" | "mvdct" => Ok(Variant::MvDct),
            _ => Err(ModelError::InvalidDims(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelDims {
    pub mv_len: usize,
    pub dct_len: usize,
    pub box_embed: usize,
    pub fused: usize,
    /// LSTM hidden size per direction.
    pub hidden: usize,
    pub head_hidden: usize,
}

impl ModelDims {
    /// Default widths for a BAFE configuration.
    pub fn for_bafe(cfg: &BafeConfig) -> Self {
        Self {
            mv_len: cfg.mv_len(),
            dct_len: cfg.dct_len(),
            box_embed: 32,
            fused: 96,
            hidden: 64,
            head_hidden: 64,
        }
    }

    /// Length of one flattened feature vector (MV, DCT, box geometry).
    pub fn input_dim(&self) -> usize {
        self.mv_len + self.dct_len + 4
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.box_embed, self.fused, self.hidden, self.head_hidden];
        if all.contains(&0) || self.mv_len + self.dct_len == 0 {
            return Err(ModelError::InvalidDims(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn matches(&self, cfg: &BafeConfig) -> bool {
        self.mv_len == cfg.mv_len() && self.dct_len == cfg.dct_len()
    }
}

/// Offsets of every tensor in the flat parameter vector. Matrices are row
/// major with one row per output.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub box_w1: Range<usize>,
    pub box_b1: Range<usize>,
    pub box_w2: Range<usize>,
    pub box_b2: Range<usize>,
    pub fuse_w: Range<usize>,
    pub fuse_b: Range<usize>,
    pub lstm: [LstmLayout; 2],
    pub head_w1: Range<usize>,
    pub head_b1: Range<usize>,
    pub head_w2: Range<usize>,
    pub head_b2: Range<usize>,
    pub total: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LstmLayout {
    /// Gate order: input, forget, cell, output.
    pub wx: Range<usize>,
    pub wh: Range<usize>,
    pub b: Range<usize>,
}

impl Layout {
    pub fn new(d: &ModelDims) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let box_w1 = take(d.box_embed * 4);
        let box_b1 = take(d.box_embed);
        let box_w2 = take(d.box_embed * d.box_embed);
        let box_b2 = take(d.box_embed);
        let fuse_in = d.mv_len + d.dct_len + d.box_embed;
        let fuse_w = take(d.fused * fuse_in);
        let fuse_b = take(d.fused);
        let g = 4 * d.hidden;
        let mut lstm = || LstmLayout {
            wx: take(g * d.fused),
            wh: take(g * d.hidden),
            b: take(g),
        };
        let lstm = [lstm(), lstm()];
        let head_w1 = take(d.head_hidden * 2 * d.hidden);
        let head_b1 = take(d.head_hidden);
        let head_w2 = take(OUTPUT_DIM * d.head_hidden);
        let head_b2 = take(OUTPUT_DIM);
        Self {
            box_w1,
            box_b1,
            box_w2,
            box_b2,
            fuse_w,
            fuse_b,
            lstm,
            head_w1,
            head_b1,
            head_w2,
            head_b2,
            total: at,
        }
    }

    /// `(name, range, fan_in)` for every tensor, in storage order. Biases
    /// report the fan-in of their layer.
    pub fn tensors(&self, d: &ModelDims) -> Vec<(&'static str, Range<usize>, usize)> {
        let fuse_in = d.mv_len + d.dct_len + d.box_embed;
        let [f, b] = &self.lstm;
        vec![
            ("box_w1", self.box_w1.clone(), 4),
            ("box_b1", self.box_b1.clone(), 4),
            ("box_w2", self.box_w2.clone(), d.box_embed),
            ("box_b2", self.box_b2.clone(), d.box_embed),
            ("fuse_w", self.fuse_w.clone(), fuse_in),
            ("fuse_b", self.fuse_b.clone(), fuse_in),
            ("fwd_wx", f.wx.clone(), d.fused),
            ("fwd_wh", f.wh.clone(), d.hidden),
            ("fwd_b", f.b.clone(), d.hidden),
            ("bwd_wx", b.wx.clone(), d.fused),
            ("bwd_wh", b.wh.clone(), d.hidden),
            ("bwd_b", b.b.clone(), d.hidden),
            ("head_w1", self.head_w1.clone(), 2 * d.hidden),
            ("head_b1", self.head_b1.clone(), 2 * d.hidden),
            ("head_w2", self.head_w2.clone(), d.head_hidden),
            ("head_b2", self.head_b2.clone(), d.head_hidden),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub variant: Variant,
    pub seed: u64,
    pub values: Vec<f64>,
}

/// Uniform `±1/sqrt(fan_in)` weights and biases, forget-gate bias 1.
pub fn init_params(dims: ModelDims, variant: Variant, seed: u64) -> Result<ModelParams> {
    dims.validate()?;
    let layout = Layout::new(&dims);
    let mut values = vec![0.0; layout.total];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, range, fan_in) in layout.tensors(&dims) {
        let a = 1.0 / (fan_in as f64).sqrt();
        for v in &mut values[range] {
            *v = rng.random_range(-a..a);
        }
    }
    let h = dims.hidden;
    for l in &layout.lstm {
        for v in &mut values[l.b.start + h..l.b.start + 2 * h] {
            *v = 1.0;
        }
    }
    Ok(ModelParams {
        dims,
        variant,
        seed,
        values,
    })
}

impl ModelParams {
    pub fn zeros(dims: ModelDims, variant: Variant) -> Result<Self> {
        dims.validate()?;
        Ok(Self {
            dims,
            variant,
            seed: 0,
            values: vec![0.0; Layout::new(&dims).total],
        })
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.dims)
    }

    /// Named tensors as `(name, range)` into [`ModelParams::values`].
    pub fn tensors(&self) -> Vec<(&'static str, Range<usize>)> {
        self.layout().tensors(&self.dims).into_iter().map(|(n, r, _)| (n, r)).collect()
    }

    /// Exchanges the forward and backward LSTM and the matching halves of the
    /// head input, so that running on a reversed sequence mirrors the original.
    pub fn swap_directions(&self) -> Self {
        let l = self.layout();
        let mut out = self.clone();
        let [f, b] = &l.lstm;
        for (rf, rb) in [(&f.wx, &b.wx), (&f.wh, &b.wh), (&f.b, &b.b)] {
            out.values[rf.clone()].copy_from_slice(&self.values[rb.clone()]);
            out.values[rb.clone()].copy_from_slice(&self.values[rf.clone()]);
        }
        let h = self.dims.hidden;
        for row in 0..self.dims.head_hidden {
            let base = l.head_w1.start + row * 2 * h;
            for k in 0..h {
                out.values[base + k] = self.values[base + h + k];
                out.values[base + h + k] = self.values[base + k];
            }
        }
        out
    }

    /// Versioned binary checkpoint: header then float32 LE payload in
    /// [`ModelParams::tensors`] order.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = &self.dims;
        let mut buf = Vec::with_capacity(48 + 4 * self.values.len());
        buf.extend_from_slice(&CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [d.mv_len, d.dct_len, d.box_embed, d.fused, d.hidden, d.head_hidden] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.push(self.variant.mask());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&(self.values.len() as u32).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let bad = |what: &str| ModelError::Checkpoint(what.to_string());
        if bytes.len() < 43 || bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("bad magic or short header"));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        if u16_at(4) != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {}", u16_at(4))));
        }
        let dims = ModelDims {
            mv_len: u32_at(6),
            dct_len: u32_at(10),
            box_embed: u32_at(14),
            fused: u32_at(18),
            hidden: u32_at(22),
            head_hidden: u32_at(26),
        };
        dims.validate()?;
        let variant = Variant::from_mask(bytes[30]).ok_or_else(|| bad("bad variant mask"))?;
        let seed = u64::from_le_bytes(bytes[31..39].try_into().unwrap());
        let count = u32_at(39);
        if count != Layout::new(&dims).total {
            return Err(bad(&format!("parameter count {count} does not match dims")));
        }
        let payload = &bytes[43..];
        if payload.len() != 4 * count {
            return Err(bad(&format!("payload is {} bytes, expected {}", payload.len(), 4 * count)));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Ok(Self {
            dims,
            variant,
            seed,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameter_count_in_range() {
        let p = init_params(ModelDims::for_bafe(&BafeConfig::default()), Variant::MvDct, 1).unwrap();
        let n = p.param_count();
        assert!((100_000..=300_000).contains(&n), "{n}");
        let sum: usize = p.tensors().iter().map(|(_, r)| r.len()).sum();
        assert_eq!(sum, n);
    }

    #[test]
    fn init_is_seeded() {
        let d = ModelDims::for_bafe(&BafeConfig::default());
        let a = init_params(d, Variant::Mv, 9).unwrap();
        assert_eq!(a, init_params(d, Variant::Mv, 9).unwrap());
        assert_ne!(a.values, init_params(d, Variant::Mv, 10).unwrap().values);
        let l = a.layout();
        assert!(a.values[l.lstm[0].b.start + d.hidden..l.lstm[0].b.start + 2 * d.hidden]
            .iter()
            .all(|&v| v == 1.0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let d = ModelDims {
            mv_len: 2,
            dct_len: 4,
            box_embed: 3,
            fused: 4,
            hidden: 2,
            head_hidden: 3,
        };
        let mut p = init_params(d, Variant::Dct, 77).unwrap();
        for v in &mut p.values {
            *v = f64::from(*v as f32);
        }
        let mut buf = Vec::new();
        p.write_checkpoint(&mut buf).unwrap();
        assert_eq!(ModelParams::read_checkpoint(buf.as_slice()).unwrap(), p);
        buf.pop();
        assert!(ModelParams::read_checkpoint(buf.as_slice()).is_err());
    }

    #[test]
    fn swap_is_involution() {
        let d = ModelDims::for_bafe(&BafeConfig { mv_grid: 2, dct_grid: 1, margin: 0.5 });
        let p = init_params(d, Variant::MvDct, 3).unwrap();
        assert_ne!(p.swap_directions(), p);
        assert_eq!(p.swap_directions().swap_directions(), p);
    }
}
