//! Box-aligned feature extraction: fixed-size grids of motion and residual
//! features sampled over a box and its surroundings.

use thiserror::Error;

use crate::codec_features::{
    mv_to_pixels, BoundingBox, FrameDims, Gop, MotionVectorField, ResidualBlockPlane, BLOCK_SIZE, MB_SIZE,
};

/// DC, AC(0,1), AC(1,0), block energy.
pub const DCT_CHANNELS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum BafeError {
    #[error("invalid BAFE config: {0}")]
    InvalidConfig(String),
    #[error("alignment covers {found} frames for proposal {proposal}, expected {expected}")]
    AlignmentLength {
        proposal: usize,
        expected: usize,
        found: usize,
    },
}

pub type Result<T, E = BafeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BafeConfig {
    pub mv_grid: usize,
    pub dct_grid: usize,
    /// Fraction of the box size added on each side.
    pub margin: f64,
}

impl Default for BafeConfig {
    fn default() -> Self {
        Self {
            mv_grid: 8,
            dct_grid: 4,
            margin: 0.5,
        }
    }
}

impl BafeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mv_grid == 0 || self.dct_grid == 0 {
            return Err(BafeError::InvalidConfig(format!(
                "grid sizes must be >= 1 (mv_grid {}, dct_grid {})",
                self.mv_grid, self.dct_grid
            )));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(BafeError::InvalidConfig(format!("margin {} must be >= 0", self.margin)));
        }
        Ok(())
    }

    pub fn mv_len(&self) -> usize {
        2 * self.mv_grid * self.mv_grid
    }

    pub fn dct_len(&self) -> usize {
        DCT_CHANNELS * self.dct_grid * self.dct_grid
    }

    /// Flattened per-frame feature length: `2 g_m^2 + 4 g_d^2 + 4`.
    pub fn feature_len(&self) -> usize {
        self.mv_len() + self.dct_len() + 4
    }
}

/// Features of one proposal in one P-frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AFeatures {
    /// `(x, y)` pixel displacement per grid cell, raster order.
    pub mv_feat: Vec<f64>,
    /// `DCT_CHANNELS` values per grid cell, raster order.
    pub dct_feat: Vec<f64>,
    /// Box the features were sampled at: `(cx, cy, w, h)`.
    pub box_geom: [f64; 4],
}

impl AFeatures {
    pub fn len(&self) -> usize {
        self.mv_feat.len() + self.dct_feat.len() + 4
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.mv_feat);
        v.extend_from_slice(&self.dct_feat);
        v.extend_from_slice(&self.box_geom);
        v
    }
}

/// Clips `[lo, hi]` to `[0, 1]`, then widens it to at least `min` around its
/// center while staying inside the unit interval.
fn clip_interval(lo: f64, hi: f64, min: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (lo.max(0.0), hi.min(1.0));
    if min >= 1.0 {
        return (0.0, 1.0);
    }
    if hi - lo < min {
        let c = ((lo + hi) / 2.0).clamp(min / 2.0, 1.0 - min / 2.0);
        lo = c - min / 2.0;
        hi = c + min / 2.0;
    }
    (lo, hi)
}

/// Grows a box by `margin` of its size on each side, then clips it to the
/// frame, keeping at least one macroblock in each direction.
pub fn expand_box(b: &BoundingBox, margin: f64, dims: FrameDims) -> BoundingBox {
    let s = 1.0 + 2.0 * margin;
    let (w, h) = (b.w * s, b.h * s);
    let min_w = MB_SIZE as f64 / f64::from(dims.width());
    let min_h = MB_SIZE as f64 / f64::from(dims.height());
    let (x0, x1) = clip_interval(b.cx - w / 2.0, b.cx + w / 2.0, min_w);
    let (y0, y1) = clip_interval(b.cy - h / 2.0, b.cy + h / 2.0, min_h);
    BoundingBox::from_corners(x0, y0, x1, y1)
}

/// Bilinearly interpolated pixel-unit vector at continuous macroblock
/// coordinates (centers at integers), clamped at the border.
fn mv_at(field: &MotionVectorField, fx: f64, fy: f64) -> (f64, f64) {
    let dims = field.dims();
    let (cols, rows) = (dims.mb_cols() as isize, dims.mb_rows() as isize);
    let (x0, y0) = (fx.floor(), fy.floor());
    let (tx, ty) = (fx - x0, fy - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let at = |x: isize, y: isize| {
        let c = x.clamp(0, cols - 1) as usize;
        let r = y.clamp(0, rows - 1) as usize;
        mv_to_pixels(field.get(c, r))
    };
    let (a, b, c, d) = (at(x0, y0), at(x0 + 1, y0), at(x0, y0 + 1), at(x0 + 1, y0 + 1));
    let lerp = |p: f64, q: f64, t: f64| p + (q - p) * t;
    (
        lerp(lerp(a.0, b.0, tx), lerp(c.0, d.0, tx), ty),
        lerp(lerp(a.1, b.1, tx), lerp(c.1, d.1, tx), ty),
    )
}

pub fn sample_mv_features(mv: &MotionVectorField, b: &BoundingBox, cfg: &BafeConfig) -> Vec<f64> {
    let dims = mv.dims();
    let e = expand_box(b, cfg.margin, dims);
    let g = cfg.mv_grid;
    let (w, h) = (f64::from(dims.width()), f64::from(dims.height()));
    let mb = MB_SIZE as f64;
    let mut out = Vec::with_capacity(2 * g * g);
    for j in 0..g {
        let v = e.y0() + (j as f64 + 0.5) / g as f64 * e.h;
        let fy = v * h / mb - 0.5;
        for i in 0..g {
            let u = e.x0() + (i as f64 + 0.5) / g as f64 * e.w;
            let (x, y) = mv_at(mv, u * w / mb - 0.5, fy);
            out.push(x);
            out.push(y);
        }
    }
    out
}

/// Block index range whose centers fall in `[a, b)` pixels, clamped to `n`
/// blocks.
fn centered_blocks(a: f64, b: f64, n: usize) -> std::ops::Range<usize> {
    let bs = BLOCK_SIZE as f64;
    let first = (a / bs - 0.5).ceil().max(0.0) as usize;
    let end = ((b / bs - 0.5).ceil().max(0.0) as usize).min(n);
    first.min(end)..end
}

pub fn sample_dct_features(res: &ResidualBlockPlane, b: &BoundingBox, cfg: &BafeConfig) -> Vec<f64> {
    let dims = res.dims();
    let e = expand_box(b, cfg.margin, dims);
    let g = cfg.dct_grid;
    let sums = res.block_sums();
    let (w, h) = (f64::from(dims.width()), f64::from(dims.height()));
    let (bcols, brows) = (dims.block_cols(), dims.block_rows());
    let (cw, ch) = (e.w * w / g as f64, e.h * h / g as f64);
    let (px0, py0) = (e.x0() * w, e.y0() * h);
    let mut out = vec![0.0; DCT_CHANNELS * g * g];
    for j in 0..g {
        let (ya, yb) = (py0 + j as f64 * ch, py0 + (j + 1) as f64 * ch);
        let mut rows = centered_blocks(ya, yb, brows);
        if rows.is_empty() {
            let r = ((ya + yb) / 2.0 / BLOCK_SIZE as f64).floor().clamp(0.0, (brows - 1) as f64) as usize;
            rows = r..r + 1;
        }
        for i in 0..g {
            let (xa, xb) = (px0 + i as f64 * cw, px0 + (i + 1) as f64 * cw);
            let mut cols = centered_blocks(xa, xb, bcols);
            if cols.is_empty() {
                let c = ((xa + xb) / 2.0 / BLOCK_SIZE as f64).floor().clamp(0.0, (bcols - 1) as f64) as usize;
                cols = c..c + 1;
            }
            let n = (rows.len() * cols.len()) as f64;
            let acc = sums.rect(rows.clone(), cols);
            let cell = &mut out[DCT_CHANNELS * (j * g + i)..DCT_CHANNELS * (j * g + i + 1)];
            for (o, a) in cell.iter_mut().zip(acc) {
                *o = a / n;
            }
        }
    }
    out
}

/// Features of every proposal over the P-frames of a GOP.
///
/// `alignment[p][n - 1]` is the box of proposal `p` at frame `n - 1`, for
/// `n` in `1..gop_size`; frame `n`'s features are sampled at that box.
pub fn assemble_features(gop: &Gop, alignment: &[Vec<BoundingBox>], cfg: &BafeConfig) -> Result<Vec<Vec<AFeatures>>> {
    cfg.validate()?;
    let frames = gop.gop_size() - 1;
    alignment
        .iter()
        .enumerate()
        .map(|(p, boxes)| {
            if boxes.len() != frames {
                return Err(BafeError::AlignmentLength {
                    proposal: p,
                    expected: frames,
                    found: boxes.len(),
                });
            }
            Ok(gop
                .pframes()
                .iter()
                .zip(boxes)
                .map(|(pf, b)| frame_features(pf.mv(), pf.residual_y(), b, cfg))
                .collect())
        })
        .collect()
}

pub fn frame_features(mv: &MotionVectorField, res: &ResidualBlockPlane, b: &BoundingBox, cfg: &BafeConfig) -> AFeatures {
    AFeatures {
        mv_feat: sample_mv_features(mv, b, cfg),
        dct_feat: sample_dct_features(res, b, cfg),
        box_geom: [b.cx, b.cy, b.w, b.h],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec_features::{CoeffBlock, MotionVector, PFrame};

    fn dims(w: u32, h: u32) -> FrameDims {
        FrameDims::new(w, h).unwrap()
    }

    fn close(a: &BoundingBox, b: (f64, f64, f64, f64)) -> bool {
        [a.cx - b.0, a.cy - b.1, a.w - b.2, a.h - b.3].iter().all(|d| d.abs() < 1e-12)
    }

    #[test]
    fn expand_examples() {
        let d = dims(320, 320);
        let b = BoundingBox::new(0.5, 0.5, 0.2, 0.2).unwrap();
        assert!(close(&expand_box(&b, 0.5, d), (0.5, 0.5, 0.4, 0.4)));
        assert!(close(&expand_box(&b, 0.0, d), (0.5, 0.5, 0.2, 0.2)));
        let e = expand_box(&BoundingBox::new(0.05, 0.5, 0.2, 0.2).unwrap(), 0.5, d);
        assert!(e.x0().abs() < 1e-12);
        assert!((e.x1() - 0.25).abs() < 1e-12);
        assert!(close(&BoundingBox::from_corners(0.0, 0.3, 0.25, 0.7), (e.cx, e.cy, e.w, e.h)));
    }

    #[test]
    fn expand_keeps_one_macroblock() {
        let d = dims(160, 128);
        let e = expand_box(&BoundingBox::new(0.999, 0.5, 0.001, 0.001).unwrap(), 0.5, d);
        assert!((e.w - 0.1).abs() < 1e-12 && (e.h - 0.125).abs() < 1e-12);
        assert!(e.x1() <= 1.0 + 1e-12);
    }

    #[test]
    fn uniform_field_samples() {
        let d = dims(160, 128);
        let f = MotionVectorField::uniform(d, MotionVector::new(4, 0));
        let cfg = BafeConfig::default();
        let v = sample_mv_features(&f, &BoundingBox::new(0.3, 0.6, 0.2, 0.1).unwrap(), &cfg);
        assert_eq!(v.len(), 128);
        for c in v.chunks(2) {
            assert_eq!(c, [2.0, 0.0]);
        }
        let z = sample_mv_features(&MotionVectorField::zeros(d), &BoundingBox::new(0.3, 0.6, 0.2, 0.1).unwrap(), &cfg);
        assert!(z.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn bilinear_center_of_two_by_two() {
        let d = dims(32, 32);
        let f = MotionVectorField::new(
            d,
            vec![
                MotionVector::new(2, 0),
                MotionVector::new(6, 4),
                MotionVector::new(-2, 8),
                MotionVector::new(10, -4),
            ],
        )
        .unwrap();
        let cfg = BafeConfig {
            mv_grid: 1,
            dct_grid: 1,
            margin: 0.0,
        };
        let v = sample_mv_features(&f, &BoundingBox::new(0.5, 0.5, 1.0, 1.0).unwrap(), &cfg);
        // mean of (1,0), (3,2), (-1,4), (5,-2)
        assert_eq!(v, vec![2.0, 1.0]);
        // 4x4 grid: the top-left sample sits at MB coords (-0.25, -0.25), clamped to MB (0,0)
        let cfg4 = BafeConfig { mv_grid: 4, ..cfg };
        let v = sample_mv_features(&f, &BoundingBox::new(0.5, 0.5, 1.0, 1.0).unwrap(), &cfg4);
        assert_eq!(&v[..2], &[1.0, 0.0]);
        // second sample at x = 0.25: 0.75 * (1,0) + 0.25 * (3,2)
        assert_eq!(&v[2..4], &[1.5, 0.5]);
    }

    #[test]
    fn translation_by_one_macroblock() {
        let d = dims(256, 256);
        let mut f = MotionVectorField::zeros(d);
        let mut g = MotionVectorField::zeros(d);
        for r in 4..9 {
            for c in 4..9 {
                f.set(c, r, MotionVector::new(6, -2));
                g.set(c + 1, r, MotionVector::new(6, -2));
            }
        }
        let cfg = BafeConfig::default();
        let b = BoundingBox::new(0.25, 0.25, 0.1, 0.1).unwrap();
        let b2 = BoundingBox::new(0.25 + 16.0 / 256.0, 0.25, 0.1, 0.1).unwrap();
        let (a, c) = (sample_mv_features(&f, &b, &cfg), sample_mv_features(&g, &b2, &cfg));
        for (x, y) in a.iter().zip(&c) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_block_cell() {
        let d = dims(32, 32);
        let mut res = ResidualBlockPlane::empty(d, 1).unwrap();
        res.insert(0, 0, CoeffBlock::new(vec![(0, 8)]).unwrap()).unwrap();
        let cfg = BafeConfig {
            mv_grid: 2,
            dct_grid: 4,
            margin: 0.0,
        };
        let v = sample_dct_features(&res, &BoundingBox::new(0.5, 0.5, 1.0, 1.0).unwrap(), &cfg);
        assert_eq!(&v[..4], &[8.0, 0.0, 0.0, 64.0]);
        assert!(v[4..].iter().all(|&x| x == 0.0));
        let empty = ResidualBlockPlane::empty(d, 1).unwrap();
        assert!(sample_dct_features(&empty, &BoundingBox::new(0.5, 0.5, 1.0, 1.0).unwrap(), &cfg)
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn doubling_coefficients() {
        let d = dims(64, 64);
        let mut a = ResidualBlockPlane::empty(d, 3).unwrap();
        let mut b = ResidualBlockPlane::empty(d, 3).unwrap();
        let blocks = [
            (1u16, 2u16, vec![(0u8, 5i16), (1, -3), (2, 7), (9, 1)]),
            (4, 4, vec![(0, -2), (2, 4)]),
            (6, 1, vec![(1, 9), (40, -6)]),
        ];
        for (r, c, coeffs) in blocks {
            let doubled = coeffs.iter().map(|&(i, v)| (i, 2 * v)).collect();
            a.insert(r, c, CoeffBlock::new(coeffs).unwrap()).unwrap();
            b.insert(r, c, CoeffBlock::new(doubled).unwrap()).unwrap();
        }
        let cfg = BafeConfig::default();
        let bx = BoundingBox::new(0.4, 0.45, 0.5, 0.6).unwrap();
        let (fa, fb) = (sample_dct_features(&a, &bx, &cfg), sample_dct_features(&b, &bx, &cfg));
        assert!(fa.iter().any(|&x| x != 0.0));
        for (cell_a, cell_b) in fa.chunks(4).zip(fb.chunks(4)) {
            for k in 0..3 {
                assert!((cell_b[k] - 2.0 * cell_a[k]).abs() < 1e-9);
            }
            assert!((cell_b[3] - 4.0 * cell_a[3]).abs() < 1e-9);
        }
    }

    fn gop(n: usize, d: FrameDims) -> Gop {
        let pf = (0..n - 1)
            .map(|_| PFrame::new(MotionVectorField::zeros(d), ResidualBlockPlane::empty(d, 2).unwrap()).unwrap())
            .collect();
        Gop::new(d, pf).unwrap()
    }

    #[test]
    fn assemble_lengths_and_zero_input() {
        let d = dims(64, 48);
        let b = BoundingBox::new(0.5, 0.5, 0.3, 0.3).unwrap();
        let cfg = BafeConfig::default();
        let f = assemble_features(&gop(2, d), &[vec![b]], &cfg).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].len(), 1);
        assert_eq!(f[0][0].len(), cfg.feature_len());
        assert!(f[0][0].mv_feat.iter().chain(&f[0][0].dct_feat).all(|&x| x == 0.0));
        assert_eq!(f[0][0].box_geom, [0.5, 0.5, 0.3, 0.3]);
        assert_eq!(
            assemble_features(&gop(3, d), &[vec![b]], &cfg),
            Err(BafeError::AlignmentLength {
                proposal: 0,
                expected: 2,
                found: 1
            })
        );
    }

    #[test]
    fn feature_length_formula() {
        let cfg = BafeConfig::default();
        assert_eq!(cfg.feature_len(), 2 * 64 + 4 * 16 + 4);
        assert!(BafeConfig { mv_grid: 0, ..cfg }.validate().is_err());
        assert!(BafeConfig { margin: -0.1, ..cfg }.validate().is_err());
    }
}
