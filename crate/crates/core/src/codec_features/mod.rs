//! Codec-domain data model shared by the parser, the block-matching encoder
//! and the trackers.
//!
//! A [`Gop`] holds the P-frames of one group of pictures. The I-frame is only
//! a marker: its pixels are consumed by an external detector, never here.
//! Each [`PFrame`] carries one motion vector per 16x16 macroblock and the
//! sparse quantized 8x8 luminance DCT residual blocks.

mod boxes;
mod cff;

pub use boxes::{BoundingBox, TrackPoint, Trajectory};
pub use cff::{read_cff, write_cff, CFF_HEADER_LEN, CFF_MAGIC, CFF_VERSION};

use std::collections::BTreeMap;
use std::sync::OnceLock;

use thiserror::Error;

/// Macroblock edge length in pixels.
pub const MB_SIZE: u32 = 16;
/// Transform block edge length in pixels.
pub const BLOCK_SIZE: u32 = 8;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid frame dimensions {width}x{height}: both must be positive multiples of 16")]
    InvalidDims { width: u32, height: u32 },
    #[error("frame dimensions differ: {expected:?} vs {found:?}")]
    DimsMismatch { expected: FrameDims, found: FrameDims },
    #[error("motion vector field has {found} vectors, expected {expected}")]
    FieldLength { expected: usize, found: usize },
    #[error("residual block ({row}, {col}) outside {rows}x{cols} block grid")]
    BlockOutOfRange { row: u16, col: u16, rows: u32, cols: u32 },
    #[error("coefficient list invalid: {0}")]
    InvalidCoefficients(String),
    #[error("quant_scale must be positive")]
    ZeroQuant,
    #[error("a GOP needs at least one P-frame (gop_size >= 2)")]
    GopTooShort,
    #[error("GOP of {0} frames exceeds the u16 gop_size field")]
    GopTooLong(usize),
    #[error("invalid bounding box {0}")]
    InvalidBox(String),
    #[error("bad magic {found:?} at offset {offset}")]
    BadMagic { offset: usize, found: [u8; 4] },
    #[error("unsupported CFF version {found} at offset {offset}")]
    UnsupportedVersion { offset: usize, found: u16 },
    #[error("truncated CFF at offset {offset}: expected {expected} bytes, {available} available")]
    Truncated { offset: usize, expected: usize, available: usize },
    #[error("malformed CFF record at offset {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FeatureError> = std::result::Result<T, E>;

/// Frame geometry in pixels. Both sides are multiples of the macroblock size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameDims {
    width: u32,
    height: u32,
}

impl FrameDims {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 || width % MB_SIZE != 0 || height % MB_SIZE != 0 {
            return Err(FeatureError::InvalidDims { width, height });
        }
        Ok(Self { width, height })
    }

    /// Rounds arbitrary dimensions up to the macroblock grid.
    pub fn padded(width: u32, height: u32) -> Result<Self> {
        let pad = |v: u32| v.div_ceil(MB_SIZE) * MB_SIZE;
        Self::new(pad(width), pad(height))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn mb_cols(&self) -> usize {
        (self.width / MB_SIZE) as usize
    }

    pub fn mb_rows(&self) -> usize {
        (self.height / MB_SIZE) as usize
    }

    pub fn mb_count(&self) -> usize {
        self.mb_cols() * self.mb_rows()
    }

    pub fn block_cols(&self) -> usize {
        2 * self.mb_cols()
    }

    pub fn block_rows(&self) -> usize {
        2 * self.mb_rows()
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Motion vector in half-pel units.
///
/// The data model stores forward content displacement: the content of the
/// current macroblock sat at `position - mv` in the reference frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct MotionVector {
    pub dx: i16,
    pub dy: i16,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { dx: 0, dy: 0 };

    pub fn new(dx: i16, dy: i16) -> Self {
        Self { dx, dy }
    }

    pub fn to_pixels(self) -> (f64, f64) {
        mv_to_pixels(self)
    }
}

/// Converts a half-pel vector to pixels.
pub fn mv_to_pixels(v: MotionVector) -> (f64, f64) {
    (f64::from(v.dx) / 2.0, f64::from(v.dy) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionVectorField {
    dims: FrameDims,
    vectors: Vec<MotionVector>,
}

impl MotionVectorField {
    pub fn new(dims: FrameDims, vectors: Vec<MotionVector>) -> Result<Self> {
        if vectors.len() != dims.mb_count() {
            return Err(FeatureError::FieldLength {
                expected: dims.mb_count(),
                found: vectors.len(),
            });
        }
        Ok(Self { dims, vectors })
    }

    pub fn zeros(dims: FrameDims) -> Self {
        Self {
            dims,
            vectors: vec![MotionVector::ZERO; dims.mb_count()],
        }
    }

    pub fn uniform(dims: FrameDims, v: MotionVector) -> Self {
        Self {
            dims,
            vectors: vec![v; dims.mb_count()],
        }
    }

    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    pub fn vectors(&self) -> &[MotionVector] {
        &self.vectors
    }

    pub fn vectors_mut(&mut self) -> &mut [MotionVector] {
        &mut self.vectors
    }

    pub fn get(&self, col: usize, row: usize) -> MotionVector {
        self.vectors[row * self.dims.mb_cols() + col]
    }

    pub fn set(&mut self, col: usize, row: usize, v: MotionVector) {
        let cols = self.dims.mb_cols();
        self.vectors[row * cols + col] = v;
    }
}

/// Sparse quantized coefficients of one 8x8 block, keyed by zigzag index.
///
/// Indices are strictly increasing and every stored value is nonzero, so two
/// blocks with the same content compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoeffBlock {
    coeffs: Vec<(u8, i16)>,
}

impl CoeffBlock {
    pub fn new(coeffs: Vec<(u8, i16)>) -> Result<Self> {
        let mut prev: Option<u8> = None;
        for &(idx, val) in &coeffs {
            if idx > 63 {
                return Err(FeatureError::InvalidCoefficients(format!(
                    "zigzag index {idx} > 63"
                )));
            }
            if prev.is_some_and(|p| idx <= p) {
                return Err(FeatureError::InvalidCoefficients(format!(
                    "zigzag index {idx} not increasing"
                )));
            }
            if val == 0 {
                return Err(FeatureError::InvalidCoefficients(format!(
                    "zero value stored at index {idx}"
                )));
            }
            prev = Some(idx);
        }
        Ok(Self { coeffs })
    }

    /// Builds a block from 64 coefficients in zigzag order, dropping zeros.
    pub fn from_zigzag(values: &[i16; 64]) -> Self {
        let coeffs = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, &v)| (i as u8, v))
            .collect();
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[(u8, i16)] {
        &self.coeffs
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient at a zigzag index (zero when absent).
    pub fn get(&self, zigzag: u8) -> i16 {
        self.coeffs
            .binary_search_by_key(&zigzag, |&(i, _)| i)
            .map(|k| self.coeffs[k].1)
            .unwrap_or(0)
    }
}

/// Quantized luminance residual of one P-frame on the 8x8 block grid.
#[derive(Debug, Clone)]
pub struct ResidualBlockPlane {
    dims: FrameDims,
    quant_scale: u16,
    blocks: BTreeMap<(u16, u16), CoeffBlock>,
    sums: OnceLock<BlockSums>,
}

impl PartialEq for ResidualBlockPlane {
    fn eq(&self, o: &Self) -> bool {
        self.dims == o.dims && self.quant_scale == o.quant_scale && self.blocks == o.blocks
    }
}

impl Eq for ResidualBlockPlane {}

/// Summed-area table over the block grid of the dequantized per-block
/// statistics (DC, AC(0,1), AC(1,0), energy).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSums {
    cols: usize,
    table: Vec<[f64; 4]>,
}

impl BlockSums {
    fn build(p: &ResidualBlockPlane) -> Self {
        let (rows, cols) = (p.dims.block_rows(), p.dims.block_cols());
        let q = f64::from(p.quant_scale);
        let mut cell = vec![[0.0; 4]; rows * cols];
        for (&(r, c), b) in &p.blocks {
            let energy = b.coeffs.iter().map(|&(_, v)| (f64::from(v) * q).powi(2)).sum();
            cell[usize::from(r) * cols + usize::from(c)] =
                [f64::from(b.get(0)) * q, f64::from(b.get(1)) * q, f64::from(b.get(2)) * q, energy];
        }
        let w = cols + 1;
        let mut table = vec![[0.0; 4]; (rows + 1) * w];
        for r in 0..rows {
            let mut run = [0.0; 4];
            for c in 0..cols {
                let v = cell[r * cols + c];
                for k in 0..4 {
                    run[k] += v[k];
                    table[(r + 1) * w + c + 1][k] = table[r * w + c + 1][k] + run[k];
                }
            }
        }
        Self { cols: w, table }
    }

    /// Sums over block rows `rows` and block columns `cols`.
    pub fn rect(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> [f64; 4] {
        let t = |r: usize, c: usize| self.table[r * self.cols + c];
        let (a, b, c, d) = (t(rows.end, cols.end), t(rows.start, cols.end), t(rows.end, cols.start), t(rows.start, cols.start));
        std::array::from_fn(|k| a[k] - b[k] - c[k] + d[k])
    }
}

impl ResidualBlockPlane {
    pub fn empty(dims: FrameDims, quant_scale: u16) -> Result<Self> {
        if quant_scale == 0 {
            return Err(FeatureError::ZeroQuant);
        }
        Ok(Self {
            dims,
            quant_scale,
            blocks: BTreeMap::new(),
            sums: OnceLock::new(),
        })
    }

    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    pub fn quant_scale(&self) -> u16 {
        self.quant_scale
    }

    /// Stores a block at (block_row, block_col). Empty blocks are not kept.
    pub fn insert(&mut self, row: u16, col: u16, block: CoeffBlock) -> Result<()> {
        if usize::from(row) >= self.dims.block_rows() || usize::from(col) >= self.dims.block_cols()
        {
            return Err(FeatureError::BlockOutOfRange {
                row,
                col,
                rows: self.dims.block_rows() as u32,
                cols: self.dims.block_cols() as u32,
            });
        }
        self.sums = OnceLock::new();
        if block.is_empty() {
            self.blocks.remove(&(row, col));
        } else {
            self.blocks.insert((row, col), block);
        }
        Ok(())
    }

    pub fn get(&self, row: u16, col: u16) -> Option<&CoeffBlock> {
        self.blocks.get(&(row, col))
    }

    /// Nonzero blocks in raster order.
    pub fn blocks(&self) -> impl Iterator<Item = ((u16, u16), &CoeffBlock)> {
        self.blocks.iter().map(|(k, v)| (*k, v))
    }

    /// Nonzero blocks of one block row with columns in `cols`.
    pub fn blocks_in_row(
        &self,
        row: u16,
        cols: std::ops::Range<u16>,
    ) -> impl Iterator<Item = ((u16, u16), &CoeffBlock)> {
        self.blocks.range((row, cols.start)..(row, cols.end)).map(|(k, v)| (*k, v))
    }

    /// Per-block statistics table, built on first use and kept until the
    /// plane changes.
    pub fn block_sums(&self) -> &BlockSums {
        self.sums.get_or_init(|| BlockSums::build(self))
    }

    pub fn nonzero_block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PFrame {
    mv: MotionVectorField,
    residual_y: ResidualBlockPlane,
}

impl PFrame {
    pub fn new(mv: MotionVectorField, residual_y: ResidualBlockPlane) -> Result<Self> {
        if mv.dims() != residual_y.dims() {
            return Err(FeatureError::DimsMismatch {
                expected: mv.dims(),
                found: residual_y.dims(),
            });
        }
        Ok(Self { mv, residual_y })
    }

    pub fn mv(&self) -> &MotionVectorField {
        &self.mv
    }

    pub fn residual_y(&self) -> &ResidualBlockPlane {
        &self.residual_y
    }

    pub fn dims(&self) -> FrameDims {
        self.mv.dims()
    }

    pub fn into_parts(self) -> (MotionVectorField, ResidualBlockPlane) {
        (self.mv, self.residual_y)
    }
}

/// One I-frame marker followed by `gop_size - 1` P-frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gop {
    dims: FrameDims,
    pframes: Vec<PFrame>,
}

impl Gop {
    pub fn new(dims: FrameDims, pframes: Vec<PFrame>) -> Result<Self> {
        if pframes.is_empty() {
            return Err(FeatureError::GopTooShort);
        }
        if pframes.len() + 1 > usize::from(u16::MAX) {
            return Err(FeatureError::GopTooLong(pframes.len() + 1));
        }
        if let Some(p) = pframes.iter().find(|p| p.dims() != dims) {
            return Err(FeatureError::DimsMismatch {
                expected: dims,
                found: p.dims(),
            });
        }
        Ok(Self { dims, pframes })
    }

    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    /// Number of frames including the I-frame.
    pub fn gop_size(&self) -> usize {
        self.pframes.len() + 1
    }

    pub fn pframes(&self) -> &[PFrame] {
        &self.pframes
    }

    /// P-frame `n` of the GOP, `n` in `1..gop_size`.
    pub fn pframe(&self, n: usize) -> &PFrame {
        &self.pframes[n - 1]
    }

    pub fn pframes_mut(&mut self) -> &mut [PFrame] {
        &mut self.pframes
    }
}

/// Values of MV payload per P-frame: two components per macroblock.
pub fn mv_values_per_frame(dims: FrameDims) -> usize {
    dims.mb_count() * 2
}

/// Luma + two chroma samples per pixel for an RGB/YUV444 frame.
pub fn rgb_samples_per_frame(dims: FrameDims) -> usize {
    dims.pixel_count() * 3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_validation() {
        assert!(FrameDims::new(0, 16).is_err());
        assert!(FrameDims::new(17, 16).is_err());
        let d = FrameDims::new(64, 32).unwrap();
        assert_eq!((d.mb_cols(), d.mb_rows(), d.block_cols(), d.block_rows()), (4, 2, 8, 4));
        assert_eq!(FrameDims::padded(72, 56).unwrap(), FrameDims::new(80, 64).unwrap());
    }

    #[test]
    fn mv_to_pixels_examples() {
        assert_eq!(mv_to_pixels(MotionVector::new(4, -2)), (2.0, -1.0));
        assert_eq!(mv_to_pixels(MotionVector::new(0, 0)), (0.0, 0.0));
        assert_eq!(mv_to_pixels(MotionVector::new(1, 1)), (0.5, 0.5));
    }

    #[test]
    fn coeff_block_rejects_bad_lists() {
        assert!(CoeffBlock::new(vec![(3, 1), (3, 2)]).is_err());
        assert!(CoeffBlock::new(vec![(5, 1), (2, 2)]).is_err());
        assert!(CoeffBlock::new(vec![(64, 1)]).is_err());
        assert!(CoeffBlock::new(vec![(1, 0)]).is_err());
        let b = CoeffBlock::new(vec![(0, 7), (9, -3)]).unwrap();
        assert_eq!(b.get(9), -3);
        assert_eq!(b.get(8), 0);
    }

    #[test]
    fn empty_blocks_are_absent() {
        let dims = FrameDims::new(32, 32).unwrap();
        let mut plane = ResidualBlockPlane::empty(dims, 2).unwrap();
        plane.insert(1, 1, CoeffBlock::new(vec![(0, 1)]).unwrap()).unwrap();
        plane.insert(1, 1, CoeffBlock::new(vec![]).unwrap()).unwrap();
        assert!(plane.is_empty());
        assert!(plane.insert(4, 0, CoeffBlock::new(vec![(0, 1)]).unwrap()).is_err());
    }

    #[test]
    fn gop_invariants() {
        let dims = FrameDims::new(32, 32).unwrap();
        assert!(matches!(Gop::new(dims, vec![]), Err(FeatureError::GopTooShort)));
        let other = FrameDims::new(48, 32).unwrap();
        let pf = PFrame::new(
            MotionVectorField::zeros(other),
            ResidualBlockPlane::empty(other, 1).unwrap(),
        )
        .unwrap();
        assert!(Gop::new(dims, vec![pf]).is_err());
    }

    #[test]
    fn mv_volume_is_384x_smaller_than_rgb() {
        for (w, h) in [(16, 16), (640, 480), (1920, 1088), (176, 144)] {
            let d = FrameDims::new(w, h).unwrap();
            assert_eq!(rgb_samples_per_frame(d), 384 * mv_values_per_frame(d));
        }
    }
}
