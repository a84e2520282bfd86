//! Codec Feature File, version 1.
//!
//! ```text
//! header (20 bytes): "CFF1" | version u16 | width u32 | height u32 | gop_count u32 | reserved u16
//! per GOP:           gop_size u16, then gop_size-1 P-frame records
//! per P-frame:       mb_cols*mb_rows x (dx i16, dy i16) | quant_scale u16 | block_count u32
//!                    | per block: row u16, col u16, n u8, n x (zigzag u8, value i16)
//! ```
//!
//! All integers are little-endian.

use std::io::{Read, Write};

use super::{
    CoeffBlock, FeatureError, FrameDims, Gop, MotionVector, MotionVectorField, PFrame,
    ResidualBlockPlane, Result,
};

pub const CFF_MAGIC: [u8; 4] = *b"CFF1";
pub const CFF_VERSION: u16 = 1;
pub const CFF_HEADER_LEN: usize = 20;

/// Serializes GOPs to `sink` and returns the number of bytes written.
///
/// An empty list produces a header with zero dimensions.
pub fn write_cff<W: Write>(gops: &[Gop], mut sink: W) -> Result<usize> {
    let buf = encode(gops)?;
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(buf.len())
}

fn encode(gops: &[Gop]) -> Result<Vec<u8>> {
    let (width, height) = match gops.first() {
        Some(g) => (g.dims().width(), g.dims().height()),
        None => (0, 0),
    };
    if let Some(g) = gops.iter().find(|g| g.dims() != gops[0].dims()) {
        return Err(FeatureError::DimsMismatch {
            expected: gops[0].dims(),
            found: g.dims(),
        });
    }
    let mut out = Vec::with_capacity(CFF_HEADER_LEN);
    out.extend_from_slice(&CFF_MAGIC);
    out.extend_from_slice(&CFF_VERSION.to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&(gops.len() as u32).to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());

    for gop in gops {
        out.extend_from_slice(&(gop.gop_size() as u16).to_le_bytes());
        for pf in gop.pframes() {
            for v in pf.mv().vectors() {
                out.extend_from_slice(&v.dx.to_le_bytes());
                out.extend_from_slice(&v.dy.to_le_bytes());
            }
            let res = pf.residual_y();
            out.extend_from_slice(&res.quant_scale().to_le_bytes());
            out.extend_from_slice(&(res.nonzero_block_count() as u32).to_le_bytes());
            for ((row, col), block) in res.blocks() {
                out.extend_from_slice(&row.to_le_bytes());
                out.extend_from_slice(&col.to_le_bytes());
                out.push(block.coeffs().len() as u8);
                for &(idx, val) in block.coeffs() {
                    out.push(idx);
                    out.extend_from_slice(&val.to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

/// Reads a whole CFF from `source`.
pub fn read_cff<R: Read>(mut source: R) -> Result<Vec<Gop>> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode(&bytes)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(FeatureError::Truncated {
                offset: self.pos,
                expected: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn i16(&mut self) -> Result<i16> {
        let b = self.take(2)?;
        Ok(i16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn malformed(&self, offset: usize, reason: impl Into<String>) -> FeatureError {
        FeatureError::Malformed {
            offset,
            reason: reason.into(),
        }
    }
}

fn decode(bytes: &[u8]) -> Result<Vec<Gop>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let magic = c.take(4)?;
    if magic != CFF_MAGIC {
        return Err(FeatureError::BadMagic {
            offset: 0,
            found: [magic[0], magic[1], magic[2], magic[3]],
        });
    }
    let version = c.u16()?;
    if version != CFF_VERSION {
        return Err(FeatureError::UnsupportedVersion {
            offset: 4,
            found: version,
        });
    }
    let width = c.u32()?;
    let height = c.u32()?;
    let gop_count = c.u32()? as usize;
    let reserved = c.u16()?;
    if reserved != 0 {
        return Err(c.malformed(18, format!("reserved field is {reserved}")));
    }
    if gop_count == 0 {
        if c.pos != bytes.len() {
            return Err(c.malformed(c.pos, "trailing bytes after header"));
        }
        return Ok(Vec::new());
    }
    let dims = FrameDims::new(width, height).map_err(|e| c.malformed(6, e.to_string()))?;

    let mut gops = Vec::with_capacity(gop_count.min(1 << 16));
    for _ in 0..gop_count {
        let at = c.pos;
        let gop_size = c.u16()? as usize;
        if gop_size < 2 {
            return Err(c.malformed(at, format!("gop_size {gop_size} < 2")));
        }
        let mut pframes = Vec::with_capacity(gop_size - 1);
        for _ in 1..gop_size {
            pframes.push(decode_pframe(&mut c, dims)?);
        }
        gops.push(Gop::new(dims, pframes).map_err(|e| c.malformed(at, e.to_string()))?);
    }
    if c.pos != bytes.len() {
        return Err(c.malformed(c.pos, "trailing bytes after last GOP"));
    }
    Ok(gops)
}

fn decode_pframe(c: &mut Cursor<'_>, dims: FrameDims) -> Result<PFrame> {
    let n = dims.mb_count();
    // Check the whole MV array up front so truncation reports its full size.
    let mv_bytes = c.take(4 * n)?;
    let vectors = mv_bytes
        .chunks_exact(4)
        .map(|b| {
            MotionVector::new(
                i16::from_le_bytes([b[0], b[1]]),
                i16::from_le_bytes([b[2], b[3]]),
            )
        })
        .collect();
    let mv = MotionVectorField::new(dims, vectors)?;

    let at = c.pos;
    let quant = c.u16()?;
    let mut plane = ResidualBlockPlane::empty(dims, quant).map_err(|e| c.malformed(at, e.to_string()))?;
    let count = c.u32()?;
    let mut prev: Option<(u16, u16)> = None;
    for _ in 0..count {
        let at = c.pos;
        let row = c.u16()?;
        let col = c.u16()?;
        if prev.is_some_and(|p| (row, col) <= p) {
            return Err(c.malformed(at, format!("block ({row}, {col}) out of raster order")));
        }
        prev = Some((row, col));
        let k = c.u8()?;
        if k == 0 {
            return Err(c.malformed(at, "empty block record"));
        }
        let mut coeffs = Vec::with_capacity(k as usize);
        for _ in 0..k {
            let idx = c.u8()?;
            let val = c.i16()?;
            coeffs.push((idx, val));
        }
        let block = CoeffBlock::new(coeffs).map_err(|e| c.malformed(at, e.to_string()))?;
        plane
            .insert(row, col, block)
            .map_err(|e| c.malformed(at, e.to_string()))?;
    }
    PFrame::new(mv, plane)
}
