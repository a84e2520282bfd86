//! MPEG-4 Part 2 (Simple Profile) elementary stream parser.
//!
//! Decodes motion vectors and quantized luminance levels of P-VOPs without
//! reconstructing any pixels. I-VOPs only open a new GOP; their payload is
//! skipped up to the next start code.

mod bitreader;
mod coeffs;
mod headers;
mod mv;
mod pvop;
mod tables;

pub use bitreader::BitReader;
pub use coeffs::{decode_block_coeffs, BlockKind};
pub use headers::{VolHeader, VopHeader, VopType};
pub use mv::{decode_mv_component, decode_mv_delta, decode_mv_predictor, wrap_mv_component};
pub use pvop::{MbKind, MbTrace};
pub use tables::{ALT_HORIZONTAL_SCAN, ALT_VERTICAL_SCAN};

use log::{debug, warn};
use thiserror::Error;

use crate::codec_features::{FeatureError, FrameDims, Gop, MotionVectorField, PFrame, ResidualBlockPlane};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("unsupported feature: {feature} (bit offset {bit_offset})")]
    Unsupported { feature: &'static str, bit_offset: usize },
    #[error("invalid {table} code at bit offset {bit_offset}")]
    Vlc { table: &'static str, bit_offset: usize },
    #[error("truncated stream at bit offset {bit_offset}: need {needed} bits, {available} left")]
    Truncated { bit_offset: usize, needed: usize, available: usize },
    #[error("coefficient run past index 63 at bit offset {bit_offset}")]
    RunOverflow { bit_offset: usize },
    #[error("{what} (bit offset {bit_offset})")]
    Syntax { what: String, bit_offset: usize },
    #[error("P-VOP before any I-VOP at bit offset {bit_offset}")]
    PBeforeI { bit_offset: usize },
    #[error("VOP before any video object layer header at bit offset {bit_offset}")]
    MissingVol { bit_offset: usize },
    #[error("frame size changed from {from:?} to {to:?} at bit offset {bit_offset}")]
    DimsChanged { from: FrameDims, to: FrameDims, bit_offset: usize },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

impl ParseError {
    /// Bit offset the error refers to, when it has one.
    pub fn bit_offset(&self) -> Option<usize> {
        match self {
            ParseError::Unsupported { bit_offset, .. }
            | ParseError::Vlc { bit_offset, .. }
            | ParseError::Truncated { bit_offset, .. }
            | ParseError::RunOverflow { bit_offset }
            | ParseError::Syntax { bit_offset, .. }
            | ParseError::PBeforeI { bit_offset }
            | ParseError::MissingVol { bit_offset }
            | ParseError::DimsChanged { bit_offset, .. } => Some(*bit_offset),
            ParseError::Feature(_) => None,
        }
    }
}

pub type Result<T, E = ParseError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Record a [`MbTrace`] for every P-VOP macroblock.
    pub trace: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedStream {
    pub gops: Vec<Gop>,
    pub vops: Vec<VopHeader>,
    pub trace: Vec<MbTrace>,
    /// Byte offset just past each VOP's data (its trailing stuffing included).
    pub vop_ends: Vec<usize>,
}

/// Parses a whole elementary stream into GOPs.
pub fn parse_stream(bytes: &[u8]) -> Result<Vec<Gop>> {
    Ok(parse_stream_with(bytes, ParseOptions::default())?.gops)
}

/// Byte offset of the next `00 00 01` prefix at or after `from`.
fn next_start_code(bytes: &[u8], from: usize) -> Option<usize> {
    bytes
        .get(from..)?
        .windows(3)
        .position(|w| w == [0, 0, 1])
        .map(|p| from + p)
}

pub fn parse_stream_with(bytes: &[u8], opts: ParseOptions) -> Result<ParsedStream> {
    let lead = bytes.iter().take_while(|&&b| b == 0).count();
    if lead >= 2 && bytes.get(lead).is_some_and(|&b| b & 0xFC == 0x80) {
        return Err(ParseError::Unsupported {
            feature: "short video header",
            bit_offset: 8 * (lead - 2),
        });
    }

    let mut out = ParsedStream::default();
    let mut vol: Option<VolHeader> = None;
    let mut dims: Option<FrameDims> = None;
    let mut current: Option<Vec<PFrame>> = None;
    let mut frame = 0usize;
    let mut pos = match next_start_code(bytes, 0) {
        Some(p) => p,
        None => {
            return Err(ParseError::Truncated {
                bit_offset: 0,
                needed: 32,
                available: 8 * bytes.len(),
            })
        }
    };

    let close_gop = |cur: Option<Vec<PFrame>>, dims: Option<FrameDims>, gops: &mut Vec<Gop>| -> Result<()> {
        if let (Some(pframes), Some(d)) = (cur, dims) {
            if pframes.is_empty() {
                warn!("dropping GOP {} with no P-frames", gops.len());
            } else {
                gops.push(Gop::new(d, pframes)?);
            }
        }
        Ok(())
    };

    while pos + 4 <= bytes.len() {
        let code = bytes[pos + 3];
        let mut r = BitReader::at_byte(bytes, pos + 4);
        match code {
            0x20..=0x2F => {
                let v = headers::parse_vol(&mut r)?;
                let d = FrameDims::padded(v.width, v.height)?;
                if let Some(prev) = dims {
                    if prev != d {
                        return Err(ParseError::DimsChanged {
                            from: prev,
                            to: d,
                            bit_offset: 8 * pos,
                        });
                    }
                }
                debug!("VOL {}x{} (padded {}x{}), verid {}", v.width, v.height, d.width(), d.height(), v.verid);
                dims = Some(d);
                vol = Some(v);
            }
            headers::VOP_START => {
                let v = vol.as_ref().ok_or(ParseError::MissingVol { bit_offset: 8 * pos })?;
                let d = dims.expect("set with vol");
                let hdr = headers::parse_vop(&mut r, v)?;
                match hdr.coding_type {
                    VopType::I => {
                        close_gop(current.take(), dims, &mut out.gops)?;
                        current = Some(Vec::new());
                    }
                    VopType::P => {
                        let pframes = current.as_mut().ok_or(ParseError::PBeforeI { bit_offset: 8 * pos })?;
                        let pf = if hdr.coded {
                            let trace = opts.trace.then_some(&mut out.trace);
                            let res = pvop::decode_pvop(&mut r, v, &hdr, d, frame, trace)?;
                            PFrame::new(res.mv, res.residual)?
                        } else {
                            pvop::finish_vop(&mut r)?;
                            PFrame::new(MotionVectorField::zeros(d), ResidualBlockPlane::empty(d, 1)?)?
                        };
                        pframes.push(pf);
                        out.vop_ends.push(r.byte_pos());
                    }
                }
                out.vops.push(hdr);
                frame += 1;
            }
            _ => {}
        }
        let resume = r.byte_pos().max(pos + 3);
        pos = match next_start_code(bytes, resume) {
            Some(p) => p,
            None => break,
        };
    }
    close_gop(current.take(), dims, &mut out.gops)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input() {
        assert!(matches!(
            parse_stream(&[]),
            Err(ParseError::Truncated { bit_offset: 0, available: 0, .. })
        ));
    }

    #[test]
    fn short_header_rejected() {
        let e = parse_stream(&[0, 0, 0x80, 0x02, 0x1F]).unwrap_err();
        assert!(matches!(e, ParseError::Unsupported { feature: "short video header", bit_offset: 0 }));
    }

    #[test]
    fn no_start_code_is_truncation() {
        assert!(matches!(parse_stream(&[0xFF, 0x12]), Err(ParseError::Truncated { .. })));
    }
}
