use super::bitreader::BitReader;
use super::tables::{tcoef, Tcoef};
use super::{ParseError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Inter,
    /// Intra block whose DC was coded separately; AC starts at scan index 1.
    IntraAc,
    /// Intra block with the DC carried in the run/level stream.
    IntraFull,
}

/// One run/level/last event, with escapes resolved.
fn decode_event(r: &mut BitReader<'_>, intra: bool) -> Result<(bool, u8, i16)> {
    let table = tcoef(intra);
    let at = r.position();
    match table.vlc.decode(r)? {
        Tcoef::Run { last, run, level } => {
            let neg = r.read_bit()?;
            Ok((last, run, if neg { -i16::from(level) } else { i16::from(level) }))
        }
        Tcoef::Escape => {
            if !r.read_bit()? {
                let (last, run, level) = escaped(r, intra)?;
                let level = level + table.max_level[usize::from(last)][usize::from(run)];
                let neg = r.read_bit()?;
                Ok((last, run, if neg { -i16::from(level) } else { i16::from(level) }))
            } else if !r.read_bit()? {
                let (last, run, level) = escaped(r, intra)?;
                let max_run = table.max_run[usize::from(last)][usize::from(level)].ok_or(ParseError::Vlc {
                    table: "tcoef escape",
                    bit_offset: at,
                })?;
                let run = run + max_run + 1;
                let neg = r.read_bit()?;
                Ok((last, run, if neg { -i16::from(level) } else { i16::from(level) }))
            } else {
                let last = r.read_bit()?;
                let run = r.read(6)? as u8;
                r.marker("escape run")?;
                let raw = r.read(12)? as i32;
                r.marker("escape level")?;
                let level = ((raw << 20) >> 20) as i16;
                if level == 0 {
                    return Err(ParseError::Syntax {
                        what: "escaped level 0".into(),
                        bit_offset: at,
                    });
                }
                Ok((last, run, level))
            }
        }
    }
}

/// Nested code inside escape modes 1 and 2 (sign not yet read).
fn escaped(r: &mut BitReader<'_>, intra: bool) -> Result<(bool, u8, u8)> {
    let at = r.position();
    match tcoef(intra).vlc.decode(r)? {
        Tcoef::Run { last, run, level } => Ok((last, run, level)),
        Tcoef::Escape => Err(ParseError::Vlc {
            table: "tcoef escape",
            bit_offset: at,
        }),
    }
}

/// Decodes one block's run/level events into `(scan_index, level)` pairs.
///
/// A block whose coded-block-pattern bit is clear yields an empty list and
/// consumes nothing.
pub fn decode_block_coeffs(r: &mut BitReader<'_>, kind: BlockKind, coded: bool) -> Result<Vec<(u8, i16)>> {
    let mut out = Vec::new();
    if !coded {
        return Ok(out);
    }
    let intra = kind != BlockKind::Inter;
    let mut pos = usize::from(kind == BlockKind::IntraAc);
    loop {
        let at = r.position();
        let (last, run, level) = decode_event(r, intra)?;
        let idx = pos + usize::from(run);
        if idx > 63 {
            return Err(ParseError::RunOverflow { bit_offset: at });
        }
        out.push((idx as u8, level));
        pos = idx + 1;
        if last {
            return Ok(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Vec<u8> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut out = vec![0u8; s.len().div_ceil(8)];
        for (i, c) in s.chars().enumerate() {
            if c == '1' {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    #[test]
    fn not_coded_reads_nothing() {
        let data = bits("1111");
        let mut r = BitReader::new(&data);
        assert!(decode_block_coeffs(&mut r, BlockKind::Inter, false).unwrap().is_empty());
        assert_eq!(r.position(), 0);
    }

    #[test]
    fn inter_events() {
        // (0,0,1)+ "10 0", (last,0,1)- "0111 1"
        let data = bits("100 01111");
        let mut r = BitReader::new(&data);
        let c = decode_block_coeffs(&mut r, BlockKind::Inter, true).unwrap();
        assert_eq!(c, vec![(0, 1), (1, -1)]);
    }

    #[test]
    fn escape_modes() {
        // mode 1: ESC 0 + (0,0,1) "10" + sign 0 -> level 1 + 12 = 13, then last (0,1) "0111 0"
        let data = bits("0000011 0 10 0 0111 0");
        let c = decode_block_coeffs(&mut BitReader::new(&data), BlockKind::Inter, true).unwrap();
        assert_eq!(c, vec![(0, 13), (1, 1)]);
        // mode 2: ESC 10 + (0,0,1) "10" + sign 1 -> run 0 + 26 + 1 = 27, then last "0111 0"
        let data = bits("0000011 10 10 1 0111 0");
        let c = decode_block_coeffs(&mut BitReader::new(&data), BlockKind::Inter, true).unwrap();
        assert_eq!(c, vec![(27, -1), (28, 1)]);
        // mode 3: ESC 11, last 1, run 5, marker, level -3 (12 bits), marker
        let data = bits("0000011 11 1 000101 1 111111111101 1");
        let c = decode_block_coeffs(&mut BitReader::new(&data), BlockKind::Inter, true).unwrap();
        assert_eq!(c, vec![(5, -3)]);
    }

    #[test]
    fn run_overflow() {
        // mode 3 with run 63 starting at index 1 (intra AC) overflows
        let data = bits("0000011 11 1 111111 1 000000000001 1");
        let r = decode_block_coeffs(&mut BitReader::new(&data), BlockKind::IntraAc, true);
        assert!(matches!(r, Err(ParseError::RunOverflow { bit_offset: 0 })));
    }
}
