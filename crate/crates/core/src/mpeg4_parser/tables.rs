//! Variable-length code tables for MPEG-4 Part 2 Simple Profile P-VOPs.
//!
//! Codes are `(code, length)` pairs read MSB first.

use std::sync::OnceLock;

use super::bitreader::BitReader;
use super::{ParseError, Result};

/// MCBPC for P-VOPs, indexed by symbol. Bit 2 = intra, bit 3 = dquant,
/// bit 4 = four vectors, bits 0-1 = chroma CBP. Symbol 20 is stuffing.
const MCBPC_P: [(u32, u8); 21] = [
    (1, 1), (3, 4), (2, 4), (5, 6), (3, 5), (4, 8), (3, 8), (3, 7), (3, 3), (7, 7), (6, 7),
    (5, 9), (4, 6), (4, 9), (3, 9), (2, 9), (2, 3), (5, 7), (4, 7), (5, 8), (1, 9),
];

pub const MCBPC_STUFFING: u8 = 20;

/// CBPY for intra macroblocks, indexed by the 4-bit pattern.
const CBPY: [(u32, u8); 16] = [
    (3, 4), (5, 5), (4, 5), (9, 4), (3, 5), (7, 4), (2, 6), (11, 4), (2, 5), (3, 6), (5, 4),
    (10, 4), (4, 4), (8, 4), (6, 4), (3, 2),
];

/// Motion vector magnitude codes 0..=32.
const MVTAB: [(u32, u8); 33] = [
    (1, 1), (1, 2), (1, 3), (1, 4), (3, 6), (5, 7), (4, 7), (3, 7), (11, 9), (10, 9), (9, 9),
    (17, 10), (16, 10), (15, 10), (14, 10), (13, 10), (12, 10), (11, 10), (10, 10), (9, 10),
    (8, 10), (7, 10), (6, 10), (5, 10), (4, 10), (7, 11), (6, 11), (5, 11), (4, 11), (3, 11),
    (2, 11), (3, 12), (2, 12),
];

const DC_LUM: [(u32, u8); 13] = [
    (3, 3), (3, 2), (2, 2), (2, 3), (1, 3), (1, 4), (1, 5), (1, 6), (1, 7), (1, 8), (1, 9),
    (1, 10), (1, 11),
];

const DC_CHROM: [(u32, u8); 13] = [
    (3, 2), (2, 2), (1, 2), (1, 3), (1, 4), (1, 5), (1, 6), (1, 7), (1, 8), (1, 9), (1, 10),
    (1, 11), (1, 12),
];

/// Escape code shared by both TCOEF tables.
const TCOEF_ESCAPE: (u32, u8) = (3, 7);

/// Intra TCOEF `(code, len, run, level)`; the first 67 entries have last = 0.
const TCOEF_INTRA: [(u32, u8, u8, u8); 102] = [
    (2, 2, 0, 1), (6, 3, 0, 2), (15, 4, 0, 3), (13, 5, 0, 4), (12, 5, 0, 5), (21, 6, 0, 6),
    (19, 6, 0, 7), (18, 6, 0, 8), (23, 7, 0, 9), (31, 8, 0, 10), (30, 8, 0, 11), (29, 8, 0, 12),
    (37, 9, 0, 13), (36, 9, 0, 14), (35, 9, 0, 15), (33, 9, 0, 16), (33, 10, 0, 17),
    (32, 10, 0, 18), (15, 10, 0, 19), (14, 10, 0, 20), (7, 11, 0, 21), (6, 11, 0, 22),
    (32, 11, 0, 23), (33, 11, 0, 24), (80, 12, 0, 25), (81, 12, 0, 26), (82, 12, 0, 27),
    (14, 4, 1, 1), (20, 6, 1, 2), (22, 7, 1, 3), (28, 8, 1, 4), (32, 9, 1, 5), (31, 9, 1, 6),
    (13, 10, 1, 7), (34, 11, 1, 8), (83, 12, 1, 9), (85, 12, 1, 10), (11, 5, 2, 1),
    (21, 7, 2, 2), (30, 9, 2, 3), (12, 10, 2, 4), (86, 12, 2, 5), (17, 6, 3, 1), (27, 8, 3, 2),
    (29, 9, 3, 3), (11, 10, 3, 4), (16, 6, 4, 1), (34, 9, 4, 2), (10, 10, 4, 3), (13, 6, 5, 1),
    (28, 9, 5, 2), (8, 10, 5, 3), (18, 7, 6, 1), (27, 9, 6, 2), (84, 12, 6, 3), (20, 7, 7, 1),
    (26, 9, 7, 2), (87, 12, 7, 3), (25, 8, 8, 1), (9, 10, 8, 2), (24, 8, 9, 1), (35, 11, 9, 2),
    (23, 8, 10, 1), (25, 9, 11, 1), (24, 9, 12, 1), (7, 10, 13, 1), (88, 12, 14, 1),
    // last = 1
    (7, 4, 0, 1), (12, 6, 0, 2), (22, 8, 0, 3), (23, 9, 0, 4), (6, 10, 0, 5), (5, 11, 0, 6),
    (4, 11, 0, 7), (89, 12, 0, 8), (15, 6, 1, 1), (22, 9, 1, 2), (5, 10, 1, 3), (14, 6, 2, 1),
    (4, 10, 2, 2), (17, 7, 3, 1), (36, 11, 3, 2), (16, 7, 4, 1), (37, 11, 4, 2), (19, 7, 5, 1),
    (90, 12, 5, 2), (21, 8, 6, 1), (91, 12, 6, 2), (20, 8, 7, 1), (19, 8, 8, 1), (26, 8, 9, 1),
    (21, 9, 10, 1), (20, 9, 11, 1), (19, 9, 12, 1), (18, 9, 13, 1), (17, 9, 14, 1),
    (38, 11, 15, 1), (39, 11, 16, 1), (92, 12, 17, 1), (93, 12, 18, 1), (94, 12, 19, 1),
    (95, 12, 20, 1),
];
const TCOEF_INTRA_LAST0: usize = 67;

/// Inter TCOEF `(code, len, run, level)`; the first 58 entries have last = 0.
const TCOEF_INTER: [(u32, u8, u8, u8); 102] = [
    (2, 2, 0, 1), (15, 4, 0, 2), (21, 6, 0, 3), (23, 7, 0, 4), (31, 8, 0, 5), (37, 9, 0, 6),
    (36, 9, 0, 7), (33, 10, 0, 8), (32, 10, 0, 9), (7, 11, 0, 10), (6, 11, 0, 11),
    (32, 11, 0, 12), (6, 3, 1, 1), (20, 6, 1, 2), (30, 8, 1, 3), (15, 10, 1, 4), (33, 11, 1, 5),
    (80, 12, 1, 6), (14, 4, 2, 1), (29, 8, 2, 2), (14, 10, 2, 3), (81, 12, 2, 4), (13, 5, 3, 1),
    (35, 9, 3, 2), (13, 10, 3, 3), (12, 5, 4, 1), (34, 9, 4, 2), (82, 12, 4, 3), (11, 5, 5, 1),
    (12, 10, 5, 2), (83, 12, 5, 3), (19, 6, 6, 1), (11, 10, 6, 2), (84, 12, 6, 3), (18, 6, 7, 1),
    (10, 10, 7, 2), (17, 6, 8, 1), (9, 10, 8, 2), (16, 6, 9, 1), (8, 10, 9, 2), (22, 7, 10, 1),
    (85, 12, 10, 2), (21, 7, 11, 1), (20, 7, 12, 1), (28, 8, 13, 1), (27, 8, 14, 1),
    (33, 9, 15, 1), (32, 9, 16, 1), (31, 9, 17, 1), (30, 9, 18, 1), (29, 9, 19, 1),
    (28, 9, 20, 1), (27, 9, 21, 1), (26, 9, 22, 1), (34, 11, 23, 1), (35, 11, 24, 1),
    (86, 12, 25, 1), (87, 12, 26, 1),
    // last = 1
    (7, 4, 0, 1), (25, 9, 0, 2), (5, 11, 0, 3), (15, 6, 1, 1), (4, 11, 1, 2), (14, 6, 2, 1),
    (13, 6, 3, 1), (12, 6, 4, 1), (19, 7, 5, 1), (18, 7, 6, 1), (17, 7, 7, 1), (16, 7, 8, 1),
    (26, 8, 9, 1), (25, 8, 10, 1), (24, 8, 11, 1), (23, 8, 12, 1), (22, 8, 13, 1),
    (21, 8, 14, 1), (20, 8, 15, 1), (19, 8, 16, 1), (24, 9, 17, 1), (23, 9, 18, 1),
    (22, 9, 19, 1), (21, 9, 20, 1), (20, 9, 21, 1), (19, 9, 22, 1), (18, 9, 23, 1),
    (17, 9, 24, 1), (7, 10, 25, 1), (6, 10, 26, 1), (5, 10, 27, 1), (4, 10, 28, 1),
    (36, 11, 29, 1), (37, 11, 30, 1), (38, 11, 31, 1), (39, 11, 32, 1), (88, 12, 33, 1),
    (89, 12, 34, 1), (90, 12, 35, 1), (91, 12, 36, 1), (92, 12, 37, 1), (93, 12, 38, 1),
    (94, 12, 39, 1), (95, 12, 40, 1),
];
const TCOEF_INTER_LAST0: usize = 58;

/// Alternate horizontal scan (intra, AC prediction from above).
pub const ALT_HORIZONTAL_SCAN: [u8; 64] = [
    0, 1, 2, 3, 8, 9, 16, 17, 10, 11, 4, 5, 6, 7, 15, 14, 13, 12, 19, 18, 24, 25, 32, 33, 26, 27,
    20, 21, 22, 23, 28, 29, 30, 31, 34, 35, 40, 41, 48, 49, 42, 43, 36, 37, 38, 39, 44, 45, 46,
    47, 50, 51, 56, 57, 58, 59, 52, 53, 54, 55, 60, 61, 62, 63,
];

/// Alternate vertical scan (intra, AC prediction from the left).
pub const ALT_VERTICAL_SCAN: [u8; 64] = [
    0, 8, 16, 24, 1, 9, 2, 10, 17, 25, 32, 40, 48, 56, 57, 49, 41, 33, 26, 18, 3, 11, 4, 12, 19,
    27, 34, 42, 50, 58, 35, 43, 51, 59, 20, 28, 5, 13, 6, 14, 21, 29, 36, 44, 52, 60, 37, 45, 53,
    61, 22, 30, 7, 15, 23, 31, 38, 46, 54, 62, 39, 47, 55, 63,
];

/// Prefix-free code looked up through a direct table of `2^max_len` slots.
pub struct Vlc<T: Copy> {
    name: &'static str,
    max_len: u32,
    slots: Vec<Option<(T, u8)>>,
}

impl<T: Copy> Vlc<T> {
    fn build(name: &'static str, codes: impl IntoIterator<Item = ((u32, u8), T)>) -> Self {
        let codes: Vec<_> = codes.into_iter().collect();
        let max_len = codes.iter().map(|((_, l), _)| u32::from(*l)).max().unwrap_or(1);
        let mut slots = vec![None; 1 << max_len];
        for ((code, len), sym) in codes {
            let shift = max_len - u32::from(len);
            let base = (code << shift) as usize;
            for s in &mut slots[base..base + (1 << shift)] {
                assert!(s.is_none(), "{name}: overlapping code {code:b}/{len}");
                *s = Some((sym, len));
            }
        }
        Self { name, max_len, slots }
    }

    pub fn decode(&self, r: &mut BitReader<'_>) -> Result<T> {
        let at = r.position();
        match self.slots[r.peek(self.max_len) as usize] {
            Some((sym, len)) => {
                r.skip(usize::from(len))?;
                Ok(sym)
            }
            None => Err(ParseError::Vlc {
                table: self.name,
                bit_offset: at,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tcoef {
    Escape,
    /// Unsigned level; the sign bit follows the code.
    Run { last: bool, run: u8, level: u8 },
}

fn enumerate<const N: usize>(t: &'static [(u32, u8); N]) -> impl Iterator<Item = ((u32, u8), u8)> {
    t.iter().enumerate().map(|(i, &c)| (c, i as u8))
}

pub fn mcbpc_p() -> &'static Vlc<u8> {
    static V: OnceLock<Vlc<u8>> = OnceLock::new();
    V.get_or_init(|| Vlc::build("mcbpc", enumerate(&MCBPC_P)))
}

pub fn cbpy() -> &'static Vlc<u8> {
    static V: OnceLock<Vlc<u8>> = OnceLock::new();
    V.get_or_init(|| Vlc::build("cbpy", enumerate(&CBPY)))
}

pub fn mvd() -> &'static Vlc<u8> {
    static V: OnceLock<Vlc<u8>> = OnceLock::new();
    V.get_or_init(|| Vlc::build("mvd", enumerate(&MVTAB)))
}

pub fn dc_size(luma: bool) -> &'static Vlc<u8> {
    static L: OnceLock<Vlc<u8>> = OnceLock::new();
    static C: OnceLock<Vlc<u8>> = OnceLock::new();
    if luma {
        L.get_or_init(|| Vlc::build("dct_dc_size_luminance", enumerate(&DC_LUM)))
    } else {
        C.get_or_init(|| Vlc::build("dct_dc_size_chrominance", enumerate(&DC_CHROM)))
    }
}

/// Run/level table plus the escape-mode maxima derived from it.
pub struct TcoefTable {
    pub vlc: Vlc<Tcoef>,
    /// `max_level[last][run]`, zero when the run has no entry.
    pub max_level: [[u8; 64]; 2],
    /// `max_run[last][level]`, `None` when the level has no entry.
    pub max_run: [[Option<u8>; 64]; 2],
}

fn build_tcoef(name: &'static str, entries: &'static [(u32, u8, u8, u8); 102], last0: usize) -> TcoefTable {
    let mut max_level = [[0u8; 64]; 2];
    let mut max_run = [[None; 64]; 2];
    let syms = entries.iter().enumerate().map(|(i, &(code, len, run, level))| {
        let last = usize::from(i >= last0);
        let ml = &mut max_level[last][run as usize];
        *ml = (*ml).max(level);
        let mr = &mut max_run[last][level as usize];
        *mr = Some(mr.map_or(run, |m: u8| m.max(run)));
        (
            (code, len),
            Tcoef::Run {
                last: last == 1,
                run,
                level,
            },
        )
    });
    let mut codes: Vec<_> = syms.collect();
    codes.push((TCOEF_ESCAPE, Tcoef::Escape));
    TcoefTable {
        vlc: Vlc::build(name, codes),
        max_level,
        max_run,
    }
}

pub fn tcoef(intra: bool) -> &'static TcoefTable {
    static I: OnceLock<TcoefTable> = OnceLock::new();
    static P: OnceLock<TcoefTable> = OnceLock::new();
    if intra {
        I.get_or_init(|| build_tcoef("tcoef_intra", &TCOEF_INTRA, TCOEF_INTRA_LAST0))
    } else {
        P.get_or_init(|| build_tcoef("tcoef_inter", &TCOEF_INTER, TCOEF_INTER_LAST0))
    }
}
