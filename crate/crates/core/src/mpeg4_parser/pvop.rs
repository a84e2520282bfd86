//! P-VOP macroblock layer: one vector per macroblock plus luminance levels.

use std::fmt;

use crate::codec_features::{CoeffBlock, FrameDims, MotionVector, MotionVectorField, ResidualBlockPlane};
use crate::mini_encoder::dct::{zigzag_index_of, ZIGZAG};

use super::bitreader::BitReader;
use super::coeffs::{decode_block_coeffs, BlockKind};
use super::headers::{VolHeader, VopHeader};
use super::mv::{decode_mv_component, decode_mv_predictor, wrap_mv_component};
use super::tables::{cbpy, dc_size, mcbpc_p, ALT_HORIZONTAL_SCAN, ALT_VERTICAL_SCAN, MCBPC_STUFFING};
use super::{ParseError, Result};

const DQUANT: [i32; 4] = [-1, -2, 1, 2];
const INTRA_DC_THRESHOLD: [u8; 8] = [99, 13, 15, 17, 19, 21, 23, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbKind {
    Skipped,
    Inter,
    Inter4v,
    Intra { ac_pred: bool },
}

/// Per-macroblock record produced when tracing is enabled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MbTrace {
    /// Index of the VOP in the stream, counting every VOP.
    pub frame: usize,
    pub mb_x: usize,
    pub mb_y: usize,
    pub bit_offset: usize,
    pub kind: MbKind,
    pub qp: u8,
    /// Decoded vectors per 8x8 luma block, in the codec's reference-offset sign.
    pub codec_mvs: [MotionVector; 4],
    /// Luma levels per 8x8 block as `(zigzag_index, value)`.
    pub luma: [Vec<(u8, i16)>; 4],
}

impl fmt::Display for MbTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            MbKind::Skipped => "skip",
            MbKind::Inter => "inter",
            MbKind::Inter4v => "inter4v",
            MbKind::Intra { ac_pred: false } => "intra",
            MbKind::Intra { ac_pred: true } => "intra+acpred",
        };
        write!(
            f,
            "vop {} mb ({},{}) @{} {} qp {} mv",
            self.frame, self.mb_x, self.mb_y, self.bit_offset, kind, self.qp
        )?;
        for v in &self.codec_mvs {
            write!(f, " ({},{})", v.dx, v.dy)?;
        }
        for (i, b) in self.luma.iter().enumerate() {
            if !b.is_empty() {
                write!(f, " | b{i}")?;
                for (k, v) in b {
                    write!(f, " {k}:{v}")?;
                }
            }
        }
        Ok(())
    }
}

fn dc_scaler(qp: u8) -> i32 {
    let q = i32::from(qp);
    match q {
        ..=4 => 8,
        5..=8 => 2 * q,
        9..=24 => q + 8,
        _ => 2 * q - 16,
    }
}

fn rounded_div(a: i32, b: i32) -> i32 {
    if a > 0 {
        (a + (b >> 1)) / b
    } else {
        (a - (b >> 1)) / b
    }
}

/// Per-VOP decoding state on the 8x8 luma block grid.
struct State {
    cols: usize,
    rows: usize,
    /// Reference-offset vectors per 8x8 block.
    mv: Vec<MotionVector>,
    /// Reconstructed DC (QF * scaler) of intra blocks; 1024 elsewhere.
    dc: Vec<i32>,
    /// Top row (positions 1..8) then left column (8, 16, .., 56) of intra blocks.
    ac: Vec<[i32; 14]>,
    mb_qp: Vec<u8>,
    packet_start: usize,
}

impl State {
    fn new(dims: FrameDims) -> Self {
        let (cols, rows) = (dims.mb_cols(), dims.mb_rows());
        let n = 4 * cols * rows;
        Self {
            cols,
            rows,
            mv: vec![MotionVector::ZERO; n],
            dc: vec![1024; n],
            ac: vec![[0; 14]; n],
            mb_qp: vec![0; cols * rows],
            packet_start: 0,
        }
    }

    fn bw(&self) -> usize {
        2 * self.cols
    }

    fn in_grid(&self, bx: isize, by: isize) -> bool {
        bx >= 0 && by >= 0 && (bx as usize) < self.bw() && (by as usize) < 2 * self.rows
    }

    /// Block lies inside the VOP and in the current video packet.
    fn available(&self, bx: isize, by: isize) -> bool {
        self.in_grid(bx, by) && (by as usize / 2) * self.cols + bx as usize / 2 >= self.packet_start
    }

    fn b8(&self, bx: usize, by: usize) -> usize {
        by * self.bw() + bx
    }

    fn mb_mvs(&self, mb_x: usize, mb_y: usize) -> [MotionVector; 4] {
        let (bx, by) = (2 * mb_x, 2 * mb_y);
        [
            self.mv[self.b8(bx, by)],
            self.mv[self.b8(bx + 1, by)],
            self.mv[self.b8(bx, by + 1)],
            self.mv[self.b8(bx + 1, by + 1)],
        ]
    }

    fn mv_candidate(&self, bx: isize, by: isize) -> Option<MotionVector> {
        self.available(bx, by).then(|| self.mv[self.b8(bx as usize, by as usize)])
    }

    fn predict_mv(&self, bx: usize, by: usize, block: usize) -> MotionVector {
        const ABOVE_RIGHT: [isize; 4] = [2, 1, 1, -1];
        let (x, y) = (bx as isize, by as isize);
        decode_mv_predictor(
            self.mv_candidate(x - 1, y),
            self.mv_candidate(x, y - 1),
            self.mv_candidate(x + ABOVE_RIGHT[block], y - 1),
        )
    }

    fn dc_at(&self, bx: isize, by: isize) -> i32 {
        if self.available(bx, by) {
            self.dc[self.b8(bx as usize, by as usize)]
        } else {
            1024
        }
    }
}

struct MbContext {
    mb_x: usize,
    mb_y: usize,
    qp: u8,
    fcode: u8,
}

/// Reads the stuffing that byte-aligns the stream: a 0 then 1s.
fn stuffing_len(r: &BitReader<'_>) -> Option<usize> {
    let k = 8 - r.position() % 8;
    let want = (1u32 << (k - 1)) - 1;
    (r.bits_left() >= k && r.peek(k as u32) == want).then_some(k)
}

fn at_resync_marker(r: &BitReader<'_>, fcode: u8) -> bool {
    let Some(k) = stuffing_len(r) else {
        return false;
    };
    let zeros = 15 + u32::from(fcode);
    let mut probe = r.clone();
    if probe.skip(k).is_err() || probe.bits_left() < zeros as usize + 1 {
        return false;
    }
    probe.peek(zeros + 1) == 1
}

/// Consumes the trailing stuffing of a VOP and checks that a start code or
/// the end of the stream follows.
pub(crate) fn finish_vop(r: &mut BitReader<'_>) -> Result<()> {
    let at = r.position();
    let bad = || ParseError::Syntax {
        what: "VOP data does not end at a start code".into(),
        bit_offset: at,
    };
    let k = stuffing_len(r).ok_or_else(bad)?;
    r.skip(k)?;
    let rest = &r.data()[r.byte_pos()..];
    if rest.is_empty() || rest.starts_with(&[0, 0, 1]) {
        Ok(())
    } else {
        Err(bad())
    }
}

pub(crate) struct PVopResult {
    pub mv: MotionVectorField,
    pub residual: ResidualBlockPlane,
}

pub(crate) fn decode_pvop(
    r: &mut BitReader<'_>,
    vol: &VolHeader,
    vop: &VopHeader,
    dims: FrameDims,
    frame: usize,
    mut trace: Option<&mut Vec<MbTrace>>,
) -> Result<PVopResult> {
    let mut st = State::new(dims);
    let mut residual = ResidualBlockPlane::empty(dims, u16::from(vop.quant))?;
    let mut kinds = Vec::with_capacity(dims.mb_count());
    let mb_count = dims.mb_count();
    let mb_num_bits = (usize::BITS - (mb_count - 1).leading_zeros()).max(1);
    let mut qp = vop.quant;

    for k in 0..mb_count {
        if k > 0 && !vol.resync_marker_disable && at_resync_marker(r, vop.fcode_forward) {
            qp = video_packet_header(r, vol, vop, k, mb_num_bits)?;
            st.packet_start = k;
            log::trace!("video packet at MB {k}, qp {qp}");
        }
        let mut ctx = MbContext {
            mb_x: k % st.cols,
            mb_y: k / st.cols,
            qp,
            fcode: vop.fcode_forward,
        };
        let at = r.position();
        let (kind, luma) = decode_macroblock(r, &mut st, &mut ctx, vop)?;
        qp = ctx.qp;
        st.mb_qp[k] = qp;

        kinds.push(kind);
        let (bx, by) = (2 * ctx.mb_x, 2 * ctx.mb_y);
        let codec_mvs = st.mb_mvs(ctx.mb_x, ctx.mb_y);
        for (i, coeffs) in luma.iter().enumerate() {
            if !coeffs.is_empty() {
                let block = CoeffBlock::new(coeffs.clone())?;
                residual.insert((by + i / 2) as u16, (bx + i % 2) as u16, block)?;
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(MbTrace {
                frame,
                mb_x: ctx.mb_x,
                mb_y: ctx.mb_y,
                bit_offset: at,
                kind,
                qp,
                codec_mvs,
                luma,
            });
        }
    }
    finish_vop(r)?;
    // collapsed after the whole VOP: a later packet start can still rewrite
    // the previous macroblock's fourth vector
    let mut field = MotionVectorField::zeros(dims);
    for (k, kind) in kinds.into_iter().enumerate() {
        let (x, y) = (k % st.cols, k / st.cols);
        field.set(x, y, collapse(&st.mb_mvs(x, y), kind));
    }
    Ok(PVopResult { mv: field, residual })
}

/// Forward content motion for one macroblock: the negated codec vector, or
/// the rounded mean of four.
fn collapse(mvs: &[MotionVector; 4], kind: MbKind) -> MotionVector {
    match kind {
        MbKind::Inter4v => {
            let mean = |s: i32| -> i16 {
                let q = (s.abs() + 2) / 4;
                (if s < 0 { -q } else { q }) as i16
            };
            let sx: i32 = mvs.iter().map(|v| i32::from(v.dx)).sum();
            let sy: i32 = mvs.iter().map(|v| i32::from(v.dy)).sum();
            MotionVector::new(-mean(sx), -mean(sy))
        }
        _ => MotionVector::new(-mvs[0].dx, -mvs[0].dy),
    }
}

fn video_packet_header(
    r: &mut BitReader<'_>,
    vol: &VolHeader,
    vop: &VopHeader,
    expected_mb: usize,
    mb_num_bits: u32,
) -> Result<u8> {
    let k = stuffing_len(r).expect("checked by at_resync_marker");
    r.skip(k)?;
    r.skip(16 + usize::from(vop.fcode_forward))?;
    let at = r.position();
    let mb = r.read(mb_num_bits)? as usize;
    if mb != expected_mb {
        return Err(ParseError::Syntax {
            what: format!("video packet starts at macroblock {mb}, expected {expected_mb}"),
            bit_offset: at,
        });
    }
    let at = r.position();
    let qp = r.read(5)? as u8;
    if qp == 0 {
        return Err(ParseError::Syntax {
            what: "video packet quant_scale is 0".into(),
            bit_offset: at,
        });
    }
    if r.read_bit()? {
        while r.read_bit()? {}
        r.marker("modulo_time_base")?;
        r.skip(vol.time_increment_bits as usize)?;
        r.marker("vop_time_increment")?;
        let at = r.position();
        let coding_type = r.read(2)?;
        if coding_type != 1 {
            return Err(ParseError::Syntax {
                what: format!("video packet header repeats coding type {coding_type} inside a P-VOP"),
                bit_offset: at,
            });
        }
        r.skip(3)?; // intra_dc_vlc_thr
        r.skip(3)?; // vop_fcode_forward
    }
    Ok(qp)
}

fn decode_macroblock(
    r: &mut BitReader<'_>,
    st: &mut State,
    ctx: &mut MbContext,
    vop: &VopHeader,
) -> Result<(MbKind, [Vec<(u8, i16)>; 4])> {
    let (bx, by) = (2 * ctx.mb_x, 2 * ctx.mb_y);
    let mcbpc = loop {
        if r.read_bit()? {
            // not_coded: zero vector, no residual
            for i in 0..4 {
                let idx = st.b8(bx + i % 2, by + i / 2);
                st.mv[idx] = MotionVector::ZERO;
            }
            return Ok((MbKind::Skipped, Default::default()));
        }
        let v = mcbpc_p().decode(r)?;
        if v != MCBPC_STUFFING {
            break v;
        }
    };
    let intra = mcbpc & 4 != 0;
    let dquant = mcbpc & 8 != 0;
    let four = mcbpc & 16 != 0;
    let ac_pred = intra && r.read_bit()?;
    let mut cbpy_bits = u32::from(cbpy().decode(r)?);
    if !intra {
        cbpy_bits ^= 0xF;
    }
    let cbp = u32::from(mcbpc & 3) | (cbpy_bits << 2);
    let use_dc_vlc = ctx.qp < INTRA_DC_THRESHOLD[usize::from(vop.intra_dc_vlc_thr)];
    if dquant {
        let d = DQUANT[r.read(2)? as usize];
        ctx.qp = (i32::from(ctx.qp) + d).clamp(1, 31) as u8;
    }

    if intra {
        for i in 0..4 {
            let idx = st.b8(bx + i % 2, by + i / 2);
            st.mv[idx] = MotionVector::ZERO;
        }
        let mut luma: [Vec<(u8, i16)>; 4] = Default::default();
        for (n, out) in luma.iter_mut().enumerate() {
            *out = decode_intra_luma(r, st, ctx, n, ac_pred, use_dc_vlc, cbp & (32 >> n) != 0)?;
        }
        for n in 4..6 {
            if use_dc_vlc {
                read_dc_diff(r, false)?;
            }
            let kind = if use_dc_vlc { BlockKind::IntraAc } else { BlockKind::IntraFull };
            decode_block_coeffs(r, kind, cbp & (32 >> n) != 0)?;
        }
        return Ok((MbKind::Intra { ac_pred }, luma));
    }

    if four {
        for i in 0..4 {
            let (x, y) = (bx + i % 2, by + i / 2);
            if i == 2 && bx > 0 && ctx.mb_y * st.cols + ctx.mb_x == st.packet_start {
                // The reference decoder clears the unavailable left candidate
                // in place, so the previous macroblock's fourth vector reads
                // as zero from here on.
                let left = st.b8(bx - 1, y);
                st.mv[left] = MotionVector::ZERO;
            }
            let pred = st.predict_mv(x, y, i);
            let v = read_mv(r, pred, ctx.fcode)?;
            let idx = st.b8(x, y);
            st.mv[idx] = v;
        }
    } else {
        let pred = st.predict_mv(bx, by, 0);
        let v = read_mv(r, pred, ctx.fcode)?;
        for i in 0..4 {
            let idx = st.b8(bx + i % 2, by + i / 2);
            st.mv[idx] = v;
        }
    }
    let mut luma: [Vec<(u8, i16)>; 4] = Default::default();
    for (n, out) in luma.iter_mut().enumerate() {
        *out = decode_block_coeffs(r, BlockKind::Inter, cbp & (32 >> n) != 0)?;
    }
    for n in 4..6 {
        decode_block_coeffs(r, BlockKind::Inter, cbp & (32 >> n) != 0)?;
    }
    let kind = if four { MbKind::Inter4v } else { MbKind::Inter };
    Ok((kind, luma))
}

fn read_mv(r: &mut BitReader<'_>, pred: MotionVector, fcode: u8) -> Result<MotionVector> {
    let dx = decode_mv_component(r, fcode)?;
    let dy = decode_mv_component(r, fcode)?;
    Ok(MotionVector::new(
        wrap_mv_component(pred.dx, dx, fcode),
        wrap_mv_component(pred.dy, dy, fcode),
    ))
}

fn read_dc_diff(r: &mut BitReader<'_>, luma: bool) -> Result<i32> {
    let size = u32::from(dc_size(luma).decode(r)?);
    if size == 0 {
        return Ok(0);
    }
    let code = r.read(size)? as i32;
    let diff = if code >> (size - 1) == 0 {
        code - ((1 << size) - 1)
    } else {
        code
    };
    if size > 8 {
        r.marker("dct_dc_differential")?;
    }
    Ok(diff)
}

/// Decodes one intra luma block, undoing DC and AC prediction. Returns the
/// quantized levels at zigzag indices.
fn decode_intra_luma(
    r: &mut BitReader<'_>,
    st: &mut State,
    ctx: &MbContext,
    n: usize,
    ac_pred: bool,
    use_dc_vlc: bool,
    coded: bool,
) -> Result<Vec<(u8, i16)>> {
    let bx = 2 * ctx.mb_x + n % 2;
    let by = 2 * ctx.mb_y + n / 2;
    let (x, y) = (bx as isize, by as isize);
    let a = st.dc_at(x - 1, y);
    let b = st.dc_at(x - 1, y - 1);
    let c = st.dc_at(x, y - 1);
    let from_top = (a - b).abs() < (b - c).abs();
    let scale = dc_scaler(ctx.qp);
    let pred = ((if from_top { c } else { a }) + (scale >> 1)) / scale;

    let at = r.position();
    let mut blk = [0i32; 64];
    let dc_diff = if use_dc_vlc { read_dc_diff(r, true)? } else { 0 };
    let scan: &[u8; 64] = match (ac_pred, from_top) {
        (false, _) => &ZIGZAG,
        (true, true) => &ALT_HORIZONTAL_SCAN,
        (true, false) => &ALT_VERTICAL_SCAN,
    };
    let kind = if use_dc_vlc { BlockKind::IntraAc } else { BlockKind::IntraFull };
    for (i, level) in decode_block_coeffs(r, kind, coded)? {
        blk[scan[usize::from(i)] as usize] = i32::from(level);
    }
    if use_dc_vlc {
        blk[0] = dc_diff;
    }
    blk[0] += pred;
    let idx = st.b8(bx, by);
    st.dc[idx] = (blk[0] * scale).clamp(0, 2047);

    if ac_pred {
        if from_top {
            if st.in_grid(x, y - 1) {
                let nb = st.b8(bx, by - 1);
                let nb_qp = st.mb_qp[(by - 1) / 2 * st.cols + bx / 2];
                let rescale = n < 2 && ctx.mb_y > 0 && nb_qp != ctx.qp;
                for i in 1..8 {
                    let v = st.ac[nb][i - 1];
                    blk[i] += if rescale { rounded_div(v * i32::from(nb_qp), i32::from(ctx.qp)) } else { v };
                }
            }
        } else if st.in_grid(x - 1, y) {
            let nb = st.b8(bx - 1, by);
            let nb_qp = st.mb_qp[by / 2 * st.cols + (bx - 1) / 2];
            let rescale = n % 2 == 0 && ctx.mb_x > 0 && nb_qp != ctx.qp;
            for i in 1..8 {
                let v = st.ac[nb][6 + i];
                blk[i * 8] += if rescale { rounded_div(v * i32::from(nb_qp), i32::from(ctx.qp)) } else { v };
            }
        }
    }
    let mut saved = [0i32; 14];
    for i in 1..8 {
        saved[i - 1] = blk[i];
        saved[6 + i] = blk[i * 8];
    }
    st.ac[idx] = saved;

    let mut out = Vec::new();
    for (pos, &v) in blk.iter().enumerate() {
        if v != 0 {
            let v = i16::try_from(v).map_err(|_| ParseError::Syntax {
                what: format!("intra coefficient {v} out of range"),
                bit_offset: at,
            })?;
            out.push((zigzag_index_of(pos), v));
        }
    }
    out.sort_unstable_by_key(|&(i, _)| i);
    Ok(out)
}
