use crate::codec_features::{MotionVector, MotionVectorField, MB_SIZE};

use super::{EncoderError, LumaFrame, Result};

/// Exhaustive integer-pel SAD search per 16x16 macroblock.
///
/// Candidate `(dx, dy)` compares the current block at `(x, y)` against the
/// reference block at `(x - dx, y - dy)`. Candidates whose reference block
/// leaves the frame are skipped. Ties go to the smaller `|dx| + |dy|`, then
/// to the earlier candidate in raster order (dy outer, dx inner).
pub fn estimate_motion(cur: &LumaFrame, reference: &LumaFrame, range: u32) -> Result<MotionVectorField> {
    if cur.dims() != reference.dims() {
        return Err(EncoderError::DimsMismatch);
    }
    if range == 0 {
        return Err(EncoderError::InvalidRange(range));
    }
    let dims = cur.dims();
    let (w, h) = (dims.width() as i32, dims.height() as i32);
    let r = range as i32;
    let bs = MB_SIZE as i32;
    let mut field = MotionVectorField::zeros(dims);
    for mby in 0..dims.mb_rows() {
        for mbx in 0..dims.mb_cols() {
            let bx = mbx as i32 * bs;
            let by = mby as i32 * bs;
            let mut best: Option<(u32, i32, i32, i32)> = None;
            for dy in -r..=r {
                for dx in -r..=r {
                    let rx = bx - dx;
                    let ry = by - dy;
                    if rx < 0 || ry < 0 || rx + bs > w || ry + bs > h {
                        continue;
                    }
                    let sad = block_sad(cur, reference, bx as usize, by as usize, rx as usize, ry as usize);
                    let key = (sad, dx.abs() + dy.abs());
                    if best.is_none_or(|(s, l, _, _)| key < (s, l)) {
                        best = Some((sad, key.1, dx, dy));
                    }
                }
            }
            // (0, 0) is always in frame, so a candidate exists.
            let (_, _, dx, dy) = best.expect("zero candidate");
            field.set(mbx, mby, MotionVector::new((2 * dx) as i16, (2 * dy) as i16));
        }
    }
    Ok(field)
}

fn block_sad(cur: &LumaFrame, reference: &LumaFrame, cx: usize, cy: usize, rx: usize, ry: usize) -> u32 {
    let stride = cur.dims().width() as usize;
    let a = cur.samples();
    let b = reference.samples();
    let mut sad = 0u32;
    for j in 0..MB_SIZE as usize {
        let ra = &a[(cy + j) * stride + cx..][..MB_SIZE as usize];
        let rb = &b[(ry + j) * stride + rx..][..MB_SIZE as usize];
        sad += ra
            .iter()
            .zip(rb)
            .map(|(&p, &q)| u32::from(p.abs_diff(q)))
            .sum::<u32>();
    }
    sad
}

/// Predicts `cur` from `reference` using one half-pel vector per macroblock.
///
/// Reference coordinates are clamped to the frame edge. Half-pel positions
/// average the neighbouring samples with upward rounding.
pub fn motion_compensate(reference: &LumaFrame, mv: &MotionVectorField) -> Result<LumaFrame> {
    if reference.dims() != mv.dims() {
        return Err(EncoderError::DimsMismatch);
    }
    let dims = reference.dims();
    let (w, h) = (dims.width() as i32, dims.height() as i32);
    let px = |x: i32, y: i32| -> u32 {
        let x = x.clamp(0, w - 1) as usize;
        let y = y.clamp(0, h - 1) as usize;
        u32::from(reference.samples()[y * w as usize + x])
    };
    let mut out = vec![0u8; dims.pixel_count()];
    for mby in 0..dims.mb_rows() {
        for mbx in 0..dims.mb_cols() {
            let v = mv.get(mbx, mby);
            // source = position - mv, in half-pel units
            let (sx2, sy2) = (-i32::from(v.dx), -i32::from(v.dy));
            let (ix, fx) = (sx2.div_euclid(2), sx2.rem_euclid(2));
            let (iy, fy) = (sy2.div_euclid(2), sy2.rem_euclid(2));
            for j in 0..MB_SIZE as i32 {
                for i in 0..MB_SIZE as i32 {
                    let x = mbx as i32 * MB_SIZE as i32 + i;
                    let y = mby as i32 * MB_SIZE as i32 + j;
                    let (x0, y0) = (x + ix, y + iy);
                    let val = match (fx, fy) {
                        (0, 0) => px(x0, y0),
                        (1, 0) => (px(x0, y0) + px(x0 + 1, y0) + 1) >> 1,
                        (0, 1) => (px(x0, y0) + px(x0, y0 + 1) + 1) >> 1,
                        _ => {
                            (px(x0, y0) + px(x0 + 1, y0) + px(x0, y0 + 1) + px(x0 + 1, y0 + 1) + 2)
                                >> 2
                        }
                    };
                    out[y as usize * w as usize + x as usize] = val as u8;
                }
            }
        }
    }
    LumaFrame::new(dims, out)
}
