use crate::codec_features::MotionVector;

use super::bitreader::BitReader;
use super::tables::mvd;
use super::Result;

fn median3(a: i16, b: i16, c: i16) -> i16 {
    a.max(b).min(a.min(b).max(c))
}

/// Componentwise median of the three spatial candidates.
///
/// One missing candidate counts as zero, two missing leave the third as the
/// predictor, and three missing give zero.
pub fn decode_mv_predictor(
    left: Option<MotionVector>,
    above: Option<MotionVector>,
    above_right: Option<MotionVector>,
) -> MotionVector {
    let present: Vec<MotionVector> = [left, above, above_right].into_iter().flatten().collect();
    match present.len() {
        0 => MotionVector::ZERO,
        1 => present[0],
        _ => {
            let [a, b, c] = [left, above, above_right].map(|v| v.unwrap_or(MotionVector::ZERO));
            MotionVector::new(median3(a.dx, b.dx, c.dx), median3(a.dy, b.dy, c.dy))
        }
    }
}

/// One differential component: magnitude code, sign, and `fcode - 1`
/// residual bits.
pub fn decode_mv_component(r: &mut BitReader<'_>, fcode: u8) -> Result<i32> {
    let code = i32::from(mvd().decode(r)?);
    if code == 0 {
        return Ok(0);
    }
    let negative = r.read_bit()?;
    let shift = u32::from(fcode - 1);
    let mut val = code;
    if shift > 0 {
        val = (((val - 1) << shift) | r.read(shift)? as i32) + 1;
    }
    Ok(if negative { -val } else { val })
}

/// Differential vector `(dx, dy)` in half-pel units, before range wrapping.
pub fn decode_mv_delta(r: &mut BitReader<'_>, fcode: u8) -> Result<(i32, i32)> {
    let dx = decode_mv_component(r, fcode)?;
    let dy = decode_mv_component(r, fcode)?;
    Ok((dx, dy))
}

/// Adds a delta to a predictor component and wraps into `[-32f, 32f - 1]`,
/// `f = 2^(fcode-1)`.
pub fn wrap_mv_component(pred: i16, delta: i32, fcode: u8) -> i16 {
    let bits = 5 + u32::from(fcode);
    let v = i32::from(pred) + delta;
    let shift = 32 - bits;
    ((v << shift) >> shift) as i16
}
