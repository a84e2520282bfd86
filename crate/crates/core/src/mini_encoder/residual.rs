use crate::codec_features::{CoeffBlock, MotionVectorField, ResidualBlockPlane, BLOCK_SIZE};

use super::dct::{dct8x8, quantize, ZIGZAG};
use super::motion::motion_compensate;
use super::{EncoderError, LumaFrame, Result};

/// Quantized DCT of `cur - mc(ref, mv)` on every 8x8 block.
pub fn compute_residual(
    cur: &LumaFrame,
    reference: &LumaFrame,
    mv: &MotionVectorField,
    quant_scale: u16,
) -> Result<ResidualBlockPlane> {
    residual_with(cur, reference, mv, quant_scale, |_| 0.0)
}

/// As [`compute_residual`], adding `noise(pixel_index)` to each residual sample
/// before the transform.
pub(crate) fn residual_with(
    cur: &LumaFrame,
    reference: &LumaFrame,
    mv: &MotionVectorField,
    quant_scale: u16,
    mut noise: impl FnMut(usize) -> f64,
) -> Result<ResidualBlockPlane> {
    if cur.dims() != reference.dims() || cur.dims() != mv.dims() {
        return Err(EncoderError::DimsMismatch);
    }
    let dims = cur.dims();
    let pred = motion_compensate(reference, mv)?;
    let mut plane = ResidualBlockPlane::empty(dims, quant_scale)?;
    let stride = dims.width() as usize;
    let bs = BLOCK_SIZE as usize;
    for brow in 0..dims.block_rows() {
        for bcol in 0..dims.block_cols() {
            let mut block = [0.0f64; 64];
            for j in 0..bs {
                for i in 0..bs {
                    let idx = (brow * bs + j) * stride + bcol * bs + i;
                    block[j * 8 + i] = f64::from(cur.samples()[idx]) - f64::from(pred.samples()[idx])
                        + noise(idx);
                }
            }
            let coeffs = dct8x8(&block);
            let mut zz = [0i16; 64];
            for (k, &pos) in ZIGZAG.iter().enumerate() {
                zz[k] = quantize(coeffs[pos as usize], quant_scale);
            }
            plane.insert(brow as u16, bcol as u16, CoeffBlock::from_zigzag(&zz))?;
        }
    }
    Ok(plane)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec_features::FrameDims;

    #[test]
    fn constant_offset_on_one_block() {
        let dims = FrameDims::new(32, 32).unwrap();
        let reference = LumaFrame::filled(dims, 100);
        let mut cur = reference.clone();
        for y in 8..16 {
            for x in 16..24 {
                cur.set(x, y, 108);
            }
        }
        let mv = MotionVectorField::zeros(dims);
        let plane = compute_residual(&cur, &reference, &mv, 1).unwrap();
        assert_eq!(plane.nonzero_block_count(), 1);
        assert_eq!(plane.get(1, 2).unwrap().coeffs(), &[(0, 64)]);
        let plane = compute_residual(&cur, &reference, &mv, 3).unwrap();
        assert_eq!(plane.get(1, 2).unwrap().coeffs(), &[(0, 21)]);
    }
}
