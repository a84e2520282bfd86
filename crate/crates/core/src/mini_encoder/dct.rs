//! Orthonormal 8x8 DCT-II and zigzag scan.

use std::sync::OnceLock;

/// Natural (row-major) position of each zigzag index.
pub const ZIGZAG: [u8; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// Zigzag index of each natural position.
pub fn zigzag_index_of(natural: usize) -> u8 {
    static INV: OnceLock<[u8; 64]> = OnceLock::new();
    INV.get_or_init(|| {
        let mut inv = [0u8; 64];
        for (i, &p) in ZIGZAG.iter().enumerate() {
            inv[p as usize] = i as u8;
        }
        inv
    })[natural]
}

fn basis() -> &'static [[f64; 8]; 8] {
    static C: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    C.get_or_init(|| {
        let mut c = [[0.0; 8]; 8];
        for (k, row) in c.iter_mut().enumerate() {
            let a = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (n, v) in row.iter_mut().enumerate() {
                *v = a * ((2 * n + 1) as f64 * k as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        c
    })
}

/// Forward transform of a row-major block. Output is row-major by (v, u).
pub fn dct8x8(block: &[f64; 64]) -> [f64; 64] {
    let c = basis();
    let mut tmp = [0.0; 64];
    // rows
    for y in 0..8 {
        for k in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                s += c[k][x] * block[y * 8 + x];
            }
            tmp[y * 8 + k] = s;
        }
    }
    let mut out = [0.0; 64];
    for u in 0..8 {
        for k in 0..8 {
            let mut s = 0.0;
            for y in 0..8 {
                s += c[k][y] * tmp[y * 8 + u];
            }
            out[k * 8 + u] = s;
        }
    }
    out
}

pub fn idct8x8(coeffs: &[f64; 64]) -> [f64; 64] {
    let c = basis();
    let mut tmp = [0.0; 64];
    for u in 0..8 {
        for y in 0..8 {
            let mut s = 0.0;
            for k in 0..8 {
                s += c[k][y] * coeffs[k * 8 + u];
            }
            tmp[y * 8 + u] = s;
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for k in 0..8 {
                s += c[k][x] * tmp[y * 8 + k];
            }
            out[y * 8 + x] = s;
        }
    }
    out
}

/// Rounds half away from zero and saturates to i16.
pub fn quantize(coeff: f64, quant_scale: u16) -> i16 {
    let q = (coeff / f64::from(quant_scale)).round();
    q.clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}
