//! Orthonormal 8x8 DCT-II and its inverse.

use std::sync::OnceLock;

fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (k, row) in b.iter_mut().enumerate() {
            let alpha = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (n, v) in row.iter_mut().enumerate() {
                *v = alpha * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / 16.0).cos();
            }
        }
        b
    })
}

/// Forward transform of a row-major block. A constant block `v` maps to a DC
/// coefficient of `8v` and zero AC terms.
pub fn dct8x8(block: &[f64; 64]) -> [f64; 64] {
    let c = basis();
    let mut tmp = [0.0; 64];
    // rows: tmp = X * C^T
    for y in 0..8 {
        for k in 0..8 {
            tmp[y * 8 + k] = (0..8).map(|n| block[y * 8 + n] * c[k][n]).sum();
        }
    }
    let mut out = [0.0; 64];
    // columns: out = C * tmp
    for k in 0..8 {
        for x in 0..8 {
            out[k * 8 + x] = (0..8).map(|n| c[k][n] * tmp[n * 8 + x]).sum();
        }
    }
    out
}

pub fn idct8x8(coeffs: &[f64; 64]) -> [f64; 64] {
    let c = basis();
    let mut tmp = [0.0; 64];
    for k in 0..8 {
        for n in 0..8 {
            tmp[k * 8 + n] = (0..8).map(|j| coeffs[k * 8 + j] * c[j][n]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|k| c[k][y] * tmp[k * 8 + x]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Direct evaluation of the 2-D sum, independent of the separable path.
    fn naive_dct(block: &[f64; 64]) -> [f64; 64] {
        let a = |k: usize| if k == 0 { (0.125f64).sqrt() } else { (0.25f64).sqrt() };
        let mut out = [0.0; 64];
        for u in 0..8 {
            for v in 0..8 {
                let mut s = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        s += block[y * 8 + x]
                            * ((2 * y + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos()
                            * ((2 * x + 1) as f64 * v as f64 * std::f64::consts::PI / 16.0).cos();
                    }
                }
                out[u * 8 + v] = a(u) * a(v) * s;
            }
        }
        out
    }

    #[test]
    fn constant_block_has_only_dc() {
        let out = dct8x8(&[0.3; 64]);
        assert!((out[0] - 2.4).abs() < 1e-12);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-12));
        assert!(dct8x8(&[0.0; 64]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_direct_sum_and_parseval() {
        let mut rng = crate::rng::rng(3);
        for _ in 0..20 {
            let mut b = [0.0; 64];
            b.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let fast = dct8x8(&b);
            let slow = naive_dct(&b);
            for i in 0..64 {
                assert!((fast[i] - slow[i]).abs() < 1e-12);
            }
            let e_in: f64 = b.iter().map(|v| v * v).sum();
            let e_out: f64 = fast.iter().map(|v| v * v).sum();
            assert!((e_in - e_out).abs() < 1e-6);
        }
    }

    #[test]
    fn roundtrip_thousand_blocks() {
        let mut rng = crate::rng::rng(11);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let mut b = [0.0; 64];
            b.iter_mut().for_each(|v| *v = rng.random_range(-128.0..128.0));
            let back = idct8x8(&dct8x8(&b));
            for i in 0..64 {
                worst = worst.max((back[i] - b[i]).abs());
            }
        }
        assert!(worst < 1e-6, "max roundtrip error {worst}");
    }
}
