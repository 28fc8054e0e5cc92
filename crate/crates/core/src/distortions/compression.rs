use crate::error::{Error, Result};
use crate::imaging::dct::{dct8x8, idct8x8};
use crate::imaging::{ImageBuffer, LUMA_WEIGHTS};

const LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Standard luminance table scaled for `quality` with the IJG law.
pub fn quantization_table(quality: f64) -> Result<[f64; 64]> {
    if !(quality > 0.0 && quality <= 100.0) {
        return Err(Error::invalid("quality", format!("{quality} not in (0, 100]")));
    }
    let scale = if quality < 50.0 {
        5000.0 / quality
    } else {
        200.0 - 2.0 * quality
    };
    let mut out = [0.0; 64];
    for (o, &q) in out.iter_mut().zip(&LUMA_TABLE) {
        *o = ((f64::from(q) * scale + 50.0) / 100.0).floor().clamp(1.0, 255.0);
    }
    Ok(out)
}

/// Quantizes the luma of every 8x8 block at the given quality and leaves
/// chroma untouched. Partial edge blocks are padded by replication.
pub fn jpeg_quantize_luma(img: &ImageBuffer, quality: f64) -> Result<ImageBuffer> {
    let table = quantization_table(quality)?;
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let [wr, wg, wb] = LUMA_WEIGHTS;

    let mut luma: Vec<f64> = if ch == 1 {
        img.data().to_vec()
    } else {
        img.data()
            .chunks_exact(3)
            .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
            .collect()
    };
    let original_luma = luma.clone();

    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut block = [0.0; 64];
            for y in 0..8 {
                let sy = (by + y).min(h - 1);
                for x in 0..8 {
                    let sx = (bx + x).min(w - 1);
                    block[y * 8 + x] = original_luma[sy * w + sx] * 255.0 - 128.0;
                }
            }
            let mut coeffs = dct8x8(&block);
            for (c, q) in coeffs.iter_mut().zip(&table) {
                *c = (*c / q).round() * q;
            }
            let back = idct8x8(&coeffs);
            for y in 0..8.min(h - by) {
                for x in 0..8.min(w - bx) {
                    luma[(by + y) * w + bx + x] = (back[y * 8 + x] + 128.0) / 255.0;
                }
            }
        }
    }

    let data = if ch == 1 {
        luma.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
    } else {
        let mut out = Vec::with_capacity(img.data().len());
        for (p, &y) in img.data().chunks_exact(3).zip(&luma) {
            // Full-range YCbCr; chroma is recovered from the source pixel.
            let cb = -0.168_736 * p[0] - 0.331_264 * p[1] + 0.5 * p[2];
            let cr = 0.5 * p[0] - 0.418_688 * p[1] - 0.081_312 * p[2];
            out.push((y + 1.402 * cr).clamp(0.0, 1.0));
            out.push((y - 0.344_136 * cb - 0.714_136 * cr).clamp(0.0, 1.0));
            out.push((y + 1.772 * cb).clamp(0.0, 1.0));
        }
        out
    };
    Ok(ImageBuffer::new(w, h, ch, data).expect("shape preserved"))
}
