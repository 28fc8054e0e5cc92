//! Natural-scene-statistics features from MSCN coefficients.
//!
//! Layout (per scale, full then half resolution, 18 values each):
//!
//! | index | value |
//! |-------|-------|
//! | 0, 1  | GGD shape and variance of the MSCN map |
//! | 2..6  | AGGD (shape, mean, left var, right var) of horizontal products |
//! | 6..10 | same for vertical products |
//! | 10..14| main-diagonal products |
//! | 14..18| anti-diagonal products |

use super::ggd::{fit_aggd, fit_ggd};
use crate::error::{Error, Result};
use crate::imaging::{to_grayscale, ImageBuffer};

pub const NSS_DIM: usize = 36;
pub const MSCN_MIN_SIDE: usize = 16;
const WINDOW: usize = 7;
const WINDOW_SIGMA: f64 = 7.0 / 6.0;
const STABILIZER: f64 = 1.0 / 255.0;
const ZERO_SNAP: f64 = 1e-9;

/// Mean-subtracted contrast-normalized coefficients of a grayscale image.
/// Magnitudes below `1e-9` are set to exactly zero.
pub fn mscn(img: &ImageBuffer) -> Result<Vec<f64>> {
    if img.channels() != 1 {
        return Err(Error::invalid("mscn input", format!("{} channels", img.channels())));
    }
    if img.width().min(img.height()) < MSCN_MIN_SIDE {
        return Err(Error::Dimension(format!(
            "{}x{} is below the {MSCN_MIN_SIDE}px minimum",
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let taps = gaussian_taps();
    let mu = blur(img.data(), w, h, &taps);
    let sq: Vec<f64> = img.data().iter().map(|v| v * v).collect();
    let mu_sq = blur(&sq, w, h, &taps);
    Ok(img
        .data()
        .iter()
        .zip(mu.iter().zip(&mu_sq))
        .map(|(&i, (&m, &m2))| {
            let sigma = (m2 - m * m).max(0.0).sqrt();
            let v = (i - m) / (sigma + STABILIZER);
            // Rounding residue in flat regions would otherwise pick a random sign.
            if v.abs() < ZERO_SNAP {
                0.0
            } else {
                v
            }
        })
        .collect())
}

/// Normalized 1-D Gaussian; its outer product is the 2-D window.
fn gaussian_taps() -> [f64; WINDOW] {
    let r = (WINDOW / 2) as f64;
    let mut t = [0.0; WINDOW];
    for (i, v) in t.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-(d * d) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let sum: f64 = t.iter().sum();
    t.map(|v| v / sum)
}

/// Separable blur with replicated edges. Needs `w, h >= WINDOW`.
fn blur(plane: &[f64], w: usize, h: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let r = WINDOW / 2;
    let clamp = |i: usize, n: usize| i.saturating_sub(r).min(n - 1);
    let dot = |win: &[f64]| win.iter().zip(taps).map(|(s, t)| s * t).sum::<f64>();
    let mut tmp = vec![0.0; w * h];
    let mut edge = [0.0; WINDOW];
    for (src, dst) in plane.chunks_exact(w).zip(tmp.chunks_exact_mut(w)) {
        for (d, win) in dst[r..w - r].iter_mut().zip(src.windows(WINDOW)) {
            *d = dot(win);
        }
        for x in (0..r).chain(w - r..w) {
            for (k, e) in edge.iter_mut().enumerate() {
                *e = src[clamp(x + k, w)];
            }
            dst[x] = dot(&edge);
        }
    }
    let mut out = vec![0.0; w * h];
    for (y, dst) in out.chunks_exact_mut(w).enumerate() {
        let rows: [&[f64]; WINDOW] = std::array::from_fn(|k| {
            let sy = clamp(y + k, h);
            &tmp[sy * w..(sy + 1) * w]
        });
        for (x, d) in dst.iter_mut().enumerate() {
            *d = (0..WINDOW).map(|k| taps[k] * rows[k][x]).sum();
        }
    }
    out
}

/// Products of each coefficient with its neighbour at `(dx, dy)`.
fn neighbour_products(map: &[f64], w: usize, h: usize, dx: isize, dy: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h - dy {
        for x in 0..w {
            let nx = x as isize + dx;
            if nx < 0 || nx >= w as isize {
                continue;
            }
            out.push(map[y * w + x] * map[(y + dy) * w + nx as usize]);
        }
    }
    out
}

fn scale_features(gray: &ImageBuffer, out: &mut Vec<f64>) -> Result<()> {
    let map = mscn(gray)?;
    let (w, h) = (gray.width(), gray.height());
    let g = fit_ggd(&map)?;
    out.push(g.alpha);
    out.push(g.sigma * g.sigma);
    for (dx, dy) in [(1, 0), (0, 1), (1, 1), (-1, 1)] {
        let a = fit_aggd(&neighbour_products(&map, w, h, dx, dy))?;
        out.extend([a.alpha, a.eta, a.sigma_left.powi(2), a.sigma_right.powi(2)]);
    }
    Ok(())
}

/// The 36-value feature vector (two scales of 18).
pub fn nss_features(img: &ImageBuffer) -> Result<Vec<f64>> {
    let gray = to_grayscale(img);
    let mut out = Vec::with_capacity(NSS_DIM);
    scale_features(&gray, &mut out)?;
    scale_features(&gray.downsample2()?, &mut out)?;
    debug_assert_eq!(out.len(), NSS_DIM);
    Ok(out)
}
