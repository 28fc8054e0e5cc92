//! Procedural "natural-looking" test images.
//!
//! A shaded "dead leaves" stack of occluding disks over a smooth value-noise
//! background. Power-law disk sizes give the sharp edges, flat patches and
//! heavy-tailed local statistics of photographs.

use rand::Rng;

use crate::imaging::ImageBuffer;
use crate::rng;

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

struct ValueNoise {
    cells: usize,
    grid: Vec<f64>,
}

impl ValueNoise {
    fn new(cells: usize, rng: &mut rng::Rng) -> Self {
        let n = cells + 1;
        Self {
            cells,
            grid: (0..n * n).map(|_| rng.random::<f64>()).collect(),
        }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        let n = self.cells + 1;
        let (gx, gy) = (u * self.cells as f64, v * self.cells as f64);
        let (x0, y0) = ((gx.floor() as usize).min(self.cells - 1), (gy.floor() as usize).min(self.cells - 1));
        let (tx, ty) = (smooth(gx - x0 as f64), smooth(gy - y0 as f64));
        let g = |x: usize, y: usize| self.grid[y * n + x];
        lerp(
            lerp(g(x0, y0), g(x0 + 1, y0), tx),
            lerp(g(x0, y0 + 1), g(x0 + 1, y0 + 1), tx),
            ty,
        )
    }
}

struct Leaf {
    cx: f64,
    cy: f64,
    r: f64,
    color: Vec<f64>,
    shade: (f64, f64),
    stripes: Option<(f64, f64, f64)>,
}

impl Leaf {
    fn value(&self, u: f64, v: f64, c: usize) -> Option<f64> {
        let (du, dv) = (u - self.cx, v - self.cy);
        if du * du + dv * dv > self.r * self.r {
            return None;
        }
        let mut value = self.color[c] + self.shade.0 * du + self.shade.1 * dv;
        if let Some((angle, period, phase)) = self.stripes {
            let t = (du * angle.cos() + dv * angle.sin()) / period + phase;
            if t.rem_euclid(1.0) < 0.5 {
                value *= 0.6;
            }
        }
        Some(value)
    }
}

/// Radius with density proportional to `r^-3` on `[lo, hi]`.
fn leaf_radius(rng: &mut rng::Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    lo / (1.0 - u * (1.0 - (lo / hi).powi(2))).sqrt()
}

/// Deterministic `width x height` texture with `channels` channels.
pub fn texture(width: usize, height: usize, channels: usize, seed: u64) -> ImageBuffer {
    let mut rng = rng::rng(rng::derive(&[seed, 0x7E47]));
    let octaves: Vec<(ValueNoise, f64)> = [(2, 0.6), (4, 0.3), (8, 0.1)]
        .into_iter()
        .map(|(cells, amp)| (ValueNoise::new(cells, &mut rng), amp))
        .collect();
    let tint: Vec<f64> = (0..channels).map(|_| rng.random_range(0.8..1.2)).collect();
    let n_leaves = rng.random_range(20..45);
    let leaves: Vec<Leaf> = (0..n_leaves)
        .map(|_| {
            let gray: f64 = rng.random_range(0.05..0.95);
            Leaf {
                cx: rng.random_range(-0.1..1.1),
                cy: rng.random_range(-0.1..1.1),
                r: leaf_radius(&mut rng, 0.07, 0.5),
                color: (0..channels)
                    .map(|_| (gray + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0))
                    .collect(),
                shade: (rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)),
                stripes: (rng.random::<f64>() < 0.15).then(|| {
                    (
                        rng.random_range(0.0..std::f64::consts::PI),
                        rng.random_range(0.03..0.12),
                        rng.random(),
                    )
                }),
            }
        })
        .collect();

    // 2x2 supersampling softens leaf boundaries the way optics would.
    const SUB: [f64; 2] = [0.25, 0.75];
    let mut data = Vec::with_capacity(width * height * channels);
    let mut px = vec![0.0; channels];
    for y in 0..height {
        for x in 0..width {
            px.iter_mut().for_each(|p| *p = 0.0);
            for sy in SUB {
                for sx in SUB {
                    let (u, v) = ((x as f64 + sx) / width as f64, (y as f64 + sy) / height as f64);
                    let top = leaves.iter().rev().find(|l| l.value(u, v, 0).is_some());
                    let base: f64 = octaves.iter().map(|(n, a)| a * n.at(u, v)).sum();
                    for (c, p) in px.iter_mut().enumerate() {
                        *p += match top {
                            Some(leaf) => leaf.value(u, v, c).unwrap_or(0.0),
                            None => base * tint[c],
                        };
                    }
                }
            }
            data.extend(px.iter().map(|p| (p / 4.0).clamp(0.0, 1.0)));
        }
    }
    ImageBuffer::new(width, height, channels, data).expect("shape by construction")
}
