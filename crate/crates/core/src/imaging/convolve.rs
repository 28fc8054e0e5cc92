use crate::error::{Error, Result};

use super::{clamp01, ImageBuffer};

/// Square convolution kernel with odd side length.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    size: usize,
    taps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeMode {
    #[default]
    Replicate,
}

impl Kernel2D {
    pub fn new(size: usize, taps: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 {
            return Err(Error::invalid("kernel", format!("even side length {size}")));
        }
        if taps.len() != size * size {
            return Err(Error::invalid(
                "kernel",
                format!("{} taps for side {size}", taps.len()),
            ));
        }
        Ok(Self { size, taps })
    }

    pub fn identity() -> Self {
        Self {
            size: 1,
            taps: vec![1.0],
        }
    }

    /// Normalized `size x size` box filter.
    pub fn boxed(size: usize) -> Result<Self> {
        let n = (size * size) as f64;
        Self::new(size, vec![1.0 / n; size * size])
    }

    /// Normalized isotropic Gaussian sampled on a `size x size` grid.
    pub fn gaussian(size: usize, sigma: f64) -> Result<Self> {
        let r = (size / 2) as f64;
        let mut taps = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as f64 - r, y as f64 - r);
                taps.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
            }
        }
        let mut k = Self::new(size, taps)?;
        k.normalize();
        Ok(k)
    }

    /// Horizontal line of total weight one spanning `length` pixels.
    ///
    /// Odd lengths use `length` equal taps. Even lengths are centered on an
    /// odd support of `length + 1` with half-weight end taps.
    pub fn motion_line(length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::invalid("kernel", "zero-length motion line"));
        }
        let size = if length % 2 == 1 { length } else { length + 1 };
        let mut taps = vec![0.0; size * size];
        let row = size / 2;
        let w = 1.0 / length as f64;
        for x in 0..size {
            taps[row * size + x] = w;
        }
        if length % 2 == 0 {
            taps[row * size] = 0.5 * w;
            taps[row * size + size - 1] = 0.5 * w;
        }
        Self::new(size, taps)
    }

    /// Normalized disk of the given radius, with edge pixels weighted by
    /// their 8x8-supersampled coverage.
    pub fn disk(radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid("kernel", format!("disk radius {radius}")));
        }
        let half = radius.ceil() as usize;
        let size = 2 * half + 1;
        const SS: usize = 8;
        let r2 = radius * radius;
        let mut taps = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let mut hits = 0usize;
                for sy in 0..SS {
                    for sx in 0..SS {
                        let dy = y as f64 - half as f64 + (sy as f64 + 0.5) / SS as f64 - 0.5;
                        let dx = x as f64 - half as f64 + (sx as f64 + 0.5) / SS as f64 - 0.5;
                        if dx * dx + dy * dy <= r2 {
                            hits += 1;
                        }
                    }
                }
                taps.push(hits as f64);
            }
        }
        let mut k = Self::new(size, taps)?;
        k.normalize();
        Ok(k)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn normalize(&mut self) {
        let s: f64 = self.taps.iter().sum();
        if s != 0.0 {
            self.taps.iter_mut().for_each(|t| *t /= s);
        }
    }
}

/// Replicate-padded convolution of one plane, without clamping.
pub(crate) fn convolve_plane(plane: &[f64], width: usize, height: usize, k: &Kernel2D) -> Vec<f64> {
    let r = (k.size / 2) as isize;
    let mut out = vec![0.0; plane.len()];
    // Column index table for every horizontal offset, so the inner loop is a
    // gather with no branching.
    let mut cols = vec![0usize; width];
    for (ky, krow) in k.taps.chunks_exact(k.size).enumerate() {
        let dy = ky as isize - r;
        for (kx, &w) in krow.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let dx = kx as isize - r;
            for (x, c) in cols.iter_mut().enumerate() {
                *c = (x as isize + dx).clamp(0, width as isize - 1) as usize;
            }
            for y in 0..height {
                let sy = (y as isize + dy).clamp(0, height as isize - 1) as usize;
                let src = &plane[sy * width..(sy + 1) * width];
                let dst = &mut out[y * width..(y + 1) * width];
                for (d, &sx) in dst.iter_mut().zip(&cols) {
                    *d += w * src[sx];
                }
            }
        }
    }
    out
}

fn check_fits(img: &ImageBuffer, k: &Kernel2D) -> Result<()> {
    if k.size > img.width().min(img.height()) {
        return Err(Error::Dimension(format!(
            "kernel side {} exceeds image {}x{}",
            k.size,
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Convolution without the final clamp; linear in the input.
pub fn convolve2d_unclamped(img: &ImageBuffer, k: &Kernel2D, _edge: EdgeMode) -> Result<Vec<f64>> {
    check_fits(img, k)?;
    let (w, h) = (img.width(), img.height());
    if img.channels() == 1 {
        return Ok(convolve_plane(img.data(), w, h, k));
    }
    let planes: Vec<Vec<f64>> = img
        .planes()
        .iter()
        .map(|p| convolve_plane(p, w, h, k))
        .collect();
    Ok(ImageBuffer::from_planes(w, h, &planes).into_data())
}

/// Same-size convolution with replicate padding, clamped to `[0, 1]`.
pub fn convolve2d(img: &ImageBuffer, k: &Kernel2D, edge: EdgeMode) -> Result<ImageBuffer> {
    let mut data = convolve2d_unclamped(img, k, edge)?;
    data.iter_mut().for_each(|v| *v = clamp01(*v));
    Ok(ImageBuffer::from_raw(img.width(), img.height(), img.channels(), data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize, c: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, c, |x, y, ch| ((x * 7 + y * 13 + ch * 5) % 17) as f64 / 16.0).unwrap()
    }

    #[test]
    fn identity_kernel_is_exact() {
        let img = ramp(9, 7, 3);
        let out = convolve2d(&img, &Kernel2D::identity(), EdgeMode::Replicate).unwrap();
        assert_eq!(out, img);
        let line = convolve2d(&img, &Kernel2D::motion_line(1).unwrap(), EdgeMode::Replicate).unwrap();
        assert_eq!(line, img);
    }

    #[test]
    fn box_preserves_constant() {
        let img = ImageBuffer::filled(6, 6, 1, 0.37).unwrap();
        let out = convolve2d(&img, &Kernel2D::boxed(3).unwrap(), EdgeMode::Replicate).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn impulse_reproduces_kernel() {
        let k = Kernel2D::gaussian(5, 1.1).unwrap();
        let mut data = vec![0.0; 11 * 11];
        data[5 * 11 + 5] = 1.0;
        let img = ImageBuffer::new(11, 11, 1, data).unwrap();
        let out = convolve2d(&img, &k, EdgeMode::Replicate).unwrap();
        // Symmetric kernel: correlation and convolution coincide, so the
        // response around the impulse is the kernel itself.
        for ky in 0..5 {
            for kx in 0..5 {
                let got = out.get(3 + kx, 3 + ky, 0);
                assert!((got - k.taps()[ky * 5 + kx]).abs() < 1e-15);
            }
        }
        let total: f64 = out.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let img = ramp(4, 4, 1);
        let err = convolve2d(&img, &Kernel2D::boxed(5).unwrap(), EdgeMode::Replicate).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn kernel_shapes() {
        assert!(Kernel2D::new(2, vec![0.0; 4]).is_err());
        assert!(Kernel2D::new(3, vec![0.0; 8]).is_err());
        let even = Kernel2D::motion_line(6).unwrap();
        assert_eq!(even.size(), 7);
        assert!((even.taps().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let disk = Kernel2D::disk(2.5).unwrap();
        assert_eq!(disk.size(), 7);
        assert!((disk.taps().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(disk.taps()[0], 0.0);
    }

    proptest! {
        #[test]
        fn unclamped_path_is_linear(
            a in prop::collection::vec(-1.0f64..1.0, 64),
            b in prop::collection::vec(-1.0f64..1.0, 64),
            alpha in -2.0f64..2.0,
            beta in -2.0f64..2.0,
        ) {
            let k = Kernel2D::disk(1.5).unwrap();
            let ia = ImageBuffer::from_raw(8, 8, 1, a.clone());
            let ib = ImageBuffer::from_raw(8, 8, 1, b.clone());
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
            let im = ImageBuffer::from_raw(8, 8, 1, mix);
            let ca = convolve2d_unclamped(&ia, &k, EdgeMode::Replicate).unwrap();
            let cb = convolve2d_unclamped(&ib, &k, EdgeMode::Replicate).unwrap();
            let cm = convolve2d_unclamped(&im, &k, EdgeMode::Replicate).unwrap();
            for i in 0..64 {
                prop_assert!((cm[i] - (alpha * ca[i] + beta * cb[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn convolution_is_pure() {
        let img = ramp(16, 12, 3);
        let k = Kernel2D::disk(3.0).unwrap();
        let a = convolve2d(&img, &k, EdgeMode::Replicate).unwrap();
        let b = convolve2d(&img, &k, EdgeMode::Replicate).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
