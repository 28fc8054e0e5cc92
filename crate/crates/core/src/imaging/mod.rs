//! Pixel rasters and the pure image primitives everything else builds on.
//!
//! Samples live in `[0, 1]` as `f64`, channel-interleaved and row-major.
//! Conversion to and from 8-bit happens only at the file boundary (see
//! [`io`]).

pub(crate) mod convolve;
pub mod dct;
pub mod io;

pub use convolve::{convolve2d, convolve2d_unclamped, EdgeMode, Kernel2D};

use crate::error::{Error, Result};

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid("image", format!("{channels} channels (expected 1 or 3)")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Dimension(format!(
                "{} samples for {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid("image", format!("non-finite sample {bad}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image from a per-pixel closure returning one value per channel.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Applies `f` to every sample and clamps the result to `[0, 1]`.
    pub fn map_clamped(&self, mut f: impl FnMut(f64) -> f64) -> ImageBuffer {
        let data = self.data.iter().map(|&v| clamp01(f(v))).collect();
        Self::from_raw(self.width, self.height, self.channels, data)
    }

    /// Splits the interleaved samples into one plane per channel.
    pub fn planes(&self) -> Vec<Vec<f64>> {
        (0..self.channels)
            .map(|c| self.data.iter().skip(c).step_by(self.channels).copied().collect())
            .collect()
    }

    pub(crate) fn from_planes(width: usize, height: usize, planes: &[Vec<f64>]) -> Self {
        let channels = planes.len();
        let mut data = vec![0.0; width * height * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, &v) in plane.iter().enumerate() {
                data[i * channels + c] = v;
            }
        }
        Self::from_raw(width, height, channels, data)
    }

    /// Rounds every sample to the nearest 8-bit level, as writing and
    /// re-reading an 8-bit file would.
    pub fn quantize_8bit(&self) -> ImageBuffer {
        self.map_clamped(|v| f64::from(io::encode_sample(v)) / 255.0)
    }

    pub fn flip_horizontal(&self) -> ImageBuffer {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                let base = (y * self.width + x) * self.channels;
                data.extend_from_slice(&self.data[base..base + self.channels]);
            }
        }
        Self::from_raw(self.width, self.height, self.channels, data)
    }

    /// 2x2 box average; odd trailing rows and columns are dropped.
    pub fn downsample2(&self) -> Result<ImageBuffer> {
        let (w, h) = (self.width / 2, self.height / 2);
        if w == 0 || h == 0 {
            return Err(Error::Dimension(format!(
                "cannot halve {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * self.channels);
        for y in 0..h {
            for x in 0..w {
                for c in 0..self.channels {
                    let s = self.get(2 * x, 2 * y, c)
                        + self.get(2 * x + 1, 2 * y, c)
                        + self.get(2 * x, 2 * y + 1, c)
                        + self.get(2 * x + 1, 2 * y + 1, c);
                    data.push(0.25 * s);
                }
            }
        }
        Ok(Self::from_raw(w, h, self.channels, data))
    }
}

#[inline]
pub(crate) fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// BT.601 luma. Single-channel input is returned unchanged.
pub fn to_grayscale(img: &ImageBuffer) -> ImageBuffer {
    if img.channels == 1 {
        return img.clone();
    }
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| clamp01(wr * px[0] + wg * px[1] + wb * px[2]))
        .collect();
    ImageBuffer::from_raw(img.width, img.height, 1, data)
}

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Dimension(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// Peak signal-to-noise ratio with peak 1.0, in decibels.
///
/// Identical images yield `f64::INFINITY`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    let mse = mse(a, b)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_weights() {
        let zero = ImageBuffer::filled(4, 4, 3, 0.0).unwrap();
        assert!(to_grayscale(&zero).data().iter().all(|&v| v == 0.0));
        let one = ImageBuffer::filled(4, 4, 3, 1.0).unwrap();
        assert!(to_grayscale(&one).data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let red = ImageBuffer::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let g = to_grayscale(&red);
        assert_eq!(g.channels(), 1);
        assert!((g.data()[0] - 0.299).abs() < 1e-15);
        let gray = ImageBuffer::filled(3, 2, 1, 0.4).unwrap();
        assert_eq!(to_grayscale(&gray), gray);
    }

    #[test]
    fn psnr_reference_points() {
        let z = ImageBuffer::filled(8, 8, 1, 0.0).unwrap();
        assert_eq!(psnr(&z, &z).unwrap(), f64::INFINITY);
        let one = ImageBuffer::filled(8, 8, 1, 1.0).unwrap();
        assert!(psnr(&z, &one).unwrap().abs() < 1e-12);
        let tenth = ImageBuffer::filled(8, 8, 1, 0.1).unwrap();
        assert!((psnr(&z, &tenth).unwrap() - 20.0).abs() < 1e-9);
        let other = ImageBuffer::filled(8, 4, 1, 0.0).unwrap();
        assert!(matches!(psnr(&z, &other), Err(Error::Dimension(_))));
    }

    #[test]
    fn constructor_rejects_bad_shapes() {
        assert!(ImageBuffer::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ImageBuffer::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn planes_roundtrip() {
        let img = ImageBuffer::from_fn(3, 2, 3, |x, y, c| (x + 3 * y + 7 * c) as f64 / 30.0).unwrap();
        let back = ImageBuffer::from_planes(3, 2, &img.planes());
        assert_eq!(back, img);
    }

    #[test]
    fn downsample_box_average() {
        let img = ImageBuffer::new(2, 2, 1, vec![0.0, 0.2, 0.4, 0.6]).unwrap();
        let half = img.downsample2().unwrap();
        assert_eq!((half.width(), half.height()), (1, 1));
        assert!((half.data()[0] - 0.3).abs() < 1e-15);
    }
}
