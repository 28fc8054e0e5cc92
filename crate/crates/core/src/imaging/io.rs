//! 8-bit PNG and binary PPM (P6) file boundary.
//!
//! Decoding maps a stored sample `s` to `s / 255`; encoding rounds
//! `255 * v` half away from zero after clamping to `[0, 1]`.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use super::ImageBuffer;
use crate::error::{Error, Result};

pub fn encode_sample(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn decode_sample(s: u8) -> f64 {
    f64::from(s) / 255.0
}

pub fn from_dynamic(img: &DynamicImage) -> ImageBuffer {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            let gray = img.to_luma8();
            ImageBuffer::from_raw(w, h, 1, gray.into_raw().into_iter().map(decode_sample).collect())
        }
        _ => {
            let rgb = img.to_rgb8();
            ImageBuffer::from_raw(w, h, 3, rgb.into_raw().into_iter().map(decode_sample).collect())
        }
    }
}

pub fn to_dynamic(img: &ImageBuffer) -> DynamicImage {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img.data().iter().map(|&v| encode_sample(v)).collect();
    if img.channels() == 1 {
        DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("shape checked"))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("shape checked"))
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(from_dynamic(&img))
}

/// Writes PNG or PPM depending on the extension (`.png`, `.ppm`). PPM output
/// is always P6, so grayscale images are expanded to three channels.
pub fn write_image(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let (dynamic, format) = match ext.as_deref() {
        Some("png") => (to_dynamic(img), ImageFormat::Png),
        Some("ppm") => (DynamicImage::ImageRgb8(to_dynamic(img).to_rgb8()), ImageFormat::Pnm),
        other => {
            return Err(Error::invalid(
                "image path",
                format!("{}: unsupported extension {other:?}", path.display()),
            ))
        }
    };
    dynamic
        .save_with_format(path, format)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}
