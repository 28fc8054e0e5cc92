//! Synthetic distortions at parameterized severities, and the corpus builder.
//!
//! Every distortion is a pure function of `(image, spec)`; the stochastic
//! kinds draw from a generator seeded by `spec.seed` alone.

mod compression;
pub mod dataset;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use compression::{jpeg_quantize_luma, quantization_table};
pub use dataset::{build_dataset, CleanImage, DatasetConfig, DatasetManifest, ManifestEntry, Split};

use crate::error::{Error, Result};
use crate::imaging::{convolve2d, EdgeMode, ImageBuffer, Kernel2D};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    Brightness,
    Contrast,
    MotionBlur,
    Compression,
    DefocusBlur,
    GaussianNoise,
    LowlightNoise,
    None,
}

impl DistortionKind {
    /// The seven distortion types, in table order.
    pub const DISTORTED: [DistortionKind; 7] = [
        DistortionKind::Brightness,
        DistortionKind::Contrast,
        DistortionKind::MotionBlur,
        DistortionKind::Compression,
        DistortionKind::DefocusBlur,
        DistortionKind::GaussianNoise,
        DistortionKind::LowlightNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistortionKind::Brightness => "brightness",
            DistortionKind::Contrast => "contrast",
            DistortionKind::MotionBlur => "motion_blur",
            DistortionKind::Compression => "compression",
            DistortionKind::DefocusBlur => "defocus_blur",
            DistortionKind::GaussianNoise => "gaussian_noise",
            DistortionKind::LowlightNoise => "lowlight_noise",
            DistortionKind::None => "none",
        }
    }

    /// Inclusive degree range; `None` for the undistorted kind.
    pub fn range(self) -> Option<(f64, f64)> {
        Some(match self {
            DistortionKind::Brightness => (0.1, 5.0),
            DistortionKind::Contrast => (0.1, 5.0),
            DistortionKind::MotionBlur => (5.0, 30.0),
            DistortionKind::Compression => (20.0, 50.0),
            DistortionKind::DefocusBlur => (1.0, 20.0),
            DistortionKind::GaussianNoise => (0.05, 0.5),
            DistortionKind::LowlightNoise => (1.0, 100.0),
            DistortionKind::None => return None,
        })
    }

    /// Maps a degree to a severity in `[0, 1]`, 0 being the least distorted.
    ///
    /// Brightness and contrast are two-sided around 1 and use `|ln d| / ln 10`.
    /// Compression degrees are quality factors, so severity is
    /// `(100 - q) / 80`. Motion blur uses `(len - 1) / 29`; the remaining
    /// kinds use `d / max`.
    pub fn severity(self, degree: f64) -> f64 {
        let s = match self {
            DistortionKind::Brightness | DistortionKind::Contrast => degree.ln().abs() / 10f64.ln(),
            DistortionKind::MotionBlur => (degree - 1.0) / 29.0,
            DistortionKind::Compression => (100.0 - degree) / 80.0,
            DistortionKind::DefocusBlur => degree / 20.0,
            DistortionKind::GaussianNoise => degree / 0.5,
            DistortionKind::LowlightNoise => degree / 100.0,
            DistortionKind::None => 0.0,
        };
        s.clamp(0.0, 1.0)
    }

    pub(crate) fn code(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistortionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistortionKind::DISTORTED
            .into_iter()
            .chain([DistortionKind::None])
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("distortion kind", s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub degree: f64,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, degree: f64, seed: u64) -> Result<Self> {
        let spec = Self { kind, degree, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn none() -> Self {
        Self {
            kind: DistortionKind::None,
            degree: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((lo, hi)) = self.kind.range() {
            if !(self.degree >= lo && self.degree <= hi) {
                return Err(Error::DegreeOutOfRange {
                    kind: self.kind.name(),
                    degree: self.degree,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }
}

/// Renders `spec` onto `img`. Brightness 1, contrast 1 and `none` return the
/// input bit-exactly.
pub fn apply_distortion(img: &ImageBuffer, spec: &DistortionSpec) -> Result<ImageBuffer> {
    spec.validate()?;
    let d = spec.degree;
    match spec.kind {
        DistortionKind::None => Ok(img.clone()),
        DistortionKind::Brightness => Ok(img.map_clamped(|p| p * d)),
        DistortionKind::Contrast => Ok(contrast(img, d)),
        DistortionKind::MotionBlur => {
            let k = Kernel2D::motion_line(d.ceil() as usize)?;
            convolve2d(img, &k, EdgeMode::Replicate)
        }
        DistortionKind::DefocusBlur => convolve2d(img, &Kernel2D::disk(d)?, EdgeMode::Replicate),
        DistortionKind::Compression => jpeg_quantize_luma(img, d),
        DistortionKind::GaussianNoise => {
            let mut rng = rng::rng(spec.seed);
            let normal = Normal::new(0.0, d).map_err(|e| Error::invalid("noise", e.to_string()))?;
            Ok(img.map_clamped(|p| p + normal.sample(&mut rng)))
        }
        DistortionKind::LowlightNoise => {
            let lambda = 255.0 / d;
            let mut rng = rng::rng(spec.seed);
            Ok(img.map_clamped(|p| {
                let u: f64 = rng.random();
                poisson_quantile(p * lambda, u) as f64 / lambda
            }))
        }
    }
}

fn contrast(img: &ImageBuffer, c: f64) -> ImageBuffer {
    if c == 1.0 {
        return img.clone();
    }
    let ch = img.channels();
    let n = (img.width() * img.height()) as f64;
    let mut means = vec![0.0; ch];
    for px in img.data().chunks_exact(ch) {
        for (m, &v) in means.iter_mut().zip(px) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mu = means[i % ch];
            (mu + c * (p - mu)).clamp(0.0, 1.0)
        })
        .collect();
    ImageBuffer::from_raw(img.width(), img.height(), ch, data)
}

/// Smallest `k` with `P(X <= k) >= u` for `X ~ Poisson(mean)`.
///
/// Driving every sample from one uniform keeps the output a deterministic
/// function of the generator stream, independent of the mean.
fn poisson_quantile(mean: f64, u: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let mut k = 0u64;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    // The tail mass beyond mean + 40 sqrt(mean) + 40 is far below f64 resolution.
    let cap = (mean + 40.0 * mean.sqrt() + 40.0) as u64;
    while cdf < u && k < cap {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
    }
    k
}

/// Draws `count` degrees uniformly from the kind's range, sorted ascending.
pub fn sample_degrees(kind: DistortionKind, count: usize, seed: u64) -> Result<Vec<f64>> {
    let (lo, hi) = kind
        .range()
        .ok_or_else(|| Error::invalid("distortion kind", "cannot sample degrees for `none`"))?;
    let mut rng = rng::rng(seed);
    let mut out: Vec<f64> = (0..count).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}
