use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{convolve::convolve_plane, to_grayscale, ImageBuffer, Kernel2D};
use crate::rng;

pub const ALLOWED_SIZES: [usize; 3] = [1, 3, 5];
const FILTER_STREAM: u64 = 0xF17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    MeanAndStd,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterBankSpec {
    pub kernel_sizes: Vec<usize>,
    pub filters_per_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub pooling: Pooling,
}

impl Default for FilterBankSpec {
    fn default() -> Self {
        FilterBankSpec {
            kernel_sizes: ALLOWED_SIZES.to_vec(),
            filters_per_size: 8,
            seed: 0,
            pooling: Pooling::MeanAndStd,
        }
    }
}

impl FilterBankSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_sizes.is_empty() {
            return Err(Error::invalid("filter bank", "no kernel sizes"));
        }
        if let Some(s) = self.kernel_sizes.iter().find(|s| !ALLOWED_SIZES.contains(s)) {
            return Err(Error::invalid("filter bank", format!("kernel size {s} not in {{1,3,5}}")));
        }
        if self.filters_per_size == 0 {
            return Err(Error::invalid("filter bank", "filters_per_size must be at least 1"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.kernel_sizes.len() * self.filters_per_size
    }

    pub fn filters(&self) -> Result<Vec<Kernel2D>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.kernel_sizes.len() * self.filters_per_size);
        for &size in &self.kernel_sizes {
            for f in 0..self.filters_per_size {
                let mut r = rng::rng(rng::derive(&[self.seed, FILTER_STREAM, size as u64, f as u64]));
                let mut taps: Vec<f64> = (0..size * size).map(|_| StandardNormal.sample(&mut r)).collect();
                let norm = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
                if norm > 0.0 {
                    taps.iter_mut().for_each(|t| *t /= norm);
                }
                out.push(Kernel2D::new(size, taps)?);
            }
        }
        Ok(out)
    }
}

/// Rectified responses of each filter, pooled as `[mean, std]` per filter in
/// `kernel_sizes` then filter-index order.
pub fn filterbank_features(img: &ImageBuffer, spec: &FilterBankSpec) -> Result<Vec<f64>> {
    let filters = spec.filters()?;
    let gray = to_grayscale(img);
    let (w, h) = (gray.width(), gray.height());
    if w.min(h) < 5 {
        return Err(Error::Dimension(format!("{w}x{h} is smaller than the 5px kernel")));
    }
    let n = (w * h) as f64;
    let mut out = Vec::with_capacity(spec.dim());
    for k in &filters {
        let resp = convolve_plane(gray.data(), w, h, k);
        let mean = resp.iter().map(|v| v.max(0.0)).sum::<f64>() / n;
        let var = resp.iter().map(|v| (v.max(0.0) - mean).powi(2)).sum::<f64>() / n;
        out.push(mean);
        out.push(var.sqrt());
    }
    Ok(out)
}
