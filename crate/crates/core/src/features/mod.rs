//! Feature extraction: native NSS statistics, a seeded filter bank, and
//! externally computed embeddings.

mod embed;
mod filterbank;
mod ggd;
mod nss;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use embed::{load_embeddings, read_embeddings, save_embeddings, write_embeddings, EMBED_FORMAT};
pub use filterbank::{filterbank_features, FilterBankSpec, Pooling, ALLOWED_SIZES};
pub use ggd::{fit_aggd, fit_ggd, moment_ratio, solve_shape, AggdFit, GgdFit};
pub use nss::{mscn, nss_features, MSCN_MIN_SIDE, NSS_DIM};

use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub image_id: String,
    pub extractor_id: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(image_id: impl Into<String>, extractor_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let image_id = image_id.into();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature vector", format!("{image_id} has non-finite values")));
        }
        Ok(FeatureVector { image_id, extractor_id: extractor_id.into(), values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// A feature extractor, identified by a stable string id.
///
/// | id | extractor |
/// |----|-----------|
/// | `nss-v1` | [`nss_features`] |
/// | `filterbank-v1:sizes=1,3,5:n=8:seed=0` | [`filterbank_features`] |
/// | `external:<name>:<dim>` | vectors loaded with [`load_embeddings`] |
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extractor {
    Nss,
    FilterBank(FilterBankSpec),
    External { name: String, dim: usize },
}

impl Default for Extractor {
    fn default() -> Self {
        Extractor::Nss
    }
}

impl Extractor {
    pub fn id(&self) -> String {
        self.to_string()
    }

    pub fn dim(&self) -> usize {
        match self {
            Extractor::Nss => NSS_DIM,
            Extractor::FilterBank(spec) => spec.dim(),
            Extractor::External { dim, .. } => *dim,
        }
    }

    pub fn is_native(&self) -> bool {
        !matches!(self, Extractor::External { .. })
    }

    pub fn extract(&self, image_id: &str, img: &ImageBuffer) -> Result<FeatureVector> {
        let values = match self {
            Extractor::Nss => nss_features(img)?,
            Extractor::FilterBank(spec) => filterbank_features(img, spec)?,
            Extractor::External { name, .. } => {
                return Err(Error::invalid(
                    "extractor",
                    format!("external:{name} vectors must be loaded from an embedding file"),
                ))
            }
        };
        FeatureVector::new(image_id, self.id(), values)
    }

    /// Extracts in parallel; the output keeps the input order.
    pub fn extract_batch<T: AsRef<str> + Sync>(
        &self,
        items: &[(T, ImageBuffer)],
    ) -> Vec<Result<FeatureVector>> {
        items
            .par_iter()
            .map(|(id, img)| self.extract(id.as_ref(), img))
            .collect()
    }
}

impl fmt::Display for Extractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extractor::Nss => f.write_str("nss-v1"),
            Extractor::FilterBank(s) => {
                let sizes: Vec<String> = s.kernel_sizes.iter().map(|k| k.to_string()).collect();
                write!(f, "filterbank-v1:sizes={}:n={}:seed={}", sizes.join(","), s.filters_per_size, s.seed)
            }
            Extractor::External { name, dim } => write!(f, "external:{name}:{dim}"),
        }
    }
}

impl FromStr for Extractor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::invalid("extractor id", format!("{s:?}: {reason}"));
        if s == "nss" || s == "nss-v1" {
            return Ok(Extractor::Nss);
        }
        if s == "filterbank" {
            return Ok(Extractor::FilterBank(FilterBankSpec::default()));
        }
        if let Some(rest) = s.strip_prefix("filterbank-v1") {
            let mut spec = FilterBankSpec::default();
            for part in rest.split(':').filter(|p| !p.is_empty()) {
                let (key, value) = part.split_once('=').ok_or_else(|| bad("expected key=value"))?;
                match key {
                    "sizes" => {
                        spec.kernel_sizes = value
                            .split(',')
                            .map(|v| v.parse().map_err(|_| bad("bad kernel size")))
                            .collect::<Result<_>>()?
                    }
                    "n" => spec.filters_per_size = value.parse().map_err(|_| bad("bad filter count"))?,
                    "seed" => spec.seed = value.parse().map_err(|_| bad("bad seed"))?,
                    _ => return Err(bad("unknown key")),
                }
            }
            spec.validate()?;
            return Ok(Extractor::FilterBank(spec));
        }
        if let Some(rest) = s.strip_prefix("external:") {
            let (name, dim) = rest.rsplit_once(':').ok_or_else(|| bad("expected external:<name>:<dim>"))?;
            let dim = dim.parse().map_err(|_| bad("bad dimension"))?;
            if name.is_empty() || dim == 0 {
                return Err(bad("empty name or zero dimension"));
            }
            return Ok(Extractor::External { name: name.into(), dim });
        }
        Err(bad("unknown extractor"))
    }
}
