//! A seeded synthetic classifier whose confidence decays with distortion
//! severity, standing in for a bank of pretrained networks.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distortions::{DistortionKind, ManifestEntry};
use crate::error::{Error, Result};
use crate::opinion::ClassifierRecord;
use crate::rng;

const TRUE_CLASS: u64 = 0x7C1;
const CONFUSER: u64 = 0xC0F;
const NOISE: u64 = 0x401;

/// Blur kinds fall off fastest; brightness is the most tolerated.
pub fn default_decay() -> BTreeMap<DistortionKind, f64> {
    use DistortionKind::*;
    BTreeMap::from([
        (Brightness, 1.0),
        (Contrast, 1.3),
        (MotionBlur, 2.6),
        (Compression, 1.6),
        (DefocusBlur, 3.0),
        (GaussianNoise, 2.4),
        (LowlightNoise, 2.0),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateClassifier {
    pub name: String,
    pub n_classes: usize,
    /// Correct-class confidence on clean images.
    pub base_confidence: f64,
    /// Exponential decay rate per kind, applied to severity in `[0, 1]`.
    pub decay: BTreeMap<DistortionKind, f64>,
    /// Half-width of the uniform confidence jitter.
    pub noise_scale: f64,
    /// Width, in classes, of the bump the wrong-class mass falls into.
    pub bump_width: f64,
    pub seed: u64,
}

impl Default for SurrogateClassifier {
    fn default() -> Self {
        SurrogateClassifier {
            name: "surrogate".into(),
            n_classes: 10,
            base_confidence: 0.9,
            decay: default_decay(),
            noise_scale: 0.05,
            bump_width: 1.0,
            seed: 0,
        }
    }
}

impl SurrogateClassifier {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: String| Err(Error::invalid("surrogate", r));
        if self.n_classes < 2 {
            return bad(format!("{} classes (need 2)", self.n_classes));
        }
        if !(0.0..=1.0).contains(&self.base_confidence) {
            return bad(format!("base confidence {} outside [0, 1]", self.base_confidence));
        }
        if !(self.noise_scale >= 0.0) || !(self.bump_width > 0.0) {
            return bad("noise_scale must be >= 0 and bump_width > 0".into());
        }
        if let Some((k, d)) = self.decay.iter().find(|(_, d)| !(**d >= 0.0 && d.is_finite())) {
            return bad(format!("decay for {k} is {d}"));
        }
        Ok(())
    }

    /// Ground-truth class of a clean image, shared by every surrogate.
    pub fn true_class(&self, group: &str) -> usize {
        (rng::derive(&[rng::hash_str(group), TRUE_CLASS]) % self.n_classes as u64) as usize
    }

    /// Correct-class confidence before it is written into a distribution.
    pub fn confidence(&self, entry: &ManifestEntry) -> Result<f64> {
        let kind = entry.spec.kind;
        let decay = match kind {
            DistortionKind::None => 0.0,
            k => *self
                .decay
                .get(&k)
                .ok_or_else(|| Error::invalid("surrogate", format!("{} has no decay rate for {k}", self.name)))?,
        };
        let severity = kind.severity(entry.spec.degree);
        let mut r = rng::rng(rng::derive(&[
            self.seed,
            rng::hash_str(&entry.id),
            kind.code(),
            entry.spec.degree.to_bits(),
            NOISE,
        ]));
        let jitter = if self.noise_scale > 0.0 {
            r.random_range(-self.noise_scale..=self.noise_scale)
        } else {
            0.0
        };
        let floor = 1.0 / self.n_classes as f64;
        Ok((self.base_confidence * (-decay * severity).exp() + jitter).clamp(floor, 1.0))
    }

    pub fn predict(&self, entry: &ManifestEntry) -> Result<ClassifierRecord> {
        let n = self.n_classes;
        let c = self.confidence(entry)?;
        let group = entry.group();
        let truth = self.true_class(group);
        let pick = rng::derive(&[self.seed, rng::hash_str(group), entry.spec.kind.code(), CONFUSER]);
        let mut confuser = (pick % (n as u64 - 1)) as usize;
        if confuser >= truth {
            confuser += 1;
        }
        let mut probs: Vec<f64> = (0..n)
            .map(|j| {
                if j == truth {
                    return 0.0;
                }
                let d = j.abs_diff(confuser).min(n - j.abs_diff(confuser)) as f64;
                (-d * d / (2.0 * self.bump_width * self.bump_width)).exp() + 1e-3
            })
            .collect();
        let mass: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p *= (1.0 - c) / mass);
        probs[truth] = c;
        ClassifierRecord::new(entry.id.clone(), self.name.clone(), probs, Some(truth))
    }

    /// Records for every entry, in manifest order.
    pub fn label(&self, entries: &[ManifestEntry]) -> Result<Vec<ClassifierRecord>> {
        self.validate()?;
        entries.par_iter().map(|e| self.predict(e)).collect()
    }
}

/// Three surrogates with different base confidences and sensitivities.
pub fn default_bank(seed: u64) -> Vec<SurrogateClassifier> {
    [("surrogate-a", 0.92, 1.0), ("surrogate-b", 0.88, 1.2), ("surrogate-c", 0.9, 0.85)]
        .into_iter()
        .enumerate()
        .map(|(i, (name, c0, scale))| SurrogateClassifier {
            name: name.into(),
            base_confidence: c0,
            decay: default_decay().into_iter().map(|(k, d)| (k, d * scale)).collect(),
            seed: rng::derive(&[seed, i as u64]),
            ..Default::default()
        })
        .collect()
}

/// The classifier whose outcomes evaluation is scored against; not part of
/// the labeling bank.
pub fn evaluation_classifier(seed: u64) -> SurrogateClassifier {
    SurrogateClassifier {
        name: "surrogate-eval".into(),
        seed: rng::derive(&[seed, 0xE7A1]),
        ..Default::default()
    }
}
