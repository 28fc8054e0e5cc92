//! Classifier-opinion scores.
//!
//! A classifier's opinion of a distorted image is how much its output moved
//! relative to the clean original. The supervised score compares
//! `CCC + NCCR` (confidence and normalized rank of the true class); the
//! semi-supervised score is a distance between the two softmax vectors.
//! Averaging over a bank of classifiers gives MCOS and MCOS_SS.

mod distance;
mod records;
mod select;
mod targets;

pub use distance::{distance, DistanceKind, EPSILON};
pub use records::{read_softmax, write_softmax, RecordStore, SOFTMAX_FORMAT};
pub use select::{select_distance, DistanceRow, DistanceSelection};
pub use targets::{label_targets, TargetSet, TARGETS_FORMAT};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One classifier's softmax output for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierRecord {
    pub image_id: String,
    pub classifier: String,
    probs: Vec<f64>,
    pub true_class: Option<usize>,
}

impl ClassifierRecord {
    pub fn new(
        image_id: impl Into<String>,
        classifier: impl Into<String>,
        probs: Vec<f64>,
        true_class: Option<usize>,
    ) -> Result<Self> {
        distance::check_distribution(&probs, "softmax record")?;
        if let Some(t) = true_class {
            if t >= probs.len() {
                return Err(Error::invalid(
                    "softmax record",
                    format!("true class {t} outside 0..{}", probs.len()),
                ));
            }
        }
        Ok(Self {
            image_id: image_id.into(),
            classifier: classifier.into(),
            probs,
            true_class,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_classes(&self) -> usize {
        self.probs.len()
    }

    fn require_true_class(&self) -> Result<usize> {
        self.true_class
            .ok_or_else(|| Error::MissingTrueClass(self.image_id.clone()))
    }

    /// Index of the highest probability; ties go to the lower index.
    pub fn top1(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// 1-based rank of `class` in descending probability order. Equal
    /// probabilities rank the lower class index first.
    pub fn rank_of(&self, class: usize) -> usize {
        let pt = self.probs[class];
        1 + self
            .probs
            .iter()
            .enumerate()
            .filter(|&(k, &p)| p > pt || (p == pt && k < class))
            .count()
    }

    /// Whether the true class is among the `k` highest-ranked classes.
    pub fn top_k_correct(&self, k: usize) -> Result<bool> {
        Ok(self.rank_of(self.require_true_class()?) <= k)
    }
}

/// Confidence of the correct class.
pub fn ccc(rec: &ClassifierRecord) -> Result<f64> {
    Ok(rec.probs[rec.require_true_class()?])
}

/// Normalized correct-class rank, `(N - CCR) / N`.
pub fn nccr(rec: &ClassifierRecord) -> Result<f64> {
    let n = rec.n_classes();
    let rank = rec.rank_of(rec.require_true_class()?);
    Ok((n - rank) as f64 / n as f64)
}

/// A clean/distorted record pair from the same classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionPair {
    pub original: ClassifierRecord,
    pub distorted: ClassifierRecord,
}

impl OpinionPair {
    /// Both records must come from the same classifier over the same label
    /// space. That they show the same underlying scene is the caller's
    /// responsibility.
    pub fn new(original: ClassifierRecord, distorted: ClassifierRecord) -> Result<Self> {
        if original.classifier != distorted.classifier {
            return Err(Error::invalid(
                "opinion pair",
                format!("classifiers `{}` and `{}` differ", original.classifier, distorted.classifier),
            ));
        }
        if original.n_classes() != distorted.n_classes() {
            return Err(Error::invalid(
                "opinion pair",
                format!("{} vs {} classes", original.n_classes(), distorted.n_classes()),
            ));
        }
        Ok(Self { original, distorted })
    }
}

/// Weights of the linear combination `w_ccc * CCC + w_nccr * NCCR`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpinionWeights {
    pub ccc: f64,
    pub nccr: f64,
}

impl Default for OpinionWeights {
    fn default() -> Self {
        Self { ccc: 1.0, nccr: 1.0 }
    }
}

fn supervised_sum(rec: &ClassifierRecord, w: OpinionWeights) -> Result<f64> {
    Ok(w.ccc * ccc(rec)? + w.nccr * nccr(rec)?)
}

/// Drop in `CCC + NCCR` from the original to the distorted record.
pub fn cos_supervised(pair: &OpinionPair) -> Result<f64> {
    cos_supervised_weighted(pair, OpinionWeights::default())
}

pub fn cos_supervised_weighted(pair: &OpinionPair, w: OpinionWeights) -> Result<f64> {
    Ok(supervised_sum(&pair.original, w)? - supervised_sum(&pair.distorted, w)?)
}

/// Semi-supervised opinion of one classifier: the distance between its two
/// softmax outputs.
pub fn cos_semi_supervised(pair: &OpinionPair, kind: DistanceKind) -> f64 {
    // Records are validated distributions of equal length by construction.
    distance::distance_unchecked(pair.original.probs(), pair.distorted.probs(), kind)
}

fn mean_over_bank(pairs: &[OpinionPair], score: impl Fn(&OpinionPair) -> Result<f64>) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("classifier bank"));
    }
    let mut sum = 0.0;
    for p in pairs {
        sum += score(p)?;
    }
    Ok(sum / pairs.len() as f64)
}

/// Mean supervised opinion score over a classifier bank.
pub fn mcos(pairs: &[OpinionPair]) -> Result<f64> {
    mean_over_bank(pairs, cos_supervised)
}

pub fn mcos_weighted(pairs: &[OpinionPair], w: OpinionWeights) -> Result<f64> {
    mean_over_bank(pairs, |p| cos_supervised_weighted(p, w))
}

/// Mean semi-supervised opinion score over a classifier bank.
pub fn mcos_ss(pairs: &[OpinionPair], kind: DistanceKind) -> Result<f64> {
    mean_over_bank(pairs, |p| Ok(cos_semi_supervised(p, kind)))
}

/// The labeling target to train against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OpinionTarget {
    Supervised { weights: OpinionWeights },
    SemiSupervised { distance: DistanceKind },
}

impl Default for OpinionTarget {
    fn default() -> Self {
        OpinionTarget::SemiSupervised {
            distance: DistanceKind::Mad,
        }
    }
}

impl OpinionTarget {
    pub fn score(&self, pairs: &[OpinionPair]) -> Result<f64> {
        match *self {
            OpinionTarget::Supervised { weights } => mcos_weighted(pairs, weights),
            OpinionTarget::SemiSupervised { distance } => mcos_ss(pairs, distance),
        }
    }
}
