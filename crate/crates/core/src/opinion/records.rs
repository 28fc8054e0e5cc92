//! Softmax replay files and an in-memory store keyed by image and classifier.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierRecord, OpinionPair};
use crate::error::{Error, Result};
use crate::jsonl;

pub const SOFTMAX_FORMAT: &str = "aqua-softmax";
const RENORMALIZE_TOLERANCE: f64 = 1e-5;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_fingerprint: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Line {
    image_id: String,
    classifier: String,
    n: usize,
    probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_class: Option<usize>,
}

pub fn write_softmax<W: Write>(
    w: &mut W,
    records: &[ClassifierRecord],
    config_fingerprint: Option<&str>,
) -> std::io::Result<()> {
    jsonl::write_line(
        w,
        &Header {
            format: SOFTMAX_FORMAT.into(),
            version: 1,
            config_fingerprint: config_fingerprint.map(str::to_string),
        },
    )?;
    for r in records {
        jsonl::write_line(
            w,
            &Line {
                image_id: r.image_id.clone(),
                classifier: r.classifier.clone(),
                n: r.n_classes(),
                probs: r.probs().to_vec(),
                true_class: r.true_class,
            },
        )?;
    }
    Ok(())
}

/// Reads a softmax file. Records whose probabilities sum within `1e-5` of
/// one are renormalized (deviations at rounding level, up to `1e-12`, are
/// kept as stored); larger deviations are rejected.
pub fn read_softmax<B: BufRead>(reader: B, label: &str) -> Result<Vec<ClassifierRecord>> {
    let Some((_, lines)) = jsonl::read::<Header, Line, _>(reader, label, SOFTMAX_FORMAT)? else {
        return Ok(Vec::new());
    };
    lines
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let fail = |reason: String| Error::Parse {
                path: label.to_string(),
                line: i + 2,
                reason,
            };
            if l.n != l.probs.len() {
                return Err(fail(format!("n = {} but {} probabilities", l.n, l.probs.len())));
            }
            let sum: f64 = l.probs.iter().sum();
            if !((sum - 1.0).abs() <= RENORMALIZE_TOLERANCE) {
                return Err(fail(format!("probabilities sum to {sum}")));
            }
            // Rounding-level deviations are left alone so written records
            // read back bit-exactly.
            let probs = if (sum - 1.0).abs() <= 1e-12 {
                l.probs
            } else {
                l.probs.iter().map(|p| p / sum).collect()
            };
            ClassifierRecord::new(l.image_id, l.classifier, probs, l.true_class)
                .map_err(|e| fail(e.to_string()))
        })
        .collect()
}

/// Records indexed by `(image_id, classifier)`.
#[derive(Debug, Clone, Default)]
pub struct RecordStore {
    records: HashMap<(String, String), ClassifierRecord>,
    classifiers: BTreeMap<String, usize>,
}

impl RecordStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = ClassifierRecord>) -> Result<Self> {
        let mut store = Self::new();
        for r in records {
            store.insert(r)?;
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let records = read_softmax(std::io::BufReader::new(file), &path.display().to_string())?;
        Self::from_records(records)
    }

    pub fn insert(&mut self, rec: ClassifierRecord) -> Result<()> {
        let key = (rec.image_id.clone(), rec.classifier.clone());
        if self.records.contains_key(&key) {
            return Err(Error::invalid(
                "record store",
                format!("duplicate record for `{}` from `{}`", key.0, key.1),
            ));
        }
        *self.classifiers.entry(rec.classifier.clone()).or_default() += 1;
        self.records.insert(key, rec);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Classifier names, sorted.
    pub fn classifiers(&self) -> Vec<String> {
        self.classifiers.keys().cloned().collect()
    }

    pub fn get(&self, image_id: &str, classifier: &str) -> Option<&ClassifierRecord> {
        self.records.get(&(image_id.to_string(), classifier.to_string()))
    }

    pub fn require(&self, image_id: &str, classifier: &str) -> Result<&ClassifierRecord> {
        self.get(image_id, classifier).ok_or_else(|| Error::Missing {
            what: "softmax record",
            id: format!("{image_id} ({classifier})"),
        })
    }

    /// One original/distorted pair per classifier in `bank`.
    pub fn pairs(&self, original_id: &str, distorted_id: &str, bank: &[String]) -> Result<Vec<OpinionPair>> {
        bank.iter()
            .map(|c| {
                OpinionPair::new(
                    self.require(original_id, c)?.clone(),
                    self.require(distorted_id, c)?.clone(),
                )
            })
            .collect()
    }
}
