//! Corpus construction: every clean image plus every (kind, degree) variant.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{sample_degrees, DistortionKind, DistortionSpec};
use crate::error::{Error, Result};
use crate::{jsonl, rng};

pub const MANIFEST_FORMAT: &str = "aqua-manifest";

/// Stream tags mixed into seed derivations.
const DEGREE_STREAM: u64 = 0xD15;
const SPLIT_STREAM: u64 = 0x5B1;
const ENTRY_STREAM: u64 = 0xE47;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanImage {
    pub id: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub kinds: Vec<DistortionKind>,
    pub degrees_per_kind: usize,
    pub train_fraction: f64,
    pub corpus_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kinds: DistortionKind::DISTORTED.to_vec(),
            degrees_per_kind: 6,
            train_fraction: 0.8,
            corpus_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// `<clean id>/none` or `<clean id>/<kind>/<degree index>`.
    pub id: String,
    pub source: String,
    pub spec: DistortionSpec,
    pub split: Split,
}

impl ManifestEntry {
    /// Identifier of the clean image this entry derives from.
    pub fn group(&self) -> &str {
        self.id.split('/').next().unwrap_or(&self.id)
    }

    pub fn original_id(&self) -> String {
        format!("{}/none", self.group())
    }

    /// Position of this entry's degree among its image's sorted degrees.
    pub fn degree_index(&self) -> Option<usize> {
        if self.spec.kind == DistortionKind::None {
            return None;
        }
        self.id.rsplit('/').next()?.parse().ok()
    }
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    id: String,
    source: String,
    kind: DistortionKind,
    degree: f64,
    seed: u64,
    split: Split,
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    format: String,
    version: u32,
    corpus_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_fingerprint: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub corpus_seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn write<W: Write>(&self, w: &mut W, config_fingerprint: Option<&str>) -> std::io::Result<()> {
        jsonl::write_line(
            w,
            &ManifestHeader {
                format: MANIFEST_FORMAT.into(),
                version: 1,
                corpus_seed: self.corpus_seed,
                config_fingerprint: config_fingerprint.map(str::to_string),
            },
        )?;
        for e in &self.entries {
            jsonl::write_line(
                w,
                &EntryRecord {
                    id: e.id.clone(),
                    source: e.source.clone(),
                    kind: e.spec.kind,
                    degree: e.spec.degree,
                    seed: e.spec.seed,
                    split: e.split,
                },
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, config_fingerprint: Option<&str>) -> Result<()> {
        let mut w = jsonl::create(path)?;
        self.write(&mut w, config_fingerprint)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read<B: BufRead>(reader: B, label: &str) -> Result<Self> {
        let (header, records): (ManifestHeader, Vec<EntryRecord>) =
            jsonl::read(reader, label, MANIFEST_FORMAT)?.ok_or(Error::Empty("manifest"))?;
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(records.len());
        for r in records {
            if !seen.insert(r.id.clone()) {
                return Err(Error::invalid("manifest", format!("duplicate id `{}`", r.id)));
            }
            let spec = DistortionSpec {
                kind: r.kind,
                degree: r.degree,
                seed: r.seed,
            };
            spec.validate()?;
            entries.push(ManifestEntry {
                id: r.id,
                source: r.source,
                spec,
                split: r.split,
            });
        }
        Ok(Self {
            corpus_seed: header.corpus_seed,
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(file), &path.display().to_string())
    }

    pub fn index(&self) -> HashMap<&str, &ManifestEntry> {
        self.entries.iter().map(|e| (e.id.as_str(), e)).collect()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

fn validate_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains('/') || id.chars().any(char::is_whitespace) {
        return Err(Error::invalid("image id", format!("`{id}`")));
    }
    Ok(())
}

/// Expands clean images into a corpus of `1 + kinds * degrees_per_kind`
/// entries each.
///
/// Degrees are sampled per clean image so held-out images see severities
/// absent from training. Entry seeds derive from `(corpus_seed, entry id,
/// kind, degree index)`. The train/test split is drawn per clean image, so
/// every variant of an image lands in the same split.
pub fn build_dataset(clean: &[CleanImage], cfg: &DatasetConfig) -> Result<DatasetManifest> {
    if clean.is_empty() {
        return Err(Error::Empty("clean image list"));
    }
    if !(0.0..=1.0).contains(&cfg.train_fraction) {
        return Err(Error::invalid(
            "train fraction",
            format!("{} not in [0, 1]", cfg.train_fraction),
        ));
    }
    let mut seen = HashSet::new();
    for c in clean {
        validate_id(&c.id)?;
        if !seen.insert(c.id.as_str()) {
            return Err(Error::invalid("clean images", format!("duplicate id `{}`", c.id)));
        }
    }
    if cfg.kinds.contains(&DistortionKind::None) {
        return Err(Error::invalid("dataset kinds", "`none` is always included implicitly"));
    }

    let mut order: Vec<usize> = (0..clean.len()).collect();
    order.shuffle(&mut rng::rng(rng::derive(&[cfg.corpus_seed, SPLIT_STREAM])));
    let n_train = (clean.len() as f64 * cfg.train_fraction).round() as usize;
    let mut split = vec![Split::Test; clean.len()];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }

    let mut entries = Vec::with_capacity(clean.len() * (1 + cfg.kinds.len() * cfg.degrees_per_kind));
    for (img, &split) in clean.iter().zip(&split) {
        let image_hash = rng::hash_str(&img.id);
        entries.push(ManifestEntry {
            id: format!("{}/none", img.id),
            source: img.path.clone(),
            spec: DistortionSpec::none(),
            split,
        });
        for &kind in &cfg.kinds {
            let degree_seed = rng::derive(&[cfg.corpus_seed, image_hash, kind.code(), DEGREE_STREAM]);
            let degrees = sample_degrees(kind, cfg.degrees_per_kind, degree_seed)?;
            for (k, degree) in degrees.into_iter().enumerate() {
                let id = format!("{}/{}/{}", img.id, kind.name(), k);
                let seed = rng::derive(&[cfg.corpus_seed, rng::hash_str(&id), kind.code(), k as u64, ENTRY_STREAM]);
                entries.push(ManifestEntry {
                    id,
                    source: img.path.clone(),
                    spec: DistortionSpec { kind, degree, seed },
                    split,
                });
            }
        }
    }
    Ok(DatasetManifest {
        corpus_seed: cfg.corpus_seed,
        entries,
    })
}
