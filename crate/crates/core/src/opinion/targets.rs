//! Per-entry regression targets and their file format.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{OpinionTarget, RecordStore};
use crate::distortions::{DistortionKind, ManifestEntry};
use crate::error::{Error, Result};
use crate::jsonl;

pub const TARGETS_FORMAT: &str = "aqua-targets";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    pub target: OpinionTarget,
    pub bank: Vec<String>,
    /// `(image id, score)` in manifest order.
    pub values: Vec<(String, f64)>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    target: OpinionTarget,
    bank: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_fingerprint: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Line {
    image_id: String,
    target: f64,
}

/// Scores every entry against its clean original over `bank`. Clean entries
/// score 0 by definition.
pub fn label_targets(
    entries: &[ManifestEntry],
    store: &RecordStore,
    bank: &[String],
    target: OpinionTarget,
) -> Result<TargetSet> {
    if bank.is_empty() {
        return Err(Error::Empty("classifier bank"));
    }
    let values = entries
        .par_iter()
        .map(|e| {
            let v = if e.spec.kind == DistortionKind::None {
                0.0
            } else {
                target.score(&store.pairs(&e.original_id(), &e.id, bank)?)?
            };
            Ok((e.id.clone(), v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TargetSet { target, bank: bank.to_vec(), values })
}

impl TargetSet {
    pub fn write<W: Write>(&self, w: &mut W, fingerprint: Option<&str>) -> Result<()> {
        let io = |e| Error::io("target output", e);
        let header = Header {
            format: TARGETS_FORMAT.into(),
            version: 1,
            target: self.target,
            bank: self.bank.clone(),
            config_fingerprint: fingerprint.map(str::to_string),
        };
        jsonl::write_line(w, &header).map_err(io)?;
        for (id, t) in &self.values {
            jsonl::write_line(w, &Line { image_id: id.clone(), target: *t }).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read<R: BufRead>(reader: R, label: &str) -> Result<Self> {
        let (h, lines) = jsonl::read::<Header, Line, _>(reader, label, TARGETS_FORMAT)?
            .ok_or(Error::Empty("target file"))?;
        Ok(TargetSet {
            target: h.target,
            bank: h.bank,
            values: lines.into_iter().map(|l| (l.image_id, l.target)).collect(),
        })
    }

    pub fn save(&self, path: &Path, fingerprint: Option<&str>) -> Result<()> {
        let mut w = jsonl::create(path)?;
        self.write(&mut w, fingerprint)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(file), &path.display().to_string())
    }
}
