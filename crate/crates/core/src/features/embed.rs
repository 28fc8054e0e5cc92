//! Feature-vector files, shared by native extractors and external embeddings.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::error::{Error, Result};
use crate::jsonl;

pub const EMBED_FORMAT: &str = "aqua-embed";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    extractor_id: String,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_fingerprint: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Line {
    image_id: String,
    values: Vec<f64>,
}

/// Writes vectors in the given order. All vectors must share one extractor
/// and one length.
pub fn write_embeddings<W: Write>(
    w: &mut W,
    extractor_id: &str,
    dim: usize,
    vectors: &[FeatureVector],
    fingerprint: Option<&str>,
) -> Result<()> {
    let header = Header {
        format: EMBED_FORMAT.into(),
        version: 1,
        extractor_id: extractor_id.into(),
        dim,
        config_fingerprint: fingerprint.map(str::to_string),
    };
    let io = |e| Error::io("embedding output", e);
    jsonl::write_line(w, &header).map_err(io)?;
    for v in vectors {
        if v.values.len() != dim {
            return Err(Error::Dimension(format!(
                "{} has {} values, expected {dim}",
                v.image_id,
                v.values.len()
            )));
        }
        if v.extractor_id != extractor_id {
            return Err(Error::invalid(
                "embedding output",
                format!("{} came from {}, not {extractor_id}", v.image_id, v.extractor_id),
            ));
        }
        let line = Line { image_id: v.image_id.clone(), values: v.values.clone() };
        jsonl::write_line(w, &line).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_embeddings(
    path: &Path,
    extractor_id: &str,
    dim: usize,
    vectors: &[FeatureVector],
    fingerprint: Option<&str>,
) -> Result<()> {
    let mut w = jsonl::create(path)?;
    write_embeddings(&mut w, extractor_id, dim, vectors, fingerprint)
}

pub fn read_embeddings<R: BufRead>(reader: R, label: &str) -> Result<BTreeMap<String, FeatureVector>> {
    let Some((header, lines)) = jsonl::read::<Header, Line, _>(reader, label, EMBED_FORMAT)? else {
        return Ok(BTreeMap::new());
    };
    let mut out = BTreeMap::new();
    for (i, line) in lines.into_iter().enumerate() {
        if line.values.len() != header.dim {
            return Err(Error::Dimension(format!(
                "ragged embeddings in {label}: record {} ({}) has {} values, header says {}",
                i + 1,
                line.image_id,
                line.values.len(),
                header.dim
            )));
        }
        if line.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding", format!("{} has non-finite values", line.image_id)));
        }
        let v = FeatureVector {
            image_id: line.image_id.clone(),
            extractor_id: header.extractor_id.clone(),
            values: line.values,
        };
        if out.insert(line.image_id.clone(), v).is_some() {
            return Err(Error::invalid("embedding", format!("duplicate image id {}", line.image_id)));
        }
    }
    Ok(out)
}

pub fn load_embeddings(path: &Path) -> Result<BTreeMap<String, FeatureVector>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(std::io::BufReader::new(file), &path.display().to_string())
}
