//! Subcommand implementations and the file plumbing they share.

pub mod bench;
pub mod data;
pub mod filter;
pub mod model;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use aqua::distortions::{DatasetManifest, ManifestEntry, Split};
use aqua::features::{load_embeddings, FeatureVector};
use aqua::regressor::MlpModel;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Context;

/// Which manifest entries a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSel {
    Train,
    Test,
    All,
}

impl SplitSel {
    pub fn entries<'a>(self, manifest: &'a DatasetManifest) -> Vec<&'a ManifestEntry> {
        let want = match self {
            SplitSel::Train => Some(Split::Train),
            SplitSel::Test => Some(Split::Test),
            SplitSel::All => None,
        };
        manifest.entries.iter().filter(|e| want.is_none_or(|s| e.split == s)).collect()
    }
}

pub(crate) fn or_out(ctx: &Context, path: &Option<PathBuf>, default: &str) -> PathBuf {
    path.clone().unwrap_or_else(|| ctx.out(default))
}

/// `relative` joined onto `base` unless it is already absolute.
pub(crate) fn resolve(base: &Path, relative: &str) -> PathBuf {
    let p = Path::new(relative);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub(crate) fn image_file(images: &Path, entry_id: &str) -> PathBuf {
    images.join(format!("{}.png", entry_id.replace('/', "__")))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).map_err(|e| aqua::Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(BufWriter::new(f))
}

pub(crate) fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| aqua::Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(())
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).map_err(|e| aqua::Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(BufReader::new(f))
}

pub(crate) fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    Ok(DatasetManifest::load(path)?)
}

/// Loads feature vectors and checks they all come from one extractor.
pub(crate) fn load_features(path: &Path) -> Result<BTreeMap<String, FeatureVector>> {
    Ok(load_embeddings(path)?)
}

pub(crate) fn feature_of<'a>(
    features: &'a BTreeMap<String, FeatureVector>,
    id: &str,
) -> aqua::Result<&'a FeatureVector> {
    features.get(id).ok_or_else(|| aqua::Error::Missing { what: "feature vector", id: id.to_string() })
}

/// `# config_fingerprint <hex>` leading line for CSV outputs.
pub(crate) fn csv_fingerprint<W: Write>(w: &mut W, fp: &str) -> std::io::Result<()> {
    writeln!(w, "# config_fingerprint {fp}")
}

pub const SCORES_FORMAT: &str = "aqua-scores";

#[derive(Serialize, Deserialize)]
struct ScoresHeader {
    format: String,
    version: u32,
    extractor_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_fingerprint: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    image_id: String,
    quality: f64,
}

/// Quality scores for `ids`, in order. The one scoring path shared by
/// `score`, `eval` and the filter's feature-backed frames.
pub fn score_features(
    model: &MlpModel,
    features: &BTreeMap<String, FeatureVector>,
    ids: &[&str],
) -> Result<Vec<(String, f64)>> {
    let out = ids
        .par_iter()
        .map(|id| Ok((id.to_string(), model.quality(feature_of(features, id)?)?)))
        .collect::<aqua::Result<Vec<_>>>()?;
    Ok(out)
}

pub fn write_scores<W: Write>(w: &mut W, extractor_id: &str, scores: &[(String, f64)], fp: &str) -> Result<()> {
    jsonl_line(
        w,
        &ScoresHeader {
            format: SCORES_FORMAT.into(),
            version: 1,
            extractor_id: extractor_id.into(),
            config_fingerprint: Some(fp.into()),
        },
    )?;
    for (id, q) in scores {
        jsonl_line(w, &ScoreLine { image_id: id.clone(), quality: *q })?;
    }
    Ok(())
}

pub fn read_scores(path: &Path) -> Result<HashMap<String, f64>> {
    let (header, lines): (ScoresHeader, Vec<ScoreLine>) = read_jsonl(path)?;
    if header.format != SCORES_FORMAT {
        bail!("{}: expected format {SCORES_FORMAT}, found {}", path.display(), header.format);
    }
    let mut out = HashMap::with_capacity(lines.len());
    for l in lines {
        if out.insert(l.image_id.clone(), l.quality).is_some() {
            bail!("{}: duplicate score for `{}`", path.display(), l.image_id);
        }
    }
    Ok(out)
}

pub(crate) fn jsonl_line<W: Write>(w: &mut W, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn read_jsonl<H: DeserializeOwned, L: DeserializeOwned>(path: &Path) -> Result<(H, Vec<L>)> {
    let label = path.display().to_string();
    let mut lines = open(path)?.lines().enumerate();
    let parse_err = |line: usize, reason: String| aqua::Error::Parse { path: label.clone(), line, reason };
    let Some((_, first)) = lines.next() else {
        return Err(parse_err(1, "empty file".into()).into());
    };
    let header = serde_json::from_str(&first?).map_err(|e| parse_err(1, e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?);
    }
    Ok((header, out))
}

/// SHA-256 of a file's bytes.
pub(crate) fn file_digest(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).map_err(|e| aqua::Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(hex::encode(Sha256::digest(bytes)))
}
