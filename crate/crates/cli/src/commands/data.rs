//! `distort`, `label` and `features`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use aqua::distortions::{apply_distortion, build_dataset, CleanImage, DatasetConfig, DistortionKind};
use aqua::evaluation::{default_bank, evaluation_classifier, SurrogateClassifier};
use aqua::features::{write_embeddings, Extractor, FeatureVector};
use aqua::imaging::io::{read_image, write_image};
use aqua::imaging::ImageBuffer;
use aqua::opinion::{
    label_targets, read_softmax, select_distance, write_softmax, DistanceKind, OpinionTarget, OpinionWeights,
    RecordStore,
};
use aqua::synth;
use clap::Args;
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{feature_of, image_file, jsonl_line, load_features, load_manifest, or_out, resolve, write_with, SplitSel};
use crate::config::fingerprint;
use crate::Context;

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "ppm", "pgm", "pnm"];

#[derive(Debug, Args, Serialize)]
pub struct DistortArgs {
    /// Directory of clean images, or a text file listing one path per line.
    #[arg(long)]
    pub clean: Option<PathBuf>,
    /// Generate this many synthetic clean textures instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Side length of synthetic textures.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    /// Comma-separated distortion kinds (default: all seven).
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,
    #[arg(long)]
    pub degrees_per_kind: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistortParams {
    pub clean: Option<PathBuf>,
    pub synthetic: Option<usize>,
    pub size: usize,
    pub channels: usize,
    pub kinds: Vec<DistortionKind>,
    pub degrees_per_kind: usize,
    pub train_fraction: f64,
}

impl Default for DistortParams {
    fn default() -> Self {
        let d = DatasetConfig::default();
        DistortParams {
            clean: None,
            synthetic: None,
            size: 64,
            channels: 3,
            kinds: d.kinds,
            degrees_per_kind: d.degrees_per_kind,
            train_fraction: d.train_fraction,
        }
    }
}

fn list_clean(path: &Path) -> Result<Vec<CleanImage>> {
    let meta = std::fs::metadata(path).map_err(|e| aqua::Error::Io { path: path.to_path_buf(), source: e })?;
    let files: Vec<PathBuf> = if meta.is_dir() {
        let mut files = Vec::new();
        for entry in std::fs::read_dir(path).map_err(|e| aqua::Error::Io { path: path.to_path_buf(), source: e })? {
            let p = entry?.path();
            let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            if ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
                files.push(p);
            }
        }
        files.sort();
        files
    } else {
        let text = std::fs::read_to_string(path).map_err(|e| aqua::Error::Io { path: path.to_path_buf(), source: e })?;
        let base = path.parent().unwrap_or(Path::new("."));
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| resolve(base, l))
            .collect()
    };
    if files.is_empty() {
        bail!("no clean images found in {}", path.display());
    }
    Ok(files
        .into_iter()
        .map(|p| CleanImage {
            id: p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            path: p.to_string_lossy().into_owned(),
        })
        .collect())
}

fn synthetic_clean(ctx: &Context, n: usize, size: usize, channels: usize) -> Result<Vec<CleanImage>> {
    if n == 0 {
        bail!("--synthetic must be at least 1");
    }
    let images: Vec<CleanImage> = (0..n)
        .map(|i| CleanImage { id: format!("syn{i:05}"), path: format!("clean/syn{i:05}.png") })
        .collect();
    let dir = ctx.out("clean");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    images.par_iter().enumerate().try_for_each(|(i, c)| {
        let seed = aqua::rng::derive(&[ctx.global.seed, 0x5E7, i as u64]);
        write_image(ctx.out(&c.path), &synth::texture(size, size, channels, seed))
    })?;
    Ok(images)
}

pub fn distort(ctx: &Context, args: DistortArgs) -> Result<()> {
    let p: DistortParams = ctx.file.params("distort", &["clean"], &args)?;
    let fp = fingerprint("distort", ctx.global.seed, &p, &["clean"])?;
    let clean = match (&p.clean, p.synthetic) {
        (Some(dir), None) => list_clean(dir)?,
        (None, Some(n)) => synthetic_clean(ctx, n, p.size, p.channels)?,
        (None, None) => bail!("give either --clean or --synthetic"),
        (Some(_), Some(_)) => bail!("--clean and --synthetic are mutually exclusive"),
    };
    let cfg = DatasetConfig {
        kinds: p.kinds.clone(),
        degrees_per_kind: p.degrees_per_kind,
        train_fraction: p.train_fraction,
        corpus_seed: ctx.global.seed,
    };
    let manifest = build_dataset(&clean, &cfg)?;
    let out = &ctx.global.out;
    let sources: HashMap<&str, ImageBuffer> = clean
        .par_iter()
        .map(|c| Ok((c.path.as_str(), read_image(resolve(out, &c.path))?)))
        .collect::<aqua::Result<_>>()?;
    let images = ctx.out("images");
    std::fs::create_dir_all(&images).with_context(|| format!("creating {}", images.display()))?;
    manifest.entries.par_iter().try_for_each(|e| -> Result<()> {
        let img = apply_distortion(&sources[e.source.as_str()], &e.spec)
            .with_context(|| format!("distorting {}", e.id))?;
        write_image(image_file(&images, &e.id), &img)?;
        Ok(())
    })?;
    let path = ctx.out("manifest.jsonl");
    manifest.save(&path, Some(&fp))?;
    println!("distort: {} clean images, {} entries -> {}", clean.len(), manifest.entries.len(), path.display());
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct LabelArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Softmax replay file; without it the surrogate classifiers are used.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// `semi_supervised` or `supervised`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Softmax distance for semi-supervised targets.
    #[arg(long)]
    pub distance: Option<String>,
    /// Comma-separated classifier names to average over.
    #[arg(long, value_delimiter = ',')]
    pub bank: Option<Vec<String>>,
    /// Override the surrogates' confidence jitter.
    #[arg(long)]
    pub surrogate_noise: Option<f64>,
    /// Pick the distance by monotonic correlation with degree.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub select_distance: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    SemiSupervised,
    Supervised,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelParams {
    pub manifest: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub mode: LabelMode,
    pub distance: DistanceKind,
    pub weights: OpinionWeights,
    pub bank: Vec<String>,
    pub surrogate_noise: Option<f64>,
    pub select_distance: bool,
}

impl Default for LabelParams {
    fn default() -> Self {
        LabelParams {
            manifest: None,
            records: None,
            mode: LabelMode::SemiSupervised,
            distance: DistanceKind::Mad,
            weights: OpinionWeights::default(),
            bank: Vec::new(),
            surrogate_noise: None,
            select_distance: false,
        }
    }
}

/// The labeling bank followed by the held-out evaluation classifier.
pub fn surrogates(seed: u64, noise: Option<f64>) -> Vec<SurrogateClassifier> {
    let mut all = default_bank(seed);
    all.push(evaluation_classifier(seed));
    if let Some(n) = noise {
        for s in &mut all {
            s.noise_scale = n;
        }
    }
    all
}

pub fn label(ctx: &Context, args: LabelArgs) -> Result<()> {
    let keys = ["manifest", "records"];
    let p: LabelParams = ctx.file.params("label", &keys, &args)?;
    let fp = fingerprint("label", ctx.global.seed, &p, &keys)?;
    let manifest = load_manifest(&or_out(ctx, &p.manifest, "manifest.jsonl"))?;

    let (store, default_names) = match &p.records {
        Some(path) => {
            let records = read_softmax(super::open(path)?, &path.display().to_string())?;
            let store = RecordStore::from_records(records)?;
            let names = store.classifiers();
            (store, names)
        }
        None => {
            let clfs = surrogates(ctx.global.seed, p.surrogate_noise);
            let mut records = Vec::with_capacity(clfs.len() * manifest.entries.len());
            for c in &clfs {
                records.extend(c.label(&manifest.entries)?);
            }
            let path = ctx.out("records.jsonl");
            write_with(&path, |w| Ok(write_softmax(w, &records, Some(&fp))?))?;
            info!("wrote {} softmax records to {}", records.len(), path.display());
            let names = default_bank(ctx.global.seed).into_iter().map(|c| c.name).collect();
            (RecordStore::from_records(records)?, names)
        }
    };
    let bank = if p.bank.is_empty() { default_names } else { p.bank.clone() };

    let mut distance = p.distance;
    if p.select_distance {
        let sel = select_distance(&manifest, &store, &bank)?;
        let path = ctx.out("distance_selection.jsonl");
        write_with(&path, |w| {
            jsonl_line(w, &serde_json::json!({"format": "aqua-distance-selection", "version": 1, "config_fingerprint": fp}))?;
            jsonl_line(w, &sel)
        })?;
        for row in &sel.table {
            println!("label: {:<14} mean |rho| {:.4}", row.distance.name(), row.mean_abs_rho);
        }
        distance = sel.selected;
    }
    let target = match p.mode {
        LabelMode::SemiSupervised => OpinionTarget::SemiSupervised { distance },
        LabelMode::Supervised => OpinionTarget::Supervised { weights: p.weights },
    };
    let targets = label_targets(&manifest.entries, &store, &bank, target)?;
    let path = ctx.out("targets.jsonl");
    targets.save(&path, Some(&fp))?;
    println!("label: {} targets over [{}] -> {}", targets.values.len(), bank.join(","), path.display());
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory of distorted images written by `distort`.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Extractor id: `nss-v1`, `filterbank-v1:...` or `external:<name>:<dim>`.
    #[arg(long)]
    pub extractor: Option<String>,
    /// Embedding file supplying vectors for an external extractor.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// `train`, `test` or `all`.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesParams {
    pub manifest: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub extractor: String,
    pub embeddings: Option<PathBuf>,
    pub split: SplitSel,
}

impl Default for FeaturesParams {
    fn default() -> Self {
        FeaturesParams {
            manifest: None,
            images: None,
            extractor: Extractor::Nss.id(),
            embeddings: None,
            split: SplitSel::All,
        }
    }
}

pub fn features(ctx: &Context, args: FeaturesArgs) -> Result<()> {
    let keys = ["manifest", "images", "embeddings"];
    let p: FeaturesParams = ctx.file.params("features", &keys, &args)?;
    let fp = fingerprint("features", ctx.global.seed, &p, &keys)?;
    let manifest = load_manifest(&or_out(ctx, &p.manifest, "manifest.jsonl"))?;
    let entries = p.split.entries(&manifest);
    let extractor: Extractor = p.extractor.parse()?;

    let vectors: Vec<FeatureVector> = match (&p.embeddings, extractor.is_native()) {
        (Some(path), false) => {
            let loaded = load_features(path)?;
            entries
                .iter()
                .map(|e| {
                    let v = feature_of(&loaded, &e.id)?;
                    if v.extractor_id != extractor.id() || v.dim() != extractor.dim() {
                        return Err(aqua::Error::Dimension(format!(
                            "{} holds {} vectors of dim {}, expected {} of dim {}",
                            path.display(),
                            v.extractor_id,
                            v.dim(),
                            extractor.id(),
                            extractor.dim()
                        )));
                    }
                    Ok(v.clone())
                })
                .collect::<aqua::Result<_>>()?
        }
        (None, false) => bail!("extractor {} needs --embeddings", extractor.id()),
        (Some(_), true) => bail!("--embeddings only applies to external extractors"),
        (None, true) => {
            let images = or_out(ctx, &p.images, "images");
            entries
                .par_iter()
                .map(|e| extractor.extract(&e.id, &read_image(image_file(&images, &e.id))?))
                .collect::<aqua::Result<_>>()?
        }
    };
    let path = ctx.out("features.jsonl");
    write_with(&path, |w| Ok(write_embeddings(w, &extractor.id(), extractor.dim(), &vectors, Some(&fp))?))?;
    println!("features: {} vectors of dim {} ({}) -> {}", vectors.len(), extractor.dim(), extractor.id(), path.display());
    Ok(())
}
