//! `filter` and `sweep`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use aqua::evaluation::real;
use aqua::features::Extractor;
use aqua::filter::{
    run_filter, sweep as run_sweep, AssessorScorer, FilterConfig, FilterReport, Frame, FrameSource, FrameStream,
};
use aqua::opinion::RecordStore;
use aqua::regressor::MlpModel;
use clap::Args;
use serde::{Deserialize, Serialize};

use super::{csv_fingerprint, feature_of, image_file, jsonl_line, load_features, load_manifest, or_out, write_with, SplitSel};
use crate::config::{fingerprint, real_vec};
use crate::Context;

#[derive(Debug, Args, Serialize)]
pub struct StreamArgs {
    /// Frame stream file; otherwise one is built from the manifest split.
    #[arg(long)]
    pub stream: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Score stored feature vectors instead of decoding images.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Softmax records giving each frame's correctness.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub classifier: Option<String>,
    /// `train`, `test` or `all`.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub per_frame_ms: Option<f64>,
    #[arg(long)]
    pub per_detection_ms: Option<f64>,
    #[arg(long)]
    pub detections_per_frame: Option<f64>,
    #[arg(long)]
    pub scorer_cost_ms: Option<f64>,
}

const PATH_KEYS: [&str; 6] = ["stream", "manifest", "images", "features", "records", "model"];

/// Where frames come from and what they cost downstream.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamSpec {
    pub stream: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub classifier: String,
    pub split: SplitSel,
    pub model: Option<PathBuf>,
    pub per_frame_ms: f64,
    pub per_detection_ms: f64,
    pub detections_per_frame: f64,
    pub scorer_cost_ms: f64,
}

impl Default for StreamSpec {
    fn default() -> Self {
        let c = FilterConfig::default();
        StreamSpec {
            stream: None,
            manifest: None,
            images: None,
            features: None,
            records: None,
            classifier: "surrogate-eval".into(),
            split: SplitSel::Test,
            model: None,
            per_frame_ms: c.per_frame_ms,
            per_detection_ms: c.per_detection_ms,
            detections_per_frame: c.detections_per_frame,
            scorer_cost_ms: c.scorer_cost_ms,
        }
    }
}

impl StreamSpec {
    fn config(&self, threshold: f64, stride: usize) -> FilterConfig {
        FilterConfig {
            threshold,
            stride,
            per_frame_ms: self.per_frame_ms,
            per_detection_ms: self.per_detection_ms,
            detections_per_frame: self.detections_per_frame,
            scorer_cost_ms: self.scorer_cost_ms,
        }
    }
}

fn file_len(path: &Path) -> aqua::Result<u64> {
    std::fs::metadata(path).map(|m| m.len()).map_err(|e| aqua::Error::Io { path: path.to_path_buf(), source: e })
}

/// Loads or builds the stream; a built stream is also saved to `stream.jsonl`.
fn load_stream(ctx: &Context, s: &StreamSpec, fp: &str) -> Result<FrameStream> {
    if let Some(path) = &s.stream {
        return Ok(FrameStream::load(path)?);
    }
    let manifest = load_manifest(&or_out(ctx, &s.manifest, "manifest.jsonl"))?;
    let images = or_out(ctx, &s.images, "images");
    let records = or_out(ctx, &s.records, "records.jsonl");
    let store = if s.records.is_some() || records.exists() { Some(RecordStore::load(&records)?) } else { None };
    let features = s.features.as_deref().map(load_features).transpose()?;
    let frames = s
        .split
        .entries(&manifest)
        .into_iter()
        .map(|e| {
            let path = image_file(&images, &e.id);
            let byte_size = file_len(&path)?;
            let source = match &features {
                Some(f) => FrameSource::Features(feature_of(f, &e.id)?.clone()),
                None => FrameSource::Image(path),
            };
            let correct = match &store {
                Some(st) => Some(st.require(&e.id, &s.classifier)?.top_k_correct(1)?),
                None => None,
            };
            Ok(Frame { frame_id: e.id.clone(), source, byte_size, correct })
        })
        .collect::<aqua::Result<Vec<_>>>()?;
    let stream = FrameStream::new(frames)?;
    if features.is_none() {
        stream.save(&ctx.out("stream.jsonl"), Some(fp))?;
    }
    Ok(stream)
}

fn load_scorer(ctx: &Context, s: &StreamSpec) -> Result<AssessorScorer> {
    let model = MlpModel::load(&or_out(ctx, &s.model, "model.jsonl"))?;
    let extractor: Extractor = model.extractor_id.parse()?;
    Ok(AssessorScorer::new(model, extractor)?)
}

fn print_summary(prefix: &str, r: &FilterReport) {
    let s = &r.summary;
    println!(
        "{prefix}: {}/{} frames passed, {} scored, bandwidth {:.4}, net compute {:.4}, {} diagnostics",
        s.passed,
        s.frames,
        s.frames_scored,
        s.bandwidth_fraction,
        s.costs.net_compute_fraction,
        r.diagnostics.len()
    );
}

#[derive(Debug, Args, Serialize)]
pub struct FilterArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub stream: StreamArgs,
    /// Pass frames whose quality is at least this (`-inf` passes all).
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<String>,
    /// Score every stride-th frame; the rest inherit.
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterParams {
    #[serde(flatten)]
    pub stream: StreamSpec,
    #[serde(with = "real")]
    pub threshold: f64,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

pub fn filter(ctx: &Context, args: FilterArgs) -> Result<()> {
    let p: FilterParams = ctx.file.params("filter", &PATH_KEYS, &args)?;
    let fp = fingerprint("filter", ctx.global.seed, &p, &PATH_KEYS)?;
    let stream = load_stream(ctx, &p.stream, &fp)?;
    let scorer = load_scorer(ctx, &p.stream)?;
    let report = run_filter(&stream, &scorer, &p.stream.config(p.threshold, p.stride))?;
    let path = ctx.out("filter.jsonl");
    write_with(&path, |w| Ok(report.write_jsonl(w, Some(&fp))?))?;
    print_summary("filter", &report);
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub stream: StreamArgs,
    /// Comma-separated thresholds (`-inf` allowed).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub thresholds: Option<Vec<String>>,
    /// Comma-separated strides.
    #[arg(long, value_delimiter = ',')]
    pub strides: Option<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    #[serde(flatten)]
    pub stream: StreamSpec,
    #[serde(deserialize_with = "real_vec", serialize_with = "ser_reals")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_strides")]
    pub strides: Vec<usize>,
}

fn default_strides() -> Vec<usize> {
    vec![1, 2, 4, 8]
}

fn ser_reals<S: serde::Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Wrap(#[serde(with = "real")] f64);
    s.collect_seq(v.iter().map(|&x| Wrap(x)))
}

#[derive(Serialize)]
struct SweepLine<'a> {
    #[serde(with = "real")]
    threshold: f64,
    stride: usize,
    summary: &'a aqua::filter::FilterSummary,
    diagnostics: usize,
}

pub fn sweep(ctx: &Context, args: SweepArgs) -> Result<()> {
    let p: SweepParams = ctx.file.params("sweep", &PATH_KEYS, &args)?;
    if p.thresholds.is_empty() {
        bail!("sweep needs at least one threshold");
    }
    let fp = fingerprint("sweep", ctx.global.seed, &p, &PATH_KEYS)?;
    let stream = load_stream(ctx, &p.stream, &fp)?;
    let scorer = load_scorer(ctx, &p.stream)?;
    let result = run_sweep(&stream, &scorer, &p.thresholds, &p.strides, &p.stream.config(0.0, 1))?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    write_with(&ctx.out("sweep.csv"), |w| {
        csv_fingerprint(w, &fp)?;
        Ok(result.write_csv(w)?)
    })?;
    write_with(&ctx.out("sweep.jsonl"), |w| {
        jsonl_line(
            w,
            &serde_json::json!({"format": "aqua-sweep", "version": 1, "config_fingerprint": fp, "warnings": result.warnings}),
        )?;
        for c in &result.cells {
            jsonl_line(
                w,
                &SweepLine {
                    threshold: c.threshold,
                    stride: c.stride,
                    summary: &c.report.summary,
                    diagnostics: c.report.diagnostics.len(),
                },
            )?;
        }
        Ok(())
    })?;
    println!("sweep: {} cells over {} frames -> {}", result.cells.len(), stream.len(), ctx.out("sweep.csv").display());
    Ok(())
}
