//! `train`, `score` and `eval`.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Result};
use aqua::evaluation::{
    accuracy_vs_degree, correlation_report, roc_auc, CorrelationReport, LabeledScore, REPORT_FORMAT,
};
use aqua::imaging::io::read_image;
use aqua::imaging::psnr;
use aqua::opinion::{RecordStore, TargetSet};
use aqua::regressor::{train as fit, MlpModel, TrainConfig};
use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    csv_fingerprint, feature_of, file_digest, image_file, jsonl_line, load_features, load_manifest, or_out,
    read_scores, score_features, write_scores, write_with, SplitSel,
};
use crate::config::fingerprint;
use crate::Context;

/// Stand-in PSNR for an image compared with itself.
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// `train`, `test` or `all`.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Comma-separated hidden layer widths.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub manifest: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub split: SplitSel,
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub standardize: bool,
}

impl Default for TrainParams {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainParams {
            manifest: None,
            features: None,
            targets: None,
            split: SplitSel::Train,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            batch_size: t.batch_size,
            hidden: t.hidden,
            standardize: t.standardize,
        }
    }
}

pub fn train(ctx: &Context, args: TrainArgs) -> Result<()> {
    let keys = ["manifest", "features", "targets"];
    let p: TrainParams = ctx.file.params("train", &keys, &args)?;
    let fp = fingerprint("train", ctx.global.seed, &p, &keys)?;
    let manifest_path = or_out(ctx, &p.manifest, "manifest.jsonl");
    let manifest = load_manifest(&manifest_path)?;
    let features = load_features(&or_out(ctx, &p.features, "features.jsonl"))?;
    let targets = TargetSet::load(&or_out(ctx, &p.targets, "targets.jsonl"))?;
    let targets: HashMap<&str, f64> = targets.values.iter().map(|(id, v)| (id.as_str(), *v)).collect();

    let data = p
        .split
        .entries(&manifest)
        .into_iter()
        .map(|e| {
            let y = *targets
                .get(e.id.as_str())
                .ok_or_else(|| aqua::Error::Missing { what: "target", id: e.id.clone() })?;
            Ok((feature_of(&features, &e.id)?.clone(), y))
        })
        .collect::<aqua::Result<Vec<_>>>()?;
    let cfg = TrainConfig {
        learning_rate: p.learning_rate,
        epochs: p.epochs,
        beta1: p.beta1,
        beta2: p.beta2,
        epsilon: p.epsilon,
        batch_size: p.batch_size,
        seed: ctx.global.seed,
        hidden: p.hidden.clone(),
        standardize: p.standardize,
    };
    let (mut model, history) = fit(&data, &cfg)?;
    model.corpus_fingerprint = Some(file_digest(&manifest_path)?);

    let path = ctx.out("model.jsonl");
    model.save(&path, Some(&fp))?;
    write_with(&ctx.out("loss.csv"), |w| {
        csv_fingerprint(w, &fp)?;
        writeln!(w, "epoch,mse")?;
        for (i, l) in history.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, l)?;
        }
        Ok(())
    })?;
    match history.last() {
        Some(l) => println!("train: {} samples, {} epochs, final mse {l:.6e} -> {}", data.len(), cfg.epochs, path.display()),
        None => println!("train: {} samples, 0 epochs -> {}", data.len(), path.display()),
    }
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output file (default `<out>/scores.jsonl`).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreParams {
    pub features: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

pub fn score(ctx: &Context, args: ScoreArgs) -> Result<()> {
    let keys = ["features", "model", "output"];
    let p: ScoreParams = ctx.file.params("score", &keys, &args)?;
    let fp = fingerprint("score", ctx.global.seed, &p, &keys)?;
    let model = MlpModel::load(&or_out(ctx, &p.model, "model.jsonl"))?;
    let features = load_features(&or_out(ctx, &p.features, "features.jsonl"))?;
    let ids: Vec<&str> = features.keys().map(String::as_str).collect();
    let scores = score_features(&model, &features, &ids)?;
    let path = or_out(ctx, &p.output, "scores.jsonl");
    write_with(&path, |w| write_scores(w, &model.extractor_id, &scores, &fp))?;
    println!("score: {} frames -> {}", scores.len(), path.display());
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Precomputed scores from `score`; otherwise the model scores the features.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Classifier whose confidence and correctness the quality is judged against.
    #[arg(long)]
    pub classifier: Option<String>,
    /// `train`, `test` or `all`.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Also correlate PSNR against the clean image as a visual-quality baseline.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub compare_psnr: Option<bool>,
    #[arg(long)]
    pub images: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    pub manifest: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub classifier: String,
    pub split: SplitSel,
    pub top_k: usize,
    /// Classifiers pooled in the accuracy table; empty means all.
    pub bank: Vec<String>,
    pub compare_psnr: bool,
    pub images: Option<PathBuf>,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            manifest: None,
            features: None,
            model: None,
            records: None,
            scores: None,
            classifier: "surrogate-eval".into(),
            split: SplitSel::Test,
            top_k: 1,
            bank: Vec::new(),
            compare_psnr: false,
            images: None,
        }
    }
}

/// The correlation and ROC numbers `eval` writes to its summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub format: String,
    pub version: u32,
    pub config_fingerprint: String,
    pub classifier: String,
    pub n: usize,
    pub positives: usize,
    pub spearman_all: f64,
    pub auc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psnr_spearman_all: Option<f64>,
}

pub fn eval(ctx: &Context, args: EvalArgs) -> Result<()> {
    let keys = ["manifest", "features", "model", "records", "scores", "images"];
    let p: EvalParams = ctx.file.params("eval", &keys, &args)?;
    let fp = fingerprint("eval", ctx.global.seed, &p, &keys)?;
    let manifest = load_manifest(&or_out(ctx, &p.manifest, "manifest.jsonl"))?;
    let entries = p.split.entries(&manifest);
    if entries.is_empty() {
        bail!("the {:?} split is empty", p.split);
    }
    let store = RecordStore::load(&or_out(ctx, &p.records, "records.jsonl"))?;

    let quality: HashMap<String, f64> = match &p.scores {
        Some(path) => read_scores(path)?,
        None => {
            let model = MlpModel::load(&or_out(ctx, &p.model, "model.jsonl"))?;
            let features = load_features(&or_out(ctx, &p.features, "features.jsonl"))?;
            let ids: Vec<&str> = entries.iter().map(|e| e.id.as_str()).collect();
            score_features(&model, &features, &ids)?.into_iter().collect()
        }
    };
    let corr = correlation_report(entries.iter().copied(), &quality, &store, &p.classifier)?;
    let labeled = entries
        .iter()
        .map(|e| {
            let correct = store.require(&e.id, &p.classifier)?.top_k_correct(1)?;
            Ok(LabeledScore::new(e.id.clone(), quality[&e.id], correct))
        })
        .collect::<aqua::Result<Vec<_>>>()?;
    let roc = roc_auc(&labeled)?;
    let accuracy = accuracy_vs_degree(entries.iter().copied(), &store, &p.bank, p.top_k)?;

    let psnr_corr = if p.compare_psnr {
        let images = or_out(ctx, &p.images, "images");
        let proxy = entries
            .par_iter()
            .map(|e| {
                let clean = read_image(image_file(&images, &e.original_id()))?;
                let dist = read_image(image_file(&images, &e.id))?;
                Ok((e.id.clone(), psnr(&clean, &dist)?.min(PSNR_CAP_DB)))
            })
            .collect::<aqua::Result<HashMap<_, _>>>()?;
        Some(correlation_report(entries.iter().copied(), &proxy, &store, &p.classifier)?)
    } else {
        None
    };

    let positives = labeled.iter().filter(|l| l.classifier_correct).count();
    let summary = EvalSummary {
        format: REPORT_FORMAT.into(),
        version: 1,
        config_fingerprint: fp.clone(),
        classifier: p.classifier.clone(),
        n: entries.len(),
        positives,
        spearman_all: corr.all().rho,
        auc: roc.auc,
        psnr_spearman_all: psnr_corr.as_ref().map(|c| c.all().rho),
    };

    let dir = ctx.out("eval");
    write_with(&dir.join("report.txt"), |w| {
        writeln!(w, "config_fingerprint {fp}")?;
        writeln!(w, "classifier {}  split {:?}  n {}  correct {positives}", p.classifier, p.split, entries.len())?;
        writeln!(w, "\nSpearman(quality, CCC)\n{}", corr.to_table())?;
        writeln!(w, "ROC AUC {:.4}", roc.auc)?;
        if let Some(c) = &psnr_corr {
            writeln!(w, "\nSpearman(PSNR, CCC)\n{}", c.to_table())?;
        }
        writeln!(w, "\nTop-{} accuracy by degree\n{}", accuracy.top_k, accuracy.to_table())?;
        Ok(())
    })?;
    write_with(&dir.join("correlation.jsonl"), |w| Ok(corr.write_jsonl(w, Some(&fp))?))?;
    if let Some(c) = &psnr_corr {
        write_with(&dir.join("psnr_correlation.jsonl"), |w| Ok(c.write_jsonl(w, Some(&fp))?))?;
    }
    write_with(&dir.join("accuracy.jsonl"), |w| Ok(accuracy.write_jsonl(w, Some(&fp))?))?;
    write_with(&dir.join("roc.csv"), |w| {
        csv_fingerprint(w, &fp)?;
        Ok(roc.write_csv(w)?)
    })?;
    write_with(&dir.join("summary.jsonl"), |w| jsonl_line(w, &summary))?;
    print_eval(&corr, &summary);
    Ok(())
}

fn print_eval(corr: &CorrelationReport, s: &EvalSummary) {
    println!("eval: {} entries, spearman(all) {:.4}, auc {:.4}", s.n, corr.all().rho, s.auc);
    if let Some(r) = s.psnr_spearman_all {
        println!("eval: psnr baseline spearman(all) {r:.4}");
    }
}

/// Reads the summary written by `eval`.
pub fn read_summary(path: &std::path::Path) -> Result<EvalSummary> {
    let text = std::fs::read_to_string(path).map_err(|e| aqua::Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(serde_json::from_str(text.trim())?)
}
