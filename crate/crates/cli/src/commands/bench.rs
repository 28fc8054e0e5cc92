//! `bench`: wall-clock latency of each assessor stage.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::hint::black_box;
use std::time::Instant;

use anyhow::{bail, Result};
use aqua::features::Extractor;
use aqua::filter::{run_filter, FilterConfig, Frame, FrameSource, FrameStream};
use aqua::imaging::ImageBuffer;
use aqua::regressor::MlpModel;
use aqua::{rng, synth};
use clap::Args;
use serde::{Deserialize, Serialize};

use super::{jsonl_line, or_out, write_with};
use crate::config::fingerprint;
use crate::Context;

/// A forward pass takes microseconds; repeat it so each run is measurable.
const FORWARD_REPEATS: usize = 200;

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    /// Side length of the square grayscale test frames.
    #[arg(long)]
    pub size: Option<usize>,
    /// Frames per run.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Timed runs per stage.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Untimed runs before timing.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Model to time; a seeded NSS model is used otherwise.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Stride of the sampled filter run compared against stride 1.
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchParams {
    pub size: usize,
    pub frames: usize,
    pub runs: usize,
    pub warmup: usize,
    pub model: Option<PathBuf>,
    pub stride: usize,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams { size: 224, frames: 16, runs: 5, warmup: 1, model: None, stride: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    /// What one timed unit is: `frame` or `stream`.
    pub unit: String,
    pub frames_scored: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub size: usize,
    pub frames: usize,
    pub runs: usize,
    pub stages: Vec<StageTiming>,
}

impl BenchReport {
    pub fn stage(&self, name: &str) -> Option<&StageTiming> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn to_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .stages
            .iter()
            .map(|s| {
                vec![
                    s.stage.clone(),
                    s.unit.clone(),
                    s.frames_scored.to_string(),
                    format!("{:.3}", s.median_ms),
                    format!("{:.3}", s.min_ms),
                    format!("{:.3}", s.max_ms),
                ]
            })
            .collect();
        aqua::evaluation::text_table(&["stage", "per", "scored", "median_ms", "min_ms", "max_ms"], &rows)
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// One timed unit of work, divided by `per` when reported.
struct Stage<'a> {
    name: String,
    unit: &'static str,
    scored: usize,
    per: f64,
    work: Box<dyn FnMut() + 'a>,
}

/// Runs every stage once per round, `warmup` untimed rounds then `runs`
/// timed ones, so slow drift in machine speed hits all stages alike.
fn time_round_robin(stages: Vec<Stage<'_>>, warmup: usize, runs: usize) -> Vec<StageTiming> {
    let mut stages = stages;
    let mut samples = vec![Vec::with_capacity(runs); stages.len()];
    for round in 0..warmup + runs {
        for (s, out) in stages.iter_mut().zip(&mut samples) {
            let t = Instant::now();
            (s.work)();
            if round >= warmup {
                out.push(t.elapsed().as_secs_f64() * 1e3 / s.per);
            }
        }
    }
    stages
        .into_iter()
        .zip(samples)
        .map(|(s, mut ms)| StageTiming {
            stage: s.name,
            unit: s.unit.into(),
            frames_scored: s.scored,
            median_ms: median(&mut ms),
            min_ms: ms[0],
            max_ms: ms[ms.len() - 1],
        })
        .collect()
}

/// Stages: `nss`, `forward`, `assess` (both, per frame) and the scorer
/// time of a stride-1 and a stride-`stride` filter run over the same frames.
pub fn run_bench(p: &BenchParams, model: &MlpModel, seed: u64) -> Result<BenchReport> {
    if p.runs == 0 || p.frames == 0 || p.stride == 0 {
        bail!("bench needs at least one run, one frame and a stride of at least 1");
    }
    let extractor: Extractor = model.extractor_id.parse()?;
    if !extractor.is_native() {
        bail!("cannot time external extractor {}", extractor.id());
    }
    let frames: Vec<ImageBuffer> =
        (0..p.frames).map(|i| synth::texture(p.size, p.size, 1, rng::derive(&[seed, 0xBE7, i as u64]))).collect();
    let n = p.frames as f64;
    let features: Vec<_> =
        frames.iter().map(|f| extractor.extract("bench", f)).collect::<aqua::Result<Vec<_>>>()?;

    let by_id: HashMap<String, &ImageBuffer> = frames.iter().enumerate().map(|(i, f)| (format!("b{i:05}"), f)).collect();
    let stream = FrameStream::new(
        (0..p.frames)
            .map(|i| Frame {
                frame_id: format!("b{i:05}"),
                source: FrameSource::Image(PathBuf::from(format!("b{i:05}"))),
                byte_size: 1,
                correct: None,
            })
            .collect(),
    )?;
    let scorer = |f: &Frame| model.quality(&extractor.extract(&f.frame_id, by_id[&f.frame_id])?);

    let (frames, features, extractor, stream, scorer) = (&frames, &features, &extractor, &stream, &scorer);
    let mut stages = vec![
        Stage {
            name: "nss".into(),
            unit: "frame",
            scored: p.frames,
            per: n,
            work: Box::new(move || {
                for f in frames {
                    black_box(extractor.extract("bench", f).ok());
                }
            }),
        },
        Stage {
            name: "forward".into(),
            unit: "frame",
            scored: p.frames,
            per: n * FORWARD_REPEATS as f64,
            work: Box::new(move || {
                for _ in 0..FORWARD_REPEATS {
                    for v in features {
                        black_box(model.forward(v).ok());
                    }
                }
            }),
        },
        Stage {
            name: "assess".into(),
            unit: "frame",
            scored: p.frames,
            per: n,
            work: Box::new(move || {
                for f in frames {
                    black_box(extractor.extract("bench", f).and_then(|v| model.quality(&v)).ok());
                }
            }),
        },
    ];
    for stride in [1, p.stride] {
        let cfg = FilterConfig { threshold: f64::NEG_INFINITY, stride, ..FilterConfig::default() };
        stages.push(Stage {
            name: format!("filter_stride{stride}"),
            unit: "stream",
            scored: p.frames.div_ceil(stride),
            per: 1.0,
            work: Box::new(move || {
                black_box(run_filter(stream, scorer, &cfg).ok());
            }),
        });
    }
    let stages = time_round_robin(stages, p.warmup, p.runs);
    Ok(BenchReport { size: p.size, frames: p.frames, runs: p.runs, stages })
}

pub fn bench(ctx: &Context, args: BenchArgs) -> Result<()> {
    let p: BenchParams = ctx.file.params("bench", &["model"], &args)?;
    let fp = fingerprint("bench", ctx.global.seed, &p, &["model"])?;
    let model = match &p.model {
        Some(_) => MlpModel::load(&or_out(ctx, &p.model, "model.jsonl"))?,
        None => MlpModel::init(&Extractor::Nss.id(), &[aqua::features::NSS_DIM, 64, 1], ctx.global.seed)?,
    };
    let report = run_bench(&p, &model, ctx.global.seed)?;
    let table = report.to_table();
    write_with(&ctx.out("bench.txt"), |w| {
        writeln!(w, "config_fingerprint {fp}")?;
        writeln!(w, "{}x{} grayscale, {} frames, {} runs", p.size, p.size, p.frames, p.runs)?;
        Ok(write!(w, "{table}")?)
    })?;
    write_with(&ctx.out("bench.jsonl"), |w| {
        jsonl_line(w, &serde_json::json!({"format": "aqua-bench", "version": 1, "config_fingerprint": fp}))?;
        jsonl_line(w, &report)
    })?;
    print!("{table}");
    Ok(())
}
