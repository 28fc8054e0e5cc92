//! Frame filtering: score every `stride`-th frame, pass it when the score
//! reaches the threshold, and apply that decision to the `stride - 1` frames
//! that follow. Includes bandwidth and compute accounting and a
//! threshold-by-stride sweep.

mod stream;
mod sweep;

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use stream::{Frame, FrameSource, FrameStream, STREAM_FORMAT};
pub use sweep::{sweep, Sweep, SweepCell};

use crate::error::{Error, Result};
use crate::evaluation::{real, Confusion};
use crate::features::Extractor;
use crate::imaging::io::read_image;
use crate::jsonl;
use crate::regressor::MlpModel;

pub const FILTER_FORMAT: &str = "aqua-filter";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    #[serde(with = "real")]
    pub threshold: f64,
    pub stride: usize,
    /// Downstream cost of processing one frame, excluding detections.
    pub per_frame_ms: f64,
    pub per_detection_ms: f64,
    pub detections_per_frame: f64,
    /// Cost of scoring one frame.
    pub scorer_cost_ms: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            threshold: 0.0,
            stride: 1,
            per_frame_ms: 55.0,
            per_detection_ms: 200.0,
            detections_per_frame: 1.0,
            scorer_cost_ms: 14.2,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold.is_nan() {
            return Err(Error::invalid("filter config", "threshold is NaN"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("filter config", "stride must be at least 1"));
        }
        let costs = [self.per_frame_ms, self.per_detection_ms, self.detections_per_frame, self.scorer_cost_ms];
        if costs.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::invalid("filter config", "costs must be finite and non-negative"));
        }
        Ok(())
    }

    /// Downstream milliseconds for one passed frame.
    pub fn downstream_cost_ms(&self) -> f64 {
        self.per_frame_ms + self.per_detection_ms * self.detections_per_frame
    }
}

/// Something that assigns a quality score to a frame.
pub trait FrameScorer: Sync {
    fn score(&self, frame: &Frame) -> Result<f64>;
}

impl<F: Fn(&Frame) -> Result<f64> + Sync> FrameScorer for F {
    fn score(&self, frame: &Frame) -> Result<f64> {
        self(frame)
    }
}

/// Feature extractor plus trained regressor.
#[derive(Debug, Clone)]
pub struct AssessorScorer {
    pub model: MlpModel,
    pub extractor: Extractor,
}

impl AssessorScorer {
    pub fn new(model: MlpModel, extractor: Extractor) -> Result<Self> {
        if model.extractor_id != extractor.id() {
            return Err(Error::invalid(
                "assessor",
                format!("model expects {} features, extractor is {}", model.extractor_id, extractor.id()),
            ));
        }
        if model.input_dim() != extractor.dim() {
            return Err(Error::Dimension(format!(
                "model takes {} features, extractor emits {}",
                model.input_dim(),
                extractor.dim()
            )));
        }
        Ok(AssessorScorer { model, extractor })
    }
}

impl FrameScorer for AssessorScorer {
    fn score(&self, frame: &Frame) -> Result<f64> {
        match &frame.source {
            FrameSource::Features(v) => self.model.quality(v),
            FrameSource::Image(path) => {
                let img = read_image(path)?;
                self.model.quality(&self.extractor.extract(&frame.frame_id, &img)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub frame_id: String,
    pub scored: bool,
    pub score: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub frame_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub scorer_overhead_ms: f64,
    pub downstream_ms: f64,
    /// Downstream cost with no filtering.
    pub baseline_ms: f64,
    pub downstream_compute_fraction: f64,
    /// Scorer plus downstream cost relative to the baseline.
    pub net_compute_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub frames: usize,
    pub passed: usize,
    pub frames_scored: usize,
    pub pass_rate: f64,
    pub passed_bytes: u64,
    pub total_bytes: u64,
    pub bandwidth_fraction: f64,
    pub costs: CostSummary,
    /// Present when every frame carries a correctness label.
    pub confusion: Option<Confusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub config: FilterConfig,
    pub frames: Vec<FrameOutcome>,
    pub summary: FilterSummary,
    pub diagnostics: Vec<Diagnostic>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Scorer and downstream cost of a finished run.
pub fn accounting(report: &FilterReport, cfg: &FilterConfig) -> CostSummary {
    let s = &report.summary;
    let per = cfg.downstream_cost_ms();
    let scorer_overhead_ms = s.frames_scored as f64 * cfg.scorer_cost_ms;
    let downstream_ms = s.passed as f64 * per;
    let baseline_ms = s.frames as f64 * per;
    CostSummary {
        scorer_overhead_ms,
        downstream_ms,
        baseline_ms,
        downstream_compute_fraction: ratio(downstream_ms, baseline_ms),
        net_compute_fraction: ratio(scorer_overhead_ms + downstream_ms, baseline_ms),
    }
}

/// Shared decision loop; `score(i)` is only called for scored indices.
pub(crate) fn decide(
    stream: &FrameStream,
    cfg: &FilterConfig,
    score: impl Fn(usize) -> std::result::Result<f64, String>,
) -> Result<FilterReport> {
    cfg.validate()?;
    if stream.is_empty() {
        return Err(Error::Empty("frame stream"));
    }
    let mut frames = Vec::with_capacity(stream.len());
    let mut diagnostics = Vec::new();
    let mut confusion = Confusion::default();
    let mut labeled = true;
    let mut decision = false;
    let (mut passed, mut passed_bytes) = (0, 0);
    for (i, f) in stream.frames().iter().enumerate() {
        let scored = i % cfg.stride == 0;
        let mut value = None;
        if scored {
            match score(i) {
                Ok(s) if s.is_nan() => {
                    diagnostics.push(Diagnostic { frame_id: f.frame_id.clone(), error: "score is NaN".into() });
                    decision = false;
                }
                Ok(s) => {
                    value = Some(s);
                    decision = s >= cfg.threshold;
                }
                Err(e) => {
                    log::warn!("frame {} failed closed: {e}", f.frame_id);
                    diagnostics.push(Diagnostic { frame_id: f.frame_id.clone(), error: e });
                    decision = false;
                }
            }
        }
        if decision {
            passed += 1;
            passed_bytes += f.byte_size;
        }
        match f.correct {
            Some(c) => confusion.add(decision, c),
            None => labeled = false,
        }
        frames.push(FrameOutcome { frame_id: f.frame_id.clone(), scored, score: value, passed: decision });
    }
    let n = stream.len();
    let total_bytes = stream.total_bytes();
    let mut report = FilterReport {
        config: cfg.clone(),
        frames,
        summary: FilterSummary {
            frames: n,
            passed,
            frames_scored: n.div_ceil(cfg.stride),
            pass_rate: passed as f64 / n as f64,
            passed_bytes,
            total_bytes,
            bandwidth_fraction: if total_bytes > 0 {
                passed_bytes as f64 / total_bytes as f64
            } else {
                passed as f64 / n as f64
            },
            costs: CostSummary {
                scorer_overhead_ms: 0.0,
                downstream_ms: 0.0,
                baseline_ms: 0.0,
                downstream_compute_fraction: 0.0,
                net_compute_fraction: 0.0,
            },
            confusion: labeled.then_some(confusion),
        },
        diagnostics,
    };
    report.summary.costs = accounting(&report, cfg);
    Ok(report)
}

/// Runs the filter over a stream. Scored frames are evaluated in parallel;
/// decisions are committed in stream order. A frame whose score cannot be
/// computed is dropped and listed in the diagnostics.
pub fn run_filter(stream: &FrameStream, scorer: &dyn FrameScorer, cfg: &FilterConfig) -> Result<FilterReport> {
    cfg.validate()?;
    let scores: Vec<std::result::Result<f64, String>> = stream
        .frames()
        .par_iter()
        .step_by(cfg.stride)
        .map(|f| scorer.score(f).map_err(|e| e.to_string()))
        .collect();
    decide(stream, cfg, |i| scores[i / cfg.stride].clone())
}

impl FilterReport {
    /// Header, one line per frame, then the summary and diagnostics.
    pub fn write_jsonl<W: Write>(&self, w: &mut W, fingerprint: Option<&str>) -> Result<()> {
        let io = |e| Error::io("filter report", e);
        let mut header = serde_json::json!({
            "format": FILTER_FORMAT,
            "version": 1,
            "config": self.config,
        });
        if let Some(fp) = fingerprint {
            header["config_fingerprint"] = fp.into();
        }
        jsonl::write_line(w, &header).map_err(io)?;
        for f in &self.frames {
            jsonl::write_line(w, f).map_err(io)?;
        }
        let tail = serde_json::json!({ "summary": self.summary, "diagnostics": self.diagnostics });
        jsonl::write_line(w, &tail).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn passed_ids(&self) -> impl Iterator<Item = &str> {
        self.frames.iter().filter(|f| f.passed).map(|f| f.frame_id.as_str())
    }
}

/// Frames with precomputed scores, for synthetic streams and tests.
pub fn scored_stream(scores: &[f64], byte_size: u64) -> (FrameStream, impl FrameScorer) {
    let frames = scores
        .iter()
        .enumerate()
        .map(|(i, _)| Frame {
            frame_id: format!("frame{i:06}"),
            source: FrameSource::Image(PathBuf::from(format!("frame{i:06}.png"))),
            byte_size,
            correct: None,
        })
        .collect();
    let table = scores.to_vec();
    let scorer = move |f: &Frame| -> Result<f64> {
        let i: usize = f.frame_id["frame".len()..].parse().expect("generated id");
        Ok(table[i])
    };
    (FrameStream::new(frames).expect("generated ids are unique"), scorer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(threshold: f64, stride: usize) -> FilterConfig {
        FilterConfig { threshold, stride, ..Default::default() }
    }

    #[test]
    fn stride_one_scores_everything() {
        let (s, scorer) = scored_stream(&[0.1, 0.9, 0.4, 0.6], 10);
        let r = run_filter(&s, &scorer, &cfg(0.5, 1)).unwrap();
        assert!(r.frames.iter().all(|f| f.scored));
        assert_eq!(r.frames.iter().map(|f| f.passed).collect::<Vec<_>>(), [false, true, false, true]);
        assert_eq!(r.summary.bandwidth_fraction, 0.5);
    }

    #[test]
    fn inheritance_example() {
        let (s, scorer) = scored_stream(&[0.8, 0.0, 0.0, 0.0, 0.2, 1.0, 1.0, 1.0], 1);
        let r = run_filter(&s, &scorer, &cfg(0.5, 4)).unwrap();
        assert_eq!(r.frames.iter().map(|f| f.passed).collect::<Vec<_>>(), [true, true, true, true, false, false, false, false]);
        assert_eq!(r.summary.frames_scored, 2);
    }

    #[test]
    fn low_threshold_passes_all() {
        let (s, scorer) = scored_stream(&[-3.0, 0.0, 2.0], 7);
        let r = run_filter(&s, &scorer, &cfg(f64::NEG_INFINITY, 1)).unwrap();
        assert_eq!((r.summary.pass_rate, r.summary.bandwidth_fraction), (1.0, 1.0));
        let c = FilterConfig::default();
        let expect = 1.0 + c.scorer_cost_ms / c.downstream_cost_ms();
        assert!((r.summary.costs.net_compute_fraction - expect).abs() < 1e-12);
    }

    #[test]
    fn nothing_passes() {
        let (s, scorer) = scored_stream(&[0.1, 0.2], 7);
        let r = run_filter(&s, &scorer, &cfg(1.0, 1)).unwrap();
        assert_eq!(r.summary.bandwidth_fraction, 0.0);
        assert_eq!(r.summary.costs.downstream_ms, 0.0);
    }

    #[test]
    fn stride_quarters_overhead() {
        let scores: Vec<f64> = (0..100).map(|i| (i / 4) as f64).collect();
        let (s, scorer) = scored_stream(&scores, 1);
        let one = run_filter(&s, &scorer, &cfg(10.0, 1)).unwrap();
        let four = run_filter(&s, &scorer, &cfg(10.0, 4)).unwrap();
        assert_eq!(one.summary.passed, four.summary.passed);
        assert_eq!(one.summary.costs.scorer_overhead_ms, 4.0 * four.summary.costs.scorer_overhead_ms);
    }

    #[test]
    fn failures_fail_closed() {
        let (s, _) = scored_stream(&[0.0; 6], 1);
        let scorer = |f: &Frame| -> Result<f64> {
            if f.frame_id.ends_with('2') {
                Err(Error::Dimension("broken".into()))
            } else {
                Ok(1.0)
            }
        };
        let r = run_filter(&s, &scorer, &cfg(0.5, 2)).unwrap();
        assert_eq!(r.frames.iter().map(|f| f.passed).collect::<Vec<_>>(), [true, true, false, false, true, true]);
        assert_eq!(r.diagnostics.len(), 1);
        assert_eq!(r.diagnostics[0].frame_id, "frame000002");
    }

    #[test]
    fn report_serializes() {
        let (s, scorer) = scored_stream(&[0.3, 0.7], 5);
        let r = run_filter(&s, &scorer, &cfg(f64::NEG_INFINITY, 1)).unwrap();
        let mut buf = Vec::new();
        r.write_jsonl(&mut buf, Some("fp")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().next().unwrap().contains(r#""threshold":"-inf""#));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(cfg(0.0, 0).validate().is_err());
        assert!(cfg(f64::NAN, 1).validate().is_err());
        assert!(FilterConfig { scorer_cost_ms: -1.0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn decisions_follow_the_sampled_frame(
            scores in prop::collection::vec(0.0f64..1.0, 1..1000),
            stride in 1usize..12,
            t in 0.0f64..1.0,
        ) {
            let (s, scorer) = scored_stream(&scores, 3);
            let r = run_filter(&s, &scorer, &cfg(t, stride)).unwrap();
            for (i, f) in r.frames.iter().enumerate() {
                prop_assert_eq!(f.passed, scores[i / stride * stride] >= t);
                prop_assert_eq!(f.scored, i % stride == 0);
            }
            prop_assert_eq!(r.summary.frames_scored, scores.len().div_ceil(stride));
        }

        #[test]
        fn block_constant_quality_is_stride_insensitive(
            blocks in prop::collection::vec((0.0f64..1.0, 20usize..40), 1..40),
            t in 0.0f64..1.0,
        ) {
            let scores: Vec<f64> = blocks.iter().flat_map(|&(q, len)| std::iter::repeat_n(q, len)).collect();
            let (s, scorer) = scored_stream(&scores, 1);
            let one = run_filter(&s, &scorer, &cfg(t, 1)).unwrap();
            let four = run_filter(&s, &scorer, &cfg(t, 4)).unwrap();
            let differ = one.frames.iter().zip(&four.frames).filter(|(a, b)| a.passed != b.passed).count();
            prop_assert!(differ as f64 <= 3.0 / 20.0 * scores.len() as f64);
            prop_assert!((one.summary.bandwidth_fraction - four.summary.bandwidth_fraction).abs() <= 3.0 / 20.0);
        }
    }
}
