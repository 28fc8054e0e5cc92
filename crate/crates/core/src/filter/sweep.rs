use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{decide, FilterConfig, FilterReport, FrameScorer, FrameStream};
use crate::error::{Error, Result};
use crate::evaluation::real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    #[serde(with = "real")]
    pub threshold: f64,
    pub stride: usize,
    pub report: FilterReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    /// Stride-major, thresholds ascending within each stride.
    pub cells: Vec<SweepCell>,
    pub warnings: Vec<String>,
}

impl Sweep {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "threshold,stride,pass_rate,bandwidth_fraction,net_compute_fraction")?;
        for c in &self.cells {
            let s = &c.report.summary;
            writeln!(
                w,
                "{},{},{},{},{}",
                c.threshold, c.stride, s.pass_rate, s.bandwidth_fraction, s.costs.net_compute_fraction
            )?;
        }
        Ok(())
    }

    pub fn cell(&self, threshold: f64, stride: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.threshold == threshold && c.stride == stride)
    }
}

/// One filter run per (threshold, stride) pair. Each frame is scored at most
/// once across the whole grid.
pub fn sweep(
    stream: &FrameStream,
    scorer: &dyn FrameScorer,
    thresholds: &[f64],
    strides: &[usize],
    base: &FilterConfig,
) -> Result<Sweep> {
    if thresholds.is_empty() || strides.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    if thresholds.iter().any(|t| t.is_nan()) {
        return Err(Error::invalid("sweep", "NaN threshold"));
    }
    let mut warnings = Vec::new();
    let mut ts = thresholds.to_vec();
    ts.sort_by(f64::total_cmp);
    let before = ts.len();
    ts.dedup();
    if ts.len() < before {
        warnings.push(format!("dropped {} duplicate threshold(s)", before - ts.len()));
    }
    let mut ss = strides.to_vec();
    ss.sort_unstable();
    let before = ss.len();
    ss.dedup();
    if ss.len() < before {
        warnings.push(format!("dropped {} duplicate stride(s)", before - ss.len()));
    }
    if ss.contains(&0) {
        return Err(Error::invalid("sweep", "stride must be at least 1"));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let needed: Vec<usize> = (0..stream.len()).filter(|i| ss.iter().any(|s| i % s == 0)).collect();
    let computed: Vec<std::result::Result<f64, String>> = needed
        .par_iter()
        .map(|&i| scorer.score(&stream.frames()[i]).map_err(|e| e.to_string()))
        .collect();
    let mut cache = vec![None; stream.len()];
    for (i, s) in needed.into_iter().zip(computed) {
        cache[i] = Some(s);
    }

    let mut cells = Vec::with_capacity(ts.len() * ss.len());
    for &stride in &ss {
        for &threshold in &ts {
            let cfg = FilterConfig { threshold, stride, ..base.clone() };
            let report = decide(stream, &cfg, |i| cache[i].clone().expect("sampled index was scored"))?;
            cells.push(SweepCell { threshold, stride, report });
        }
    }
    Ok(Sweep { cells, warnings })
}
