use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothing constant for log-based distances on softmax vectors that may
/// contain exact zeros.
pub const EPSILON: f64 = 1e-10;

/// Distances between two softmax outputs. Declaration order is the
/// tie-break order used when selecting a distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DistanceKind {
    #[serde(rename = "mad")]
    Mad,
    #[serde(rename = "kl")]
    Kl,
    #[serde(rename = "js")]
    Js,
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2")]
    L2,
    #[serde(rename = "bhattacharyya")]
    Bhattacharyya,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 6] = [
        DistanceKind::Mad,
        DistanceKind::Kl,
        DistanceKind::Js,
        DistanceKind::L1,
        DistanceKind::L2,
        DistanceKind::Bhattacharyya,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Mad => "mad",
            DistanceKind::Kl => "kl",
            DistanceKind::Js => "js",
            DistanceKind::L1 => "l1",
            DistanceKind::L2 => "l2",
            DistanceKind::Bhattacharyya => "bhattacharyya",
        }
    }

    /// Whether `distance(p, q) == distance(q, p)` for all inputs.
    pub fn is_symmetric(self) -> bool {
        self != DistanceKind::Kl
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        DistanceKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::invalid("distance kind", s.to_string()))
    }
}

pub(crate) fn check_distribution(p: &[f64], what: &'static str) -> Result<()> {
    if p.len() < 2 {
        return Err(Error::invalid(what, format!("{} classes (need at least 2)", p.len())));
    }
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::invalid(what, format!("probability {v}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-5 {
        return Err(Error::invalid(what, format!("probabilities sum to {sum}")));
    }
    Ok(())
}

/// `sum p ln(p / q)` with `q` already strictly positive wherever `p` is.
fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

/// Distance between two distributions of equal length.
///
/// KL smooths only its second argument, `q' = (q + eps) / (1 + N eps)`.
/// JS uses natural logarithms against the midpoint and needs no smoothing;
/// it is clamped to its analytic range `[0, ln 2]`.
pub fn distance(p: &[f64], q: &[f64], kind: DistanceKind) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!("{} vs {} classes", p.len(), q.len())));
    }
    check_distribution(p, "distribution")?;
    check_distribution(q, "distribution")?;
    Ok(distance_unchecked(p, q, kind))
}

pub(crate) fn distance_unchecked(p: &[f64], q: &[f64], kind: DistanceKind) -> f64 {
    let n = p.len() as f64;
    let abs_sum = || p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    match kind {
        DistanceKind::Mad => abs_sum() / n,
        DistanceKind::L1 => abs_sum(),
        DistanceKind::L2 => p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        DistanceKind::Kl => {
            let smoothed: Vec<f64> = q.iter().map(|qi| (qi + EPSILON) / (1.0 + n * EPSILON)).collect();
            kl_raw(p, &smoothed).max(0.0)
        }
        DistanceKind::Js => {
            let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
            (0.5 * kl_raw(p, &m) + 0.5 * kl_raw(q, &m)).clamp(0.0, std::f64::consts::LN_2)
        }
        DistanceKind::Bhattacharyya => {
            let bc: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
            (-bc.max(EPSILON).ln()).max(0.0)
        }
    }
}
