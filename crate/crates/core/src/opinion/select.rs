use serde::{Deserialize, Serialize};

use super::{mcos_ss, DistanceKind, RecordStore};
use crate::distortions::{DatasetManifest, DistortionKind};
use crate::error::{Error, Result};
use crate::evaluation::spearman;

/// Spearman correlation between degree and MCOS_SS for one distance, per
/// distortion kind, plus the mean of their absolute values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub distance: DistanceKind,
    pub per_kind: Vec<(DistortionKind, f64)>,
    pub mean_abs_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSelection {
    pub selected: DistanceKind,
    pub table: Vec<DistanceRow>,
}

/// Picks the distance whose MCOS_SS tracks distortion degree most
/// monotonically, averaged over distortion kinds. Ties go to the earlier
/// entry of [`DistanceKind::ALL`].
///
/// `bank` names the classifiers to average over; empty means every
/// classifier in the store.
pub fn select_distance(
    manifest: &DatasetManifest,
    store: &RecordStore,
    bank: &[String],
) -> Result<DistanceSelection> {
    let bank: Vec<String> = if bank.is_empty() { store.classifiers() } else { bank.to_vec() };
    if bank.is_empty() {
        return Err(Error::Empty("classifier bank"));
    }

    // (kind, degrees, pairs per entry)
    let mut groups = Vec::new();
    for kind in DistortionKind::DISTORTED {
        let entries: Vec<_> = manifest.entries.iter().filter(|e| e.spec.kind == kind).collect();
        if entries.is_empty() {
            continue;
        }
        let mut degrees = Vec::with_capacity(entries.len());
        let mut pairs = Vec::with_capacity(entries.len());
        for e in entries {
            degrees.push(e.spec.degree);
            pairs.push(store.pairs(&e.original_id(), &e.id, &bank)?);
        }
        let mut distinct = degrees.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(Error::invalid(
                "coverage",
                format!("{kind} has {} distinct degree(s); need at least 2", distinct.len()),
            ));
        }
        groups.push((kind, degrees, pairs));
    }
    if groups.is_empty() {
        return Err(Error::invalid("coverage", "manifest has no distorted entries"));
    }

    let mut table = Vec::with_capacity(DistanceKind::ALL.len());
    for distance in DistanceKind::ALL {
        let mut per_kind = Vec::with_capacity(groups.len());
        for (kind, degrees, pairs) in &groups {
            let scores = pairs
                .iter()
                .map(|p| mcos_ss(p, distance))
                .collect::<Result<Vec<f64>>>()?;
            // Fewer than three entries cannot be ranked meaningfully.
            let rho = if degrees.len() < 3 { 0.0 } else { spearman(degrees, &scores)?.rho };
            per_kind.push((*kind, rho));
        }
        let mean_abs_rho = per_kind.iter().map(|(_, r)| r.abs()).sum::<f64>() / per_kind.len() as f64;
        table.push(DistanceRow {
            distance,
            per_kind,
            mean_abs_rho,
        });
    }

    let mut best = &table[0];
    for row in &table[1..] {
        if row.mean_abs_rho > best.mean_abs_rho {
            best = row;
        }
    }
    Ok(DistanceSelection {
        selected: best.distance,
        table,
    })
}
