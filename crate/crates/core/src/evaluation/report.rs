use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{spearman, Correlation};
use crate::distortions::{DistortionKind, ManifestEntry};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::opinion::{ccc, RecordStore};

pub const REPORT_FORMAT: &str = "aqua-report";

/// Left-aligned columns separated by two spaces.
pub fn text_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    /// A distortion kind name, or `all`.
    pub kind: String,
    pub n: usize,
    pub rho: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub classifier: String,
    pub rows: Vec<CorrelationRow>,
}

impl CorrelationReport {
    pub fn all(&self) -> &CorrelationRow {
        self.rows.last().expect("the all row is always present")
    }

    pub fn row(&self, kind: &str) -> Option<&CorrelationRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    pub fn to_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let rho = if r.degenerate { format!("{:.4}*", r.rho) } else { format!("{:.4}", r.rho) };
                vec![r.kind.clone(), r.n.to_string(), rho]
            })
            .collect();
        text_table(&["kind", "n", "spearman"], &rows)
    }

    pub fn write_jsonl<W: Write>(&self, w: &mut W, fingerprint: Option<&str>) -> std::io::Result<()> {
        write_report(w, "correlation", &self.classifier, &self.rows, fingerprint)
    }
}

fn write_report<W: Write, T: Serialize>(
    w: &mut W,
    report: &str,
    classifier: &str,
    rows: &[T],
    fingerprint: Option<&str>,
) -> std::io::Result<()> {
    let mut header = serde_json::json!({
        "format": REPORT_FORMAT,
        "version": 1,
        "report": report,
        "classifier": classifier,
    });
    if let Some(fp) = fingerprint {
        header["config_fingerprint"] = fp.into();
    }
    jsonl::write_line(w, &header)?;
    for r in rows {
        jsonl::write_line(w, r)?;
    }
    w.flush()
}

fn correlate(kind: String, q: &[f64], c: &[f64]) -> CorrelationRow {
    let corr = if q.len() < 3 {
        Correlation { rho: 0.0, degenerate: true }
    } else {
        spearman(q, c).expect("equal-length finite inputs")
    };
    CorrelationRow { kind, n: q.len(), rho: corr.rho, degenerate: corr.degenerate }
}

/// Spearman correlation between quality and the classifier's correct-class
/// confidence, per distortion kind plus an `all` row pooling every entry
/// (clean ones included). Kinds with fewer than 3 entries are flagged
/// degenerate.
pub fn correlation_report<'a>(
    entries: impl IntoIterator<Item = &'a ManifestEntry>,
    quality: &HashMap<String, f64>,
    store: &RecordStore,
    classifier: &str,
) -> Result<CorrelationReport> {
    let mut by_kind: BTreeMap<DistortionKind, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let (mut all_q, mut all_c) = (Vec::new(), Vec::new());
    for e in entries {
        let q = *quality
            .get(&e.id)
            .ok_or_else(|| Error::Missing { what: "quality score", id: e.id.clone() })?;
        if !q.is_finite() {
            return Err(Error::invalid("quality score", format!("{} is not finite", e.id)));
        }
        let c = ccc(store.require(&e.id, classifier)?)?;
        all_q.push(q);
        all_c.push(c);
        if e.spec.kind != DistortionKind::None {
            let slot = by_kind.entry(e.spec.kind).or_default();
            slot.0.push(q);
            slot.1.push(c);
        }
    }
    if all_q.is_empty() {
        return Err(Error::Empty("correlation entries"));
    }
    let mut rows: Vec<CorrelationRow> =
        by_kind.par_iter().map(|(k, (q, c))| correlate(k.name().into(), q, c)).collect();
    rows.push(correlate("all".into(), &all_q, &all_c));
    Ok(CorrelationReport { classifier: classifier.into(), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub kind: DistortionKind,
    pub degree_index: usize,
    pub mean_degree: f64,
    pub mean_severity: f64,
    pub n: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub top_k: usize,
    /// Accuracy on clean entries, if any were given.
    pub clean: Option<f64>,
    pub points: Vec<AccuracyPoint>,
}

impl AccuracyReport {
    pub fn curve(&self, kind: DistortionKind) -> Vec<&AccuracyPoint> {
        self.points.iter().filter(|p| p.kind == kind).collect()
    }

    pub fn to_table(&self) -> String {
        let mut rows: Vec<Vec<String>> = self
            .points
            .iter()
            .map(|p| {
                vec![
                    p.kind.to_string(),
                    p.degree_index.to_string(),
                    format!("{:.4}", p.mean_degree),
                    p.n.to_string(),
                    format!("{:.4}", p.accuracy),
                ]
            })
            .collect();
        if let Some(c) = self.clean {
            rows.insert(0, vec!["none".into(), "-".into(), "-".into(), "-".into(), format!("{c:.4}")]);
        }
        text_table(&["kind", "degree_index", "mean_degree", "n", "accuracy"], &rows)
    }

    pub fn write_jsonl<W: Write>(&self, w: &mut W, fingerprint: Option<&str>) -> std::io::Result<()> {
        write_report(w, "accuracy_vs_degree", &format!("top{}", self.top_k), &self.points, fingerprint)
    }
}

/// Top-k accuracy per (kind, degree index) bucket, pooled over the bank
/// (all stored classifiers when `bank` is empty).
pub fn accuracy_vs_degree<'a>(
    entries: impl IntoIterator<Item = &'a ManifestEntry>,
    store: &RecordStore,
    bank: &[String],
    top_k: usize,
) -> Result<AccuracyReport> {
    let bank: Vec<String> = if bank.is_empty() { store.classifiers() } else { bank.to_vec() };
    if bank.is_empty() {
        return Err(Error::Empty("classifier bank"));
    }
    #[derive(Default)]
    struct Bucket {
        hits: usize,
        n: usize,
        degree: f64,
        severity: f64,
        entries: usize,
    }
    let mut buckets: BTreeMap<(DistortionKind, usize), Bucket> = BTreeMap::new();
    let mut clean = Bucket::default();
    for e in entries {
        let slot = match e.degree_index() {
            Some(k) => {
                let b = buckets.entry((e.spec.kind, k)).or_default();
                b.degree += e.spec.degree;
                b.severity += e.spec.kind.severity(e.spec.degree);
                b.entries += 1;
                b
            }
            None => &mut clean,
        };
        for c in &bank {
            let rec = store.require(&e.id, c)?;
            slot.n += 1;
            slot.hits += usize::from(rec.top_k_correct(top_k)?);
        }
    }
    let points = buckets
        .into_iter()
        .map(|((kind, degree_index), b)| AccuracyPoint {
            kind,
            degree_index,
            mean_degree: b.degree / b.entries as f64,
            mean_severity: b.severity / b.entries as f64,
            n: b.n,
            accuracy: b.hits as f64 / b.n as f64,
        })
        .collect();
    let clean = (clean.n > 0).then(|| clean.hits as f64 / clean.n as f64);
    Ok(AccuracyReport { top_k, clean, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortions::{build_dataset, CleanImage, DatasetConfig};
    use crate::evaluation::SurrogateClassifier;
    use crate::opinion::ClassifierRecord;
    use rand::Rng;

    fn manifest(n: usize) -> Vec<ManifestEntry> {
        let clean: Vec<CleanImage> =
            (0..n).map(|i| CleanImage { id: format!("c{i}"), path: format!("c{i}.png") }).collect();
        build_dataset(&clean, &DatasetConfig::default()).unwrap().entries
    }

    fn labeled(entries: &[ManifestEntry], s: &SurrogateClassifier) -> RecordStore {
        RecordStore::from_records(s.label(entries).unwrap()).unwrap()
    }

    #[test]
    fn quality_equal_to_confidence() {
        let entries = manifest(6);
        let s = SurrogateClassifier::default();
        let store = labeled(&entries, &s);
        let q: HashMap<String, f64> = entries
            .iter()
            .map(|e| (e.id.clone(), ccc(store.require(&e.id, "surrogate").unwrap()).unwrap()))
            .collect();
        let rep = correlation_report(&entries, &q, &store, "surrogate").unwrap();
        assert_eq!(rep.rows.len(), 8);
        assert!(rep.rows.iter().all(|r| (r.rho - 1.0).abs() < 1e-12), "{}", rep.to_table());
        assert_eq!(rep.all().n, entries.len());
    }

    #[test]
    fn random_quality_is_uncorrelated() {
        // 84 clean images x 6 degrees = 504 entries per kind.
        let entries = manifest(84);
        let store = labeled(&entries, &SurrogateClassifier::default());
        let mut r = crate::rng::rng(3);
        let q: HashMap<String, f64> = entries.iter().map(|e| (e.id.clone(), r.random())).collect();
        let rep = correlation_report(&entries, &q, &store, "surrogate").unwrap();
        for row in &rep.rows {
            assert!(row.rho.abs() < 0.1, "{}: {}", row.kind, row.rho);
        }
    }

    #[test]
    fn missing_quality_is_an_error() {
        let entries = manifest(1);
        let store = labeled(&entries, &SurrogateClassifier::default());
        let err = correlation_report(&entries, &HashMap::new(), &store, "surrogate").unwrap_err();
        assert!(matches!(err, Error::Missing { .. }));
    }

    #[test]
    fn accuracy_falls_with_severity() {
        let entries = manifest(60);
        let s = SurrogateClassifier { noise_scale: 0.0, ..Default::default() };
        let store = labeled(&entries, &s);
        let rep = accuracy_vs_degree(&entries, &store, &[], 1).unwrap();
        assert_eq!(rep.clean, Some(1.0));
        for kind in DistortionKind::DISTORTED {
            let mut curve = rep.curve(kind);
            assert_eq!(curve.len(), 6);
            curve.sort_by(|a, b| a.mean_severity.total_cmp(&b.mean_severity));
            for w in curve.windows(2) {
                assert!(w[1].accuracy <= w[0].accuracy + 0.05, "{kind}: {}", rep.to_table());
            }
        }
        let full = accuracy_vs_degree(&entries, &store, &[], 10).unwrap();
        assert!(full.points.iter().all(|p| p.accuracy == 1.0));
    }

    #[test]
    fn one_hot_bucket_is_perfect() {
        let entries: Vec<ManifestEntry> = manifest(2).into_iter().filter(|e| e.id.ends_with("/3")).collect();
        let store = RecordStore::from_records(entries.iter().map(|e| {
            ClassifierRecord::new(e.id.clone(), "k", vec![0.0, 1.0, 0.0], Some(1)).unwrap()
        }))
        .unwrap();
        let rep = accuracy_vs_degree(&entries, &store, &[], 1).unwrap();
        assert!(rep.points.iter().all(|p| p.accuracy == 1.0 && p.degree_index == 3));
        let unlabeled = RecordStore::from_records(entries.iter().map(|e| {
            ClassifierRecord::new(e.id.clone(), "k", vec![0.5, 0.5], None).unwrap()
        }))
        .unwrap();
        assert!(accuracy_vs_degree(&entries, &unlabeled, &[], 1).is_err());
    }

    #[test]
    fn table_alignment() {
        let t = text_table(&["a", "long"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    long\n---  ----\nxyz  1\n");
    }
}
