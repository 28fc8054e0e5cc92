use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub image_id: String,
    pub quality_score: f64,
    pub classifier_correct: bool,
}

impl LabeledScore {
    pub fn new(image_id: impl Into<String>, quality_score: f64, classifier_correct: bool) -> Self {
        LabeledScore { image_id: image_id.into(), quality_score, classifier_correct }
    }
}

/// Serializes finite reals as numbers and infinities as `"inf"` / `"-inf"`.
pub mod real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    #[serde(with = "real")]
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From `(+inf, 0, 0)` through each distinct score, descending.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "threshold,fpr,tpr")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
        }
        Ok(())
    }
}

/// ROC of "pass when score >= threshold" against "classifier correct".
/// Tied scores enter the curve together, so the area counts ties as half.
pub fn roc_auc(items: &[LabeledScore]) -> Result<RocCurve> {
    if let Some(bad) = items.iter().find(|i| !i.quality_score.is_finite()) {
        return Err(Error::invalid("score", format!("{} has a non-finite score", bad.image_id)));
    }
    let pos = items.iter().filter(|i| i.classifier_correct).count();
    let neg = items.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate(format!(
            "AUC is undefined with {pos} correct and {neg} incorrect items"
        )));
    }
    let mut sorted: Vec<&LabeledScore> = items.iter().collect();
    sorted.sort_by(|a, b| b.quality_score.total_cmp(&a.quality_score));

    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].quality_score;
        while i < sorted.len() && sorted[i].quality_score == t {
            if sorted[i].classifier_correct {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().expect("seeded with the origin");
        let p = RocPoint { threshold: t, fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

/// Filter quadrants: positive = classifier correct, predicted positive =
/// frame passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, passed: bool, correct: bool) {
        match (passed, correct) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

pub fn confusion(items: &[LabeledScore], threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for i in items {
        c.add(i.quality_score >= threshold, i.classifier_correct);
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn items(scores: &[f64], labels: &[bool]) -> Vec<LabeledScore> {
        scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (&s, &l))| LabeledScore::new(format!("f{i}"), s, l))
            .collect()
    }

    fn mann_whitney(items: &[LabeledScore]) -> f64 {
        let (mut u, mut pairs) = (0.0, 0.0);
        for p in items.iter().filter(|i| i.classifier_correct) {
            for n in items.iter().filter(|i| !i.classifier_correct) {
                pairs += 1.0;
                u += if p.quality_score > n.quality_score {
                    1.0
                } else if p.quality_score == n.quality_score {
                    0.5
                } else {
                    0.0
                };
            }
        }
        u / pairs
    }

    #[test]
    fn separated_and_inverted() {
        let s = [0.9, 0.8, 0.7, 0.2, 0.1];
        let good = items(&s, &[true, true, true, false, false]);
        assert_eq!(roc_auc(&good).unwrap().auc, 1.0);
        let bad = items(&s, &[false, false, false, true, true]);
        assert_eq!(roc_auc(&bad).unwrap().auc, 0.0);
        assert!(roc_auc(&items(&s, &[true; 5])).is_err());
    }

    #[test]
    fn random_scores_give_half() {
        let mut r = crate::rng::rng(11);
        let v: Vec<LabeledScore> = (0..10_000)
            .map(|i| LabeledScore::new(format!("{i}"), r.random(), r.random::<bool>()))
            .collect();
        assert!((roc_auc(&v).unwrap().auc - 0.5).abs() < 0.03);
    }

    #[test]
    fn curve_shape() {
        let v = items(&[0.5, 0.5, 0.3, 0.1], &[true, false, true, false]);
        let roc = roc_auc(&v).unwrap();
        assert_eq!(roc.points.len(), 4);
        assert_eq!(roc.points.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
        let mut csv = Vec::new();
        roc.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("threshold,fpr,tpr\ninf,0,0\n"));
    }

    #[test]
    fn quadrants() {
        // (score, correct): TP, FP, FN, TN at threshold 0.5
        let v = items(&[0.9, 0.6, 0.2, 0.1], &[true, false, true, false]);
        assert_eq!(confusion(&v, 0.5), Confusion { tp: 1, fp: 1, fn_: 1, tn: 1 });
        let all = confusion(&v, f64::NEG_INFINITY);
        assert_eq!((all.fn_, all.tn), (0, 0));
        let none = confusion(&v, 2.0);
        assert_eq!((none.tp, none.fp), (0, 0));
        // A score equal to the threshold passes.
        assert_eq!(confusion(&v, 0.6).tp + confusion(&v, 0.6).fp, 2);
    }

    #[test]
    fn infinite_thresholds_serialize() {
        let p = RocPoint { threshold: f64::NEG_INFINITY, fpr: 1.0, tpr: 1.0 };
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"threshold":"-inf","fpr":1.0,"tpr":1.0}"#);
        assert_eq!(serde_json::from_str::<RocPoint>(&s).unwrap(), p);
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(
            data in prop::collection::vec((0u8..20, any::<bool>()), 2..300)
        ) {
            let v: Vec<LabeledScore> = data
                .iter()
                .enumerate()
                .map(|(i, &(s, l))| LabeledScore::new(format!("{i}"), s as f64 / 7.0, l))
                .collect();
            let pos = v.iter().filter(|i| i.classifier_correct).count();
            prop_assume!(pos > 0 && pos < v.len());
            let auc = roc_auc(&v).unwrap().auc;
            prop_assert!((auc - mann_whitney(&v)).abs() < 1e-12);
        }

        #[test]
        fn confusion_partitions(
            scores in prop::collection::vec(-5.0f64..5.0, 0..100),
            t in -6.0f64..6.0,
        ) {
            let labels: Vec<bool> = scores.iter().map(|s| s.fract().abs() > 0.5).collect();
            prop_assert_eq!(confusion(&items(&scores, &labels), t).total(), scores.len());
        }
    }
}
