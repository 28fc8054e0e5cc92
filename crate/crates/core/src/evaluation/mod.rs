//! Correlation, ROC analysis, filter quadrants, experiment reports, and the
//! surrogate classifier used for desk-scale runs.

mod report;
mod roc;
mod stats;
mod surrogate;

pub use report::{
    accuracy_vs_degree, correlation_report, text_table, AccuracyPoint, AccuracyReport, CorrelationReport,
    CorrelationRow, REPORT_FORMAT,
};
pub use roc::{confusion, real, roc_auc, Confusion, LabeledScore, RocCurve, RocPoint};
pub use stats::{average_ranks, pearson, spearman, Correlation};
pub use surrogate::{default_bank, default_decay, evaluation_classifier, SurrogateClassifier};
