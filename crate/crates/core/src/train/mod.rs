//! Training, metrics, cross-validation and result tables.

pub mod cv;
pub mod metrics;
pub mod report;
pub mod trainer;

pub use cv::{cross_validate, FoldReport, RunReport};
pub use metrics::{confusion_matrix, f1_score, macro_f1, per_class_f1, weighted_f1, F1Average};
pub use report::{aggregate_by_arch, aggregate_reports, read_reports, render_tables, Aggregate, MeanRow, Table};
pub use trainer::{evaluate_model, train_model, Evaluation, Precision, TrainConfig, TrainOutcome, TrainStatus};
