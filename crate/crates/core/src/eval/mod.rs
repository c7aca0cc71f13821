//! Max-F-beta evaluation, per-dataset aggregation, cross-attack summaries
//! and the epsilon-delta continuity probe.

mod continuity;
mod fbeta;
mod summary;

pub use continuity::{continuity_probe, ContinuityEstimate, ProbeNorm};
pub use fbeta::{fbeta, max_fbeta, pr_curve, precision, threshold, FBetaConfig, PrCurve};
pub use summary::{
    dataset_score, robustness_summary, summarize, ColumnSummary, DatasetScore, ImageScore,
    RobustnessSummary, StdMode,
};
