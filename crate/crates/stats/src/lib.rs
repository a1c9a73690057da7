//! Multi-label classification metrics and the paired tests used to compare
//! models: McNemar, Wilcoxon signed-rank and Shapiro-Wilk.

pub mod compare;
pub mod error;
pub mod hypothesis;
pub mod metrics;

pub use compare::{discordant_counts, paired_model_comparison, ClassComparison, ClassOutcome, ComparisonTable};
pub use error::{Result, StatsError};
pub use hypothesis::{
    mcnemar, shapiro_wilk, two_sided_normal_p, wilcoxon_signed_rank, McNemarMethod, McNemarResult, ShapiroResult,
    WilcoxonMethod, WilcoxonResult,
};
pub use metrics::{
    confusion_per_class, metrics_summary, summary_table, ClassMetrics, Confusion, MacroSummary, MeanStd,
    MetricsReport,
};
