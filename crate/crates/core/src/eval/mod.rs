//! Marginal and joint-pair metrics, chi-square tests, DCR privacy and the
//! two-sample K-S comparison.

pub mod chisq;
pub mod joint;
pub mod metrics;
pub mod privacy;
pub mod report;

pub use chisq::{chi_square_test, ChiSquare};
pub use joint::{joint_counts, joint_pair_metrics, JointPair, JointPairReport, VarRef};
pub use metrics::{compare_marginals, kl_metric, rmse_metric, MetricsReport, VariableMetrics, METRIC_EPSILON};
pub use privacy::{
    compare_dcr, dcr, dcr_table, dcr_with, ks_test, ks_test_binned, DcrHistogram, DcrLevel, DcrReport, KsResult,
    LevelComparison,
};
pub use report::emit_histograms;
