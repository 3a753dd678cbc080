//! Metrics, bootstrap intervals, ablation runners and reports.

pub mod ablation;
pub mod bootstrap;
pub mod metrics;
pub mod report;

pub use ablation::{ablation_family, ablation_intervention, FamilyAblationRow, InterventionRow, FAMILY_CONFIGS};
pub use bootstrap::{bootstrap_ci, BootstrapResult};
pub use metrics::*;
pub use report::{evaluate_grading, MetricReport};
