//! Test problems, metrics and the comparison experiments.

mod design;
mod experiments;
mod gfunction;
mod metrics;
mod paths;

pub use design::{lhs_maximin, maximin_lhs, min_distance, MaximinLhs, DEFAULT_LHS_STEPS};
pub use experiments::{
    derive_seed, median, run_gfunction_benchmark, run_paths_benchmark, BenchmarkReport, EstimationSettings,
    GFunctionConfig, Method, MethodSummary, PathsConfig, RunRecord, StudyDataset, REPORT_SCHEMA_VERSION,
};
pub use gfunction::GFunction;
pub use metrics::q2;
pub use paths::{sample_gp_path, PATH_JITTER_REL};
