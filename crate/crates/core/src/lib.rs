//! Gaussian-process regression with additive kernels.
//!
//! * [`Kernel`]: additive (or tensor-product) Gaussian and Matérn 3/2 kernels
//!   with closed-form integrals over `[0, 1]`.
//! * [`FittedGp`]: simple kriging, per-direction sub-models and centered
//!   main effects, degeneracy diagnostics.
//! * [`estimate`]: likelihood, box-constrained optimizer, joint (ULM) and
//!   relaxed cyclic (RLM) hyperparameter estimation.
//! * [`benchmark`]: Sobol g-function, maximin Latin hypercubes, GP path
//!   sampling and the comparison experiments.

pub mod benchmark;
pub mod dataset;
pub mod error;
pub mod estimate;
pub mod gp;
pub mod kernel;
pub mod linalg;
pub mod persist;
pub mod quadrature;

pub use benchmark::{GFunction, Method};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use estimate::{
    additivity_ratio, estimate_rlm, estimate_ulm, neg_log_likelihood, nll_gradient, Bounds, Estimate, EstimationTrace,
    HyperParams, OptimOptions, RlmConfig, StepRecord, UlmConfig,
};
pub use gp::{detect_degenerate_design, DegeneracyReport, FittedGp};
pub use kernel::{Composition, Kernel, KernelFamily, ParamId, UnivariateKernelSpec};
pub use persist::{ModelFile, MODEL_SCHEMA_VERSION};
