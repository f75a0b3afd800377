//! Power-scaling sensitivity analysis for posterior draws.
//!
//! Given draws from a base posterior together with the per-draw log prior
//! and log likelihood, this crate estimates how the posterior changes when
//! the prior or the likelihood is raised to a power `alpha`, without
//! refitting the model:
//!
//! * [`powerscale`] computes the importance weights of each perturbation,
//! * [`psis`] stabilizes them with Pareto smoothing and reports `khat`,
//! * [`moment_match`] adapts the proposal when smoothing is not enough,
//! * [`divergence`] measures the change with the cumulative Jensen-Shannon
//!   distance,
//! * [`sensitivity`] ties it together and diagnoses prior-data conflict,
//!   weak likelihood or likelihood domination.
//!
//! [`oracle`] holds conjugate models with closed-form power-scaled
//! posteriors, used to check the whole pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod divergence;
pub mod draws;
pub mod error;
pub mod moment_match;
pub mod oracle;
pub mod powerscale;
pub mod psis;
pub mod quantity;
pub mod sensitivity;
pub mod weighted;

pub use divergence::{cjs, cjs_dist, cjs_dist_pooled, d_cjs, CjsResult, DEFAULT_DELTA};
pub use draws::{validate_draws, DrawsMatrix, RawDraws};
pub use error::{Error, Result};
pub use moment_match::{
    moment_match, transformed_log_ratios, DensityEvaluator, MomentMatchOptions, MomentMatchResult,
    PointEvaluation, TransformKind,
};
pub use powerscale::{
    alpha_grid, importance_resample, log_weights, whiten, AlphaGrid, Component, LogWeights,
    PowerScaleSpec, WhiteningTransform,
};
pub use psis::{fit_gpd_tail, psis_smooth, GpdFit, SmoothedWeights, TailIssue, KHAT_THRESHOLD};
pub use quantity::Quantity;
pub use sensitivity::{
    diagnose, powerscale_sensitivity, powerscale_sequence, quantity_derivative, quantity_estimate,
    Diagnosis, Estimate, PerturbedPosterior, SensitivityOptions, SensitivityRecord, Stabilizer,
    DEFAULT_THRESHOLD,
};
pub use weighted::{
    effective_sample_size, weighted_ecdf, weighted_moments, weighted_quantile, Moments,
    WeightedEcdf,
};
