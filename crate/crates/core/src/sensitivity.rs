//! Perturbed-posterior sequences, quantity estimates and derivatives, and
//! the prior/likelihood sensitivity diagnosis.

use std::f64::consts::LN_2;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::divergence::{cjs_dist_pooled, d_cjs_from_distances, DEFAULT_DELTA};
use crate::draws::DrawsMatrix;
use crate::error::{Error, Result};
use crate::moment_match::{moment_match, DensityEvaluator, MomentMatchOptions};
use crate::powerscale::{log_weights, AlphaGrid, Component, PowerScaleSpec};
use crate::psis::{psis_smooth, SmoothedWeights};
use crate::quantity::Quantity;
use crate::weighted::{
    effective_sample_size, weighted_ecdf, weighted_moments, weighted_quantile, WeightedEcdf,
};

/// Sensitivity values at or above this indicate sensitivity.
pub const DEFAULT_THRESHOLD: f64 = 0.05;

/// How importance weights are stabilized.
pub enum Stabilizer<'a> {
    Psis,
    /// Pareto smoothing, followed by moment matching whenever `khat` exceeds
    /// the threshold in `options`.
    MomentMatch {
        evaluator: &'a mut dyn DensityEvaluator,
        options: MomentMatchOptions,
    },
}

impl<'a> Stabilizer<'a> {
    pub fn moment_match(evaluator: &'a mut dyn DensityEvaluator) -> Self {
        Stabilizer::MomentMatch {
            evaluator,
            options: MomentMatchOptions::default(),
        }
    }
}

/// One perturbed posterior, represented by weights on the base draws (or on
/// moment-matched draws).
#[derive(Debug, Clone)]
pub struct PerturbedPosterior<'a> {
    base: &'a DrawsMatrix,
    pub spec: PowerScaleSpec,
    pub weights: SmoothedWeights,
    normalized: Vec<f64>,
    moved: Option<DMatrix<f64>>,
}

impl<'a> PerturbedPosterior<'a> {
    pub fn base(&self) -> &'a DrawsMatrix {
        self.base
    }

    pub fn normalized_weights(&self) -> &[f64] {
        &self.normalized
    }

    /// True when moment matching moved the draws away from the base draws.
    pub fn is_moment_matched(&self) -> bool {
        self.moved.is_some()
    }

    pub fn khat(&self) -> Option<f64> {
        self.weights.khat
    }

    pub fn is_reliable(&self) -> bool {
        self.weights.is_trustworthy()
    }

    /// Support values of parameter `j` under this posterior.
    pub fn column(&self, j: usize) -> &[f64] {
        match &self.moved {
            Some(m) => {
                let s = m.nrows();
                &m.as_slice()[j * s..(j + 1) * s]
            }
            None => self.base.column(j),
        }
    }

    pub fn ecdf(&self, j: usize) -> Result<WeightedEcdf> {
        weighted_ecdf(self.column(j), &self.normalized)
    }

    pub fn ess(&self) -> Result<f64> {
        effective_sample_size(&self.normalized)
    }
}

/// Weights (and possibly moved draws) for a single perturbation.
pub fn perturb<'a>(
    draws: &'a DrawsMatrix,
    spec: PowerScaleSpec,
    stabilize: &mut Stabilizer<'_>,
) -> Result<PerturbedPosterior<'a>> {
    let smoothed = psis_smooth(&log_weights(draws, spec));
    let (weights, moved) = match stabilize {
        Stabilizer::MomentMatch { evaluator, options }
            if smoothed.khat.is_some_and(|k| k > options.khat_threshold) =>
        {
            let r = moment_match(draws, spec, &mut **evaluator, *options)?;
            if r.iterations > 0 {
                (r.weights, Some(r.draws))
            } else {
                (smoothed, None)
            }
        }
        _ => (smoothed, None),
    };
    let normalized = weights.normalized()?;
    Ok(PerturbedPosterior {
        base: draws,
        spec,
        weights,
        normalized,
        moved,
    })
}

/// One perturbed posterior per grid alpha (alpha = 1 excluded), ascending.
pub fn powerscale_sequence<'a>(
    draws: &'a DrawsMatrix,
    component: Component,
    grid: &AlphaGrid,
    stabilize: &mut Stabilizer<'_>,
) -> Result<Vec<PerturbedPosterior<'a>>> {
    grid.alphas()
        .into_iter()
        .map(|alpha| perturb(draws, PowerScaleSpec::new(component, alpha)?, stabilize))
        .collect()
}

/// A point estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub mcse: f64,
}

/// Weighted estimate of `q`; the MCSE uses the importance-sampling ESS.
///
/// Mean: `sd / sqrt(ESS)`. Sd and variance use the normal-theory
/// approximations `sd / sqrt(2 ESS)` and `var sqrt(2 / ESS)`. Quantiles use
/// half the spread between the quantiles at `p -/+ sqrt(p (1 - p) / ESS)`.
pub fn weighted_estimate(x: &[f64], w: &[f64], q: Quantity) -> Result<Estimate> {
    let ess = effective_sample_size(w)?;
    match q {
        Quantity::Mean | Quantity::Sd | Quantity::Variance => {
            let m = weighted_moments(x, w)?;
            Ok(match q {
                Quantity::Mean => Estimate {
                    value: m.mean,
                    mcse: m.sd / ess.sqrt(),
                },
                Quantity::Sd => Estimate {
                    value: m.sd,
                    mcse: m.sd / (2.0 * ess).sqrt(),
                },
                _ => Estimate {
                    value: m.variance(),
                    mcse: m.variance() * (2.0 / ess).sqrt(),
                },
            })
        }
        Quantity::Median | Quantity::Quantile(_) => {
            let p = match q {
                Quantity::Quantile(p) => p,
                _ => 0.5,
            };
            let ecdf = weighted_ecdf(x, w)?;
            let value = weighted_quantile(&ecdf, p)?;
            let se = (p * (1.0 - p) / ess).sqrt();
            let lo_p = (p - se).max(f64::EPSILON);
            let hi_p = (p + se).min(1.0 - f64::EPSILON);
            let lo = weighted_quantile(&ecdf, lo_p)?;
            let hi = weighted_quantile(&ecdf, hi_p)?;
            Ok(Estimate {
                value,
                mcse: 0.5 * (hi - lo),
            })
        }
    }
}

pub fn quantity_estimate(
    pp: &PerturbedPosterior<'_>,
    parameter: &str,
    q: Quantity,
) -> Result<Estimate> {
    let j = pp.base.parameter_index(parameter)?;
    weighted_estimate(pp.column(j), &pp.normalized, q)
}

/// Estimate under the base posterior (equal weights).
pub fn base_estimate(draws: &DrawsMatrix, parameter: &str, q: Quantity) -> Result<Estimate> {
    let j = draws.parameter_index(parameter)?;
    weighted_estimate(draws.column(j), &vec![1.0; draws.n_draws()], q)
}

/// Derivative of the self-normalized estimate of `E[h]` with respect to
/// `log2(alpha)` at `alpha = 1`:
/// `ln 2 * (mean(log_comp * h) - mean(h) * mean(log_comp))`.
pub fn quantity_derivative(h_values: &[f64], log_comp: &[f64]) -> Result<f64> {
    if h_values.len() != log_comp.len() {
        return Err(Error::LengthMismatch {
            expected: h_values.len(),
            found: log_comp.len(),
        });
    }
    if h_values.is_empty() {
        return Err(Error::InvalidArgument("no draws".into()));
    }
    if h_values.iter().chain(log_comp).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite input".into()));
    }
    let n = h_values.len() as f64;
    let mean_h = h_values.iter().sum::<f64>() / n;
    let mean_l = log_comp.iter().sum::<f64>() / n;
    // Centered form of the same covariance, for numerical stability.
    let cov = h_values
        .iter()
        .zip(log_comp)
        .map(|(h, l)| (h - mean_h) * (l - mean_l))
        .sum::<f64>()
        / n;
    Ok(LN_2 * cov)
}

/// Local sensitivity of a quantity to power-scaling `component`, as a
/// derivative with respect to `log2(alpha)` at `alpha = 1`.
///
/// Mean, variance and sd use the analytic importance-sampling derivative.
/// Quantiles use a central difference of the weighted quantiles at
/// `alpha = 1/(1+delta)` and `alpha = 1+delta`.
pub fn quantity_gradient(
    draws: &DrawsMatrix,
    parameter: &str,
    component: Component,
    q: Quantity,
    delta: f64,
) -> Result<f64> {
    let j = draws.parameter_index(parameter)?;
    let x = draws.column(j);
    let log_comp = component.log_density(draws);
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    match q {
        Quantity::Mean => quantity_derivative(x, log_comp),
        Quantity::Variance | Quantity::Sd => {
            let sq: Vec<f64> = x.iter().map(|v| (v - mean) * (v - mean)).collect();
            let dvar = quantity_derivative(&sq, log_comp)?;
            if q == Quantity::Variance {
                Ok(dvar)
            } else {
                let sd = (sq.iter().sum::<f64>() / n).sqrt();
                if sd > 0.0 {
                    Ok(dvar / (2.0 * sd))
                } else {
                    Ok(0.0)
                }
            }
        }
        Quantity::Median | Quantity::Quantile(_) => {
            let mut stabilize = Stabilizer::Psis;
            let lower = perturb(
                draws,
                PowerScaleSpec::new(component, 1.0 / (1.0 + delta))?,
                &mut stabilize,
            )?;
            let upper = perturb(
                draws,
                PowerScaleSpec::new(component, 1.0 + delta)?,
                &mut stabilize,
            )?;
            let lo = quantity_estimate(&lower, parameter, q)?.value;
            let hi = quantity_estimate(&upper, parameter, q)?.value;
            Ok((hi - lo) / (2.0 * (1.0 + delta).log2()))
        }
    }
}

/// Cause of sensitivity, from the pattern of prior and likelihood
/// sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnosis {
    PriorDataConflict,
    WeakLikelihood,
    LikelihoodDomination,
    Insensitive,
}

impl Diagnosis {
    pub fn label(&self) -> &'static str {
        match self {
            Diagnosis::PriorDataConflict => "prior-data conflict",
            Diagnosis::WeakLikelihood => "weak likelihood",
            Diagnosis::LikelihoodDomination => "likelihood domination",
            Diagnosis::Insensitive => "insensitive",
        }
    }

    /// Report comment: only patterns that point to a problem get one.
    pub fn comment(&self) -> &'static str {
        match self {
            Diagnosis::PriorDataConflict | Diagnosis::WeakLikelihood => self.label(),
            Diagnosis::LikelihoodDomination | Diagnosis::Insensitive => "",
        }
    }

    pub fn is_problem(&self) -> bool {
        matches!(
            self,
            Diagnosis::PriorDataConflict | Diagnosis::WeakLikelihood
        )
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Threshold comparisons are inclusive.
pub fn diagnose(prior_s: f64, lik_s: f64, threshold: f64) -> Diagnosis {
    match (prior_s >= threshold, lik_s >= threshold) {
        (true, true) => Diagnosis::PriorDataConflict,
        (true, false) => Diagnosis::WeakLikelihood,
        (false, true) => Diagnosis::LikelihoodDomination,
        (false, false) => Diagnosis::Insensitive,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityOptions {
    pub delta: f64,
    pub threshold: f64,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl SensitivityOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "delta {} must lie in (0, 0.5)",
                self.delta
            )));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "threshold {} must be positive",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRecord {
    pub parameter: String,
    pub prior_sensitivity: f64,
    pub likelihood_sensitivity: f64,
    pub diagnosis: Diagnosis,
    /// Largest `khat` of the two prior perturbations, if estimable.
    pub khat_prior: Option<f64>,
    pub khat_likelihood: Option<f64>,
    pub reliable_prior: bool,
    pub reliable_likelihood: bool,
}

impl SensitivityRecord {
    pub fn is_reliable(&self) -> bool {
        self.reliable_prior && self.reliable_likelihood
    }
}

fn max_khat(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

struct ComponentPair<'a> {
    lower: PerturbedPosterior<'a>,
    upper: PerturbedPosterior<'a>,
}

impl ComponentPair<'_> {
    fn khat(&self) -> Option<f64> {
        max_khat(self.lower.khat(), self.upper.khat())
    }

    fn reliable(&self) -> bool {
        self.lower.is_reliable() && self.upper.is_reliable()
    }

    fn sensitivity(&self, j: usize, base: &WeightedEcdf, delta: f64) -> Result<f64> {
        let lo = cjs_dist_pooled(base, &self.lower.ecdf(j)?)?.value;
        let hi = cjs_dist_pooled(base, &self.upper.ecdf(j)?)?.value;
        d_cjs_from_distances(lo, hi, delta)
    }
}

/// Local prior and likelihood sensitivity of every parameter, with diagnosis.
pub fn powerscale_sensitivity(
    draws: &DrawsMatrix,
    options: &SensitivityOptions,
    stabilize: &mut Stabilizer<'_>,
) -> Result<Vec<SensitivityRecord>> {
    options.validate()?;
    let delta = options.delta;
    let mut pairs = Vec::with_capacity(2);
    for component in Component::BOTH {
        pairs.push(ComponentPair {
            lower: perturb(
                draws,
                PowerScaleSpec::new(component, 1.0 / (1.0 + delta))?,
                stabilize,
            )?,
            upper: perturb(
                draws,
                PowerScaleSpec::new(component, 1.0 + delta)?,
                stabilize,
            )?,
        });
    }
    let (prior, lik) = (&pairs[0], &pairs[1]);

    draws
        .parameter_names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let base = WeightedEcdf::unweighted(draws.column(j))?;
            let prior_s = prior.sensitivity(j, &base, delta)?;
            let lik_s = lik.sensitivity(j, &base, delta)?;
            Ok(SensitivityRecord {
                parameter: name.clone(),
                prior_sensitivity: prior_s,
                likelihood_sensitivity: lik_s,
                diagnosis: diagnose(prior_s, lik_s, options.threshold),
                khat_prior: prior.khat(),
                khat_likelihood: lik.khat(),
                reliable_prior: prior.reliable(),
                reliable_likelihood: lik.reliable(),
            })
        })
        .collect()
}
