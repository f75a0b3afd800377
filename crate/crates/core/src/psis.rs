//! Pareto smoothed importance sampling.
//!
//! The largest importance weights are modelled with a generalized Pareto
//! distribution (GPD) and replaced by its expected order statistics. The
//! fitted shape `khat` diagnoses how trustworthy the weights are.
//!
//! The GPD fit is the Zhang & Stephens (2009) empirical-Bayes estimator:
//! the profile likelihood of `theta = -k / sigma` is integrated over a fixed
//! grid, followed by a weakly informative shrinkage of `k` towards 0.5.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::powerscale::LogWeights;

/// Weights with `khat` above this value are considered unreliable.
pub const KHAT_THRESHOLD: f64 = 0.7;

/// Below this many draws the tail is not fitted.
pub const MIN_DRAWS_FOR_SMOOTHING: usize = 25;

const MIN_TAIL: usize = 5;
const MIN_GRID_POINTS: usize = 30;
const PRIOR_STRENGTH: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdFit {
    pub khat: f64,
    pub sigma: f64,
    pub tail_size: usize,
}

impl GpdFit {
    /// Quantile function of the fitted GPD (location 0).
    pub fn quantile(&self, p: f64) -> f64 {
        gpd_quantile(p, self.khat, self.sigma)
    }
}

fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < 1e-12 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * (-k * (-p).ln_1p()).exp_m1() / k
    }
}

/// Tail size `ceil(min(0.2 S, 3 sqrt(S)))`.
pub fn tail_size(s: usize) -> usize {
    let s = s as f64;
    (0.2 * s).min(3.0 * s.sqrt()).ceil() as usize
}

/// Fits a GPD to nonnegative exceedances over a threshold.
pub fn fit_gpd_tail(excesses: &[f64]) -> Result<GpdFit> {
    let n = excesses.len();
    if n < MIN_TAIL {
        return Err(Error::DegenerateTail("fewer than 5 exceedances"));
    }
    if excesses.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::DegenerateTail(
            "exceedances must be finite and nonnegative",
        ));
    }
    let mut x = excesses.to_vec();
    x.sort_by(f64::total_cmp);
    if x[0] == x[n - 1] {
        return Err(Error::DegenerateTail("all exceedances are equal"));
    }

    let nf = n as f64;
    let m = MIN_GRID_POINTS + nf.sqrt().floor() as usize;
    let x_max = x[n - 1];
    let x_star = x[((nf / 4.0 + 0.5).floor() as usize).saturating_sub(1)];
    if !(x_star > 0.0) {
        return Err(Error::DegenerateTail(
            "first quartile of exceedances is zero",
        ));
    }

    let theta: Vec<f64> = (1..=m)
        .map(|j| {
            let j = j as f64;
            1.0 / x_max + (1.0 - (m as f64 / (j - 0.5)).sqrt()) / PRIOR_STRENGTH / x_star
        })
        .collect();

    let profile: Vec<f64> = theta
        .iter()
        .map(|&t| {
            let k = x.iter().map(|xi| (-t * xi).ln_1p()).sum::<f64>() / nf;
            let l = nf * ((-t / k).ln() - k - 1.0);
            if l.is_nan() {
                f64::NEG_INFINITY
            } else {
                l
            }
        })
        .collect();

    let l_max = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !l_max.is_finite() {
        return Err(Error::DegenerateTail("profile likelihood is not finite"));
    }
    let weights: Vec<f64> = profile.iter().map(|l| (l - l_max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let theta_hat: f64 = theta.iter().zip(&weights).map(|(t, w)| t * w).sum::<f64>() / total;

    let k = x.iter().map(|xi| (-theta_hat * xi).ln_1p()).sum::<f64>() / nf;
    let sigma = -k / theta_hat;
    // Shrink towards 0.5 as if 10 extra observations had k = 0.5.
    let khat = (k * nf + 0.5 * 10.0) / (nf + 10.0);

    if !(khat.is_finite() && sigma.is_finite() && sigma > 0.0) {
        return Err(Error::DegenerateTail("estimate is not finite"));
    }
    Ok(GpdFit {
        khat,
        sigma,
        tail_size: n,
    })
}

/// Why `khat` could not be estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailIssue {
    TooFewDraws,
    NoTailVariation,
    FitFailed,
}

impl TailIssue {
    pub fn describe(&self) -> &'static str {
        match self {
            TailIssue::TooFewDraws => "too few draws",
            TailIssue::NoTailVariation => "no tail variation",
            TailIssue::FitFailed => "tail fit failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedWeights {
    /// Smoothed, unnormalized log weights (same offset as the input).
    pub log_w: Vec<f64>,
    pub khat: Option<f64>,
    pub reliable: bool,
    pub issue: Option<TailIssue>,
}

impl SmoothedWeights {
    fn pass_through(log_w: &[f64], issue: TailIssue) -> Self {
        Self {
            log_w: log_w.to_vec(),
            khat: None,
            reliable: false,
            issue: Some(issue),
        }
    }

    pub fn normalized(&self) -> Result<Vec<f64>> {
        crate::weighted::normalize_log_weights(&self.log_w)
    }

    /// Effectively-uniform weights cannot have a tail, and are trustworthy.
    pub fn is_trustworthy(&self) -> bool {
        self.reliable || self.issue == Some(TailIssue::NoTailVariation)
    }
}

pub fn psis_smooth(lw: &LogWeights) -> SmoothedWeights {
    smooth_log_weights(&lw.log_w)
}

/// Pareto-smooths raw log weights.
pub fn smooth_log_weights(log_w: &[f64]) -> SmoothedWeights {
    let s = log_w.len();
    if s < MIN_DRAWS_FOR_SMOOTHING {
        return SmoothedWeights::pass_through(log_w, TailIssue::TooFewDraws);
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return SmoothedWeights::pass_through(log_w, TailIssue::FitFailed);
    }

    let m = tail_size(s);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| log_w[a].total_cmp(&log_w[b]));
    let tail_idx = &order[s - m..];
    // Work relative to the maximum so exp() cannot overflow.
    let cutoff = (log_w[order[s - m - 1]] - max).max(f64::MIN_POSITIVE.ln());
    let exp_cutoff = cutoff.exp();
    let excesses: Vec<f64> = tail_idx
        .iter()
        .map(|&i| ((log_w[i] - max).exp() - exp_cutoff).max(0.0))
        .collect();

    if excesses.iter().all(|&e| e == excesses[0]) {
        return SmoothedWeights::pass_through(log_w, TailIssue::NoTailVariation);
    }
    let fit = match fit_gpd_tail(&excesses) {
        Ok(fit) => fit,
        Err(_) => return SmoothedWeights::pass_through(log_w, TailIssue::FitFailed),
    };

    let mut out = log_w.to_vec();
    for (z, &i) in tail_idx.iter().enumerate() {
        let p = (z as f64 + 0.5) / m as f64;
        let q = (fit.quantile(p) + exp_cutoff).ln();
        // Truncate at the raw maximum.
        out[i] = q.min(0.0) + max;
    }
    SmoothedWeights {
        log_w: out,
        khat: Some(fit.khat),
        reliable: fit.khat <= KHAT_THRESHOLD,
        issue: None,
    }
}
