//! Weighted statistics over draws: self-normalized moments, weighted ECDFs,
//! quantiles and the importance-sampling effective sample size.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Weighted mean and standard deviation (biased, 1/sum(w) normalizer).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

impl Moments {
    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }
}

/// Normalizes nonnegative weights to sum to one.
pub fn normalize_weights(w: &[f64]) -> Result<Vec<f64>> {
    let mut total = 0.0;
    for &wi in w {
        if !(wi.is_finite() && wi >= 0.0) {
            return Err(Error::InvalidWeight(wi));
        }
        total += wi;
    }
    if !(total > 0.0) {
        return Err(Error::ZeroWeightSum);
    }
    Ok(w.iter().map(|wi| wi / total).collect())
}

/// Converts unnormalized log weights into normalized weights.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::ZeroWeightSum);
    }
    let w: Vec<f64> = log_w.iter().map(|lw| (lw - max).exp()).collect();
    normalize_weights(&w)
}

fn check_lengths(x: &[f64], w: &[f64]) -> Result<()> {
    if x.len() != w.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: w.len(),
        });
    }
    Ok(())
}

pub fn weighted_moments(x: &[f64], w: &[f64]) -> Result<Moments> {
    check_lengths(x, w)?;
    let w = normalize_weights(w)?;
    let mean: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi).sum();
    let var: f64 = x
        .iter()
        .zip(&w)
        .map(|(xi, wi)| wi * (xi - mean) * (xi - mean))
        .sum();
    Ok(Moments {
        mean,
        sd: var.max(0.0).sqrt(),
    })
}

/// `1 / sum(w_i^2)` for normalized weights; lies in `[1, S]`.
pub fn effective_sample_size(w: &[f64]) -> Result<f64> {
    let w = normalize_weights(w)?;
    let ss: f64 = w.iter().map(|wi| wi * wi).sum();
    Ok(1.0 / ss)
}

/// Step-function CDF of weighted draws.
///
/// Tied support points are kept separately, each with its own mass, so the
/// points array can contain repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEcdf {
    points: Vec<f64>,
    cum_weights: Vec<f64>,
}

impl WeightedEcdf {
    pub fn new(points: Vec<f64>, cum_weights: Vec<f64>) -> Result<Self> {
        if points.len() != cum_weights.len() {
            return Err(Error::LengthMismatch {
                expected: points.len(),
                found: cum_weights.len(),
            });
        }
        if points.is_empty() {
            return Err(Error::InvalidEcdf("no support points".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidEcdf("non-finite support point".into()));
        }
        if points.windows(2).any(|p| p[0] > p[1]) {
            return Err(Error::InvalidEcdf("points are not ascending".into()));
        }
        if cum_weights
            .windows(2)
            .any(|c| !(c[0] <= c[1]) || c[0] < 0.0)
        {
            return Err(Error::InvalidEcdf(
                "cumulative weights are not nondecreasing".into(),
            ));
        }
        let last = cum_weights[cum_weights.len() - 1];
        if (last - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidEcdf(format!(
                "final cumulative weight is {last}, expected 1"
            )));
        }
        Ok(Self {
            points,
            cum_weights,
        })
    }

    /// Equal-mass ECDF of unweighted draws.
    pub fn unweighted(x: &[f64]) -> Result<Self> {
        weighted_ecdf(x, &vec![1.0; x.len()])
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn cum_weights(&self) -> &[f64] {
        &self.cum_weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Right-continuous CDF value at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.points.partition_point(|&x| x <= t);
        if idx == 0 {
            0.0
        } else {
            self.cum_weights[idx - 1]
        }
    }

    /// Left-continuous generalized inverse: the smallest support point whose
    /// cumulative weight reaches `p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        weighted_quantile(self, p)
    }

    /// ECDF of the negated variable.
    ///
    /// `P(-X <= -x_i) = P(X >= x_i) = 1 - F(x_{i-1})`, so the cumulative
    /// weights of the reflected distribution come straight from this one.
    pub fn negated(&self) -> Self {
        let n = self.points.len();
        let mut points = Vec::with_capacity(n);
        let mut cum_weights = Vec::with_capacity(n);
        for i in (0..n).rev() {
            points.push(-self.points[i]);
            let below = if i == 0 { 0.0 } else { self.cum_weights[i - 1] };
            cum_weights.push((1.0 - below).clamp(0.0, 1.0));
        }
        Self {
            points,
            cum_weights,
        }
    }

    /// Re-expresses the step function on an ascending superset grid.
    pub fn on_grid(&self, grid: &[f64]) -> Result<Self> {
        let cum: Vec<f64> = grid.iter().map(|&t| self.eval(t)).collect();
        Self::new(grid.to_vec(), cum)
    }
}

pub fn weighted_ecdf(x: &[f64], w: &[f64]) -> Result<WeightedEcdf> {
    check_lengths(x, w)?;
    if x.is_empty() {
        return Err(Error::ZeroWeightSum);
    }
    for &wi in w {
        if !(wi.is_finite() && wi >= 0.0) {
            return Err(Error::InvalidWeight(wi));
        }
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidEcdf(format!(
            "non-finite support point {bad}"
        )));
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(w.iter().copied()).collect();
    // Ordering ties by weight makes the result independent of input order.
    pairs.sort_by(|a, b| match a.0.total_cmp(&b.0) {
        Ordering::Equal => a.1.total_cmp(&b.1),
        o => o,
    });
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeightSum);
    }
    let mut running = 0.0;
    let mut cum_weights = Vec::with_capacity(pairs.len());
    for &(_, wi) in &pairs {
        running += wi;
        cum_weights.push((running / total).min(1.0));
    }
    *cum_weights.last_mut().expect("nonempty") = 1.0;
    Ok(WeightedEcdf {
        points: pairs.into_iter().map(|p| p.0).collect(),
        cum_weights,
    })
}

pub fn weighted_quantile(ecdf: &WeightedEcdf, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    let idx = ecdf.cum_weights.partition_point(|&c| c < p);
    Ok(ecdf.points[idx.min(ecdf.points.len() - 1)])
}

/// Sorted union of two support grids, exact duplicates removed.
pub fn pooled_grid(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut grid = Vec::with_capacity(a.len() + b.len());
    grid.extend_from_slice(a);
    grid.extend_from_slice(b);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}
