//! Cumulative Jensen-Shannon divergence between weighted ECDFs.
//!
//! For two CDFs on a common ascending grid `x_0 <= ... <= x_{n-1}` the
//! integrals reduce to sums over the intervals `[x_i, x_{i+1})`:
//!
//! ```text
//! cjs(P || Q) = sum_i dx_i * [ P_i log2(2 P_i / (P_i + Q_i)) + (Q_i - P_i) / (2 ln 2) ]
//! ```
//!
//! The final open interval contributes nothing since both CDFs equal 1
//! there. The distance is the square root of the symmetrized divergence
//! normalized by its upper bound `sum_i dx_i (P_i + Q_i)`, which puts it in
//! `[0, 1]`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weighted::{pooled_grid, WeightedEcdf};

/// Default finite-difference step in alpha.
pub const DEFAULT_DELTA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CjsResult {
    pub value: f64,
    /// All support points coincide, so there is nothing to integrate over.
    pub degenerate_support: bool,
}

fn check_grid(p: &WeightedEcdf, q: &WeightedEcdf) -> Result<()> {
    if p.points() != q.points() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

fn xlog2_ratio(p: f64, q: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * (2.0 * p / (p + q)).log2()
    }
}

fn cjs_sum(x: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..x.len().saturating_sub(1) {
        let dx = x[i + 1] - x[i];
        if dx == 0.0 {
            continue;
        }
        total += dx * (xlog2_ratio(p[i], q[i]) + (q[i] - p[i]) / (2.0 * LN_2));
    }
    total
}

/// Directed divergence `cjs(P || Q)`; both ECDFs must share support points.
pub fn cjs(p: &WeightedEcdf, q: &WeightedEcdf) -> Result<f64> {
    check_grid(p, q)?;
    Ok(cjs_sum(p.points(), p.cum_weights(), q.cum_weights()))
}

fn one_sided_dist(p: &WeightedEcdf, q: &WeightedEcdf) -> CjsResult {
    let x = p.points();
    let (pc, qc) = (p.cum_weights(), q.cum_weights());
    let mut bound = 0.0;
    let mut sym = 0.0;
    for i in 0..x.len().saturating_sub(1) {
        let dx = x[i + 1] - x[i];
        if dx == 0.0 {
            continue;
        }
        bound += dx * (pc[i] + qc[i]);
        // The linear terms of the two directions cancel.
        sym += dx * (xlog2_ratio(pc[i], qc[i]) + xlog2_ratio(qc[i], pc[i]));
    }
    if !(bound > 0.0) {
        return CjsResult {
            value: 0.0,
            degenerate_support: x.first() == x.last(),
        };
    }
    CjsResult {
        value: (sym.max(0.0) / bound).sqrt().min(1.0),
        degenerate_support: false,
    }
}

/// Normalized, symmetrized metric, maximized over the sign of the variable.
pub fn cjs_dist(p: &WeightedEcdf, q: &WeightedEcdf) -> Result<CjsResult> {
    check_grid(p, q)?;
    if p.points().first() == p.points().last() {
        return Ok(CjsResult {
            value: 0.0,
            degenerate_support: true,
        });
    }
    let pos = one_sided_dist(p, q);
    let neg = one_sided_dist(&p.negated(), &q.negated());
    Ok(CjsResult {
        value: pos.value.max(neg.value),
        degenerate_support: false,
    })
}

/// Puts two ECDFs on the union of their support points.
pub fn pool(p: &WeightedEcdf, q: &WeightedEcdf) -> Result<(WeightedEcdf, WeightedEcdf)> {
    let grid = pooled_grid(p.points(), q.points());
    Ok((p.on_grid(&grid)?, q.on_grid(&grid)?))
}

/// `cjs_dist` for ECDFs with different support, evaluated on the pooled grid.
pub fn cjs_dist_pooled(p: &WeightedEcdf, q: &WeightedEcdf) -> Result<CjsResult> {
    if p.points() == q.points() {
        return cjs_dist(p, q);
    }
    let (p, q) = pool(p, q)?;
    cjs_dist(&p, &q)
}

/// Finite-difference local sensitivity from the two distances to the
/// perturbed posteriors at `alpha = 1/(1+delta)` and `alpha = 1+delta`.
///
/// The denominator is the step `log2(1 + delta)` taken in `log2(alpha)`.
pub fn d_cjs_from_distances(lower: f64, upper: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "delta {delta} must be positive"
        )));
    }
    Ok((lower + upper) / (2.0 * (1.0 + delta).log2()))
}

pub fn d_cjs(
    base: &WeightedEcdf,
    lower: &WeightedEcdf,
    upper: &WeightedEcdf,
    delta: f64,
) -> Result<f64> {
    let lo = cjs_dist(base, lower)?.value;
    let hi = cjs_dist(base, upper)?.value;
    d_cjs_from_distances(lo, hi, delta)
}
