//! Power-scaling importance weights, alpha grids, importance resampling and
//! whitening.
//!
//! Raising the prior (or likelihood) to a power `alpha` turns the base
//! posterior into a perturbed one whose density ratio to the base only
//! involves the scaled component: `w = p(theta)^(alpha - 1)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::draws::DrawsMatrix;
use crate::error::{Error, Result};
use crate::weighted::{normalize_log_weights, normalize_weights};

/// Which density is power-scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Prior,
    Likelihood,
}

impl Component {
    pub const BOTH: [Component; 2] = [Component::Prior, Component::Likelihood];

    pub fn as_str(&self) -> &'static str {
        match self {
            Component::Prior => "prior",
            Component::Likelihood => "likelihood",
        }
    }

    /// Per-draw log density of this component.
    pub fn log_density<'a>(&self, draws: &'a DrawsMatrix) -> &'a [f64] {
        match self {
            Component::Prior => draws.log_prior(),
            Component::Likelihood => draws.log_lik_joint(),
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prior" => Ok(Component::Prior),
            "likelihood" | "lik" => Ok(Component::Likelihood),
            other => Err(Error::InvalidArgument(format!(
                "unknown component `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerScaleSpec {
    pub component: Component,
    pub alpha: f64,
}

impl PowerScaleSpec {
    pub fn new(component: Component, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidAlpha(alpha));
        }
        Ok(Self { component, alpha })
    }
}

/// Alphas equally spaced in `log2(alpha)` between `lower` and `upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaGrid {
    lower: f64,
    upper: f64,
    count: usize,
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self {
            lower: 0.5,
            upper: 2.0,
            count: 11,
        }
    }
}

impl AlphaGrid {
    pub fn new(lower: f64, upper: f64, count: usize) -> Result<Self> {
        if !(lower.is_finite() && lower > 0.0 && lower < 1.0) {
            return Err(Error::InvalidGrid(format!(
                "lower bound {lower} must lie in (0, 1)"
            )));
        }
        if !(upper.is_finite() && upper > 1.0) {
            return Err(Error::InvalidGrid(format!(
                "upper bound {upper} must be greater than 1"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidGrid(format!(
                "count {count} must be at least 2"
            )));
        }
        Ok(Self {
            lower,
            upper,
            count,
        })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Grid alphas in ascending order, with the base (alpha = 1) removed.
    pub fn alphas(&self) -> Vec<f64> {
        let lo = self.lower.log2();
        let hi = self.upper.log2();
        let step = (hi - lo) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i == 0 {
                    self.lower
                } else if i == self.count - 1 {
                    self.upper
                } else {
                    (lo + step * i as f64).exp2()
                }
            })
            .filter(|a| (a - 1.0).abs() > 1e-9)
            .collect()
    }
}

pub fn alpha_grid(grid: &AlphaGrid) -> Vec<f64> {
    grid.alphas()
}

/// Unnormalized log importance weights for one perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeights {
    pub spec: PowerScaleSpec,
    pub log_w: Vec<f64>,
}

impl LogWeights {
    pub fn normalized(&self) -> Result<Vec<f64>> {
        normalize_log_weights(&self.log_w)
    }
}

pub fn log_weights(draws: &DrawsMatrix, spec: PowerScaleSpec) -> LogWeights {
    let scale = spec.alpha - 1.0;
    let log_w = spec
        .component
        .log_density(draws)
        .iter()
        .map(|lp| scale * lp)
        .collect();
    LogWeights { spec, log_w }
}

/// Systematic importance resampling: `n` rows drawn with probability
/// proportional to `w`, using one uniform offset from the seeded generator.
pub fn importance_resample(
    draws: &DrawsMatrix,
    w: &[f64],
    n: usize,
    seed: u64,
) -> Result<DrawsMatrix> {
    if w.len() != draws.n_draws() {
        return Err(Error::LengthMismatch {
            expected: draws.n_draws(),
            found: w.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewDraws(n));
    }
    let w = normalize_weights(w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset: f64 = rng.random::<f64>();
    let rows = systematic_indices(&w, n, offset);
    draws.select_rows(&rows)
}

fn systematic_indices(w: &[f64], n: usize, offset: f64) -> Vec<usize> {
    let mut rows = Vec::with_capacity(n);
    let last_positive = w.iter().rposition(|&wi| wi > 0.0).unwrap_or(0);
    let mut cum = w[0];
    let mut i = 0;
    for k in 0..n {
        let u = (offset + k as f64) / n as f64;
        while cum <= u && i < last_positive {
            i += 1;
            cum += w[i];
        }
        rows.push(i);
    }
    rows
}

/// ZCA whitening: `z = W (x - center)` with `W = V diag(lambda^-1/2) V^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    pub center: DVector<f64>,
    pub transform: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
}

impl WhiteningTransform {
    /// Maps S x D draws to whitened coordinates.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.center.transpose();
        }
        centered * self.transform.transpose()
    }

    pub fn invert(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = z * self.inverse.transpose();
        for mut row in x.row_iter_mut() {
            row += self.center.transpose();
        }
        x
    }
}

/// Sample covariance with the `1/(S-1)` normalizer.
pub(crate) fn sample_covariance(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let s = x.nrows() as f64;
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (s - 1.0);
    (mean, cov)
}

pub fn whiten(draws: &DrawsMatrix) -> Result<(DrawsMatrix, WhiteningTransform)> {
    let (center, cov) = sample_covariance(draws.values());
    let eig = SymmetricEigen::new(cov);
    let max_ev = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if !(max_ev > 0.0) || eig.eigenvalues.iter().any(|&ev| !(ev > max_ev * 1e-12)) {
        return Err(Error::SingularCovariance);
    }
    let d = eig.eigenvalues.len();
    let v = &eig.eigenvectors;
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|ev| ev.sqrt().recip()));
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let transform = v * inv_sqrt * v.transpose();
    let inverse = v * sqrt * v.transpose();
    let t = WhiteningTransform {
        center,
        transform,
        inverse,
    };
    let names = (1..=d).map(|j| format!("zca{j}")).collect();
    let whitened = draws.with_values(names, t.apply(draws.values()))?;
    Ok((whitened, t))
}
