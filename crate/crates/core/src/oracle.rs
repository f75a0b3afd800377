//! Models with known power-scaled posteriors.
//!
//! Used as ground truth for the importance-sampling pipeline: the exact
//! perturbed posterior is available in closed form (conjugate models) or by
//! direct numerical inversion of a one-dimensional CDF.
//!
//! Random variates come from `ChaCha8Rng` (portable, seedable) with normals
//! from the ziggurat method in `rand_distr`, so seeded draws are identical on
//! every platform.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta as BetaSampler, Distribution, StandardNormal, Uniform};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::draws::DrawsMatrix;
use crate::error::{Error, Result};
use crate::moment_match::{DensityEvaluator, PointEvaluation, RowEvaluation};

/// Common one-parameter families and their power-scaled forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    Beta { a: f64, b: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl Dist {
    pub fn validate(self) -> Result<Self> {
        let ok = match self {
            Dist::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            Dist::Exponential { rate } => rate.is_finite() && rate > 0.0,
            Dist::Beta { a, b } => a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0,
            Dist::Gamma { shape, rate } => {
                shape.is_finite() && rate.is_finite() && shape > 0.0 && rate > 0.0
            }
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidResultingParameters(format!("{self:?}")))
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Dist::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * (2.0 * PI).ln() - sd.ln() - 0.5 * z * z
            }
            Dist::Exponential { rate } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * x
                }
            }
            Dist::Beta { a, b } => {
                if !(x > 0.0 && x < 1.0) {
                    return f64::NEG_INFINITY;
                }
                xlogy(a - 1.0, x) + xlogy(b - 1.0, 1.0 - x) - ln_beta(a, b)
            }
            Dist::Gamma { shape, rate } => {
                if !(x > 0.0) {
                    return f64::NEG_INFINITY;
                }
                shape * rate.ln() - ln_gamma(shape) + xlogy(shape - 1.0, x) - rate * x
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Normal { mean, .. } => mean,
            Dist::Exponential { rate } => 1.0 / rate,
            Dist::Beta { a, b } => a / (a + b),
            Dist::Gamma { shape, rate } => shape / rate,
        }
    }

    pub fn sd(&self) -> f64 {
        match *self {
            Dist::Normal { sd, .. } => sd,
            Dist::Exponential { rate } => 1.0 / rate,
            Dist::Beta { a, b } => (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt(),
            Dist::Gamma { shape, rate } => shape.sqrt() / rate,
        }
    }
}

/// `a * ln(x)` with `0 * ln(0) = 0`.
fn xlogy(a: f64, x: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * x.ln()
    }
}

/// The distribution proportional to `dist^alpha`.
pub fn power_scaled_form(dist: Dist, alpha: f64) -> Result<Dist> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let scaled = match dist.validate()? {
        Dist::Normal { mean, sd } => Dist::Normal {
            mean,
            sd: sd / alpha.sqrt(),
        },
        Dist::Exponential { rate } => Dist::Exponential { rate: alpha * rate },
        Dist::Beta { a, b } => Dist::Beta {
            a: alpha * a - alpha + 1.0,
            b: alpha * b - alpha + 1.0,
        },
        Dist::Gamma { shape, rate } => Dist::Gamma {
            shape: alpha * shape - alpha + 1.0,
            rate: alpha * rate,
        },
    };
    scaled.validate()
}

/// Conjugate models of a single parameter `theta`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConjugateModel {
    /// `theta ~ N(prior_mean, prior_sd)`, `y_i ~ N(theta, obs_sd)`.
    NormalNormal {
        prior_mean: f64,
        prior_sd: f64,
        obs_sd: f64,
        data: Vec<f64>,
    },
    /// `theta ~ Beta(a, b)`, `successes` of `trials` Bernoulli(theta).
    BetaBernoulli {
        a: f64,
        b: f64,
        successes: u64,
        trials: u64,
    },
}

impl ConjugateModel {
    pub fn normal_normal(
        prior_mean: f64,
        prior_sd: f64,
        obs_sd: f64,
        data: Vec<f64>,
    ) -> Result<Self> {
        if !(prior_sd > 0.0 && prior_sd.is_finite() && obs_sd > 0.0 && obs_sd.is_finite()) {
            return Err(Error::InvalidResultingParameters(
                "normal-normal needs positive prior_sd and obs_sd".into(),
            ));
        }
        if !prior_mean.is_finite() || data.is_empty() || data.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidArgument(
                "normal-normal needs a finite prior mean and at least one finite observation"
                    .into(),
            ));
        }
        Ok(ConjugateModel::NormalNormal {
            prior_mean,
            prior_sd,
            obs_sd,
            data,
        })
    }

    pub fn beta_bernoulli(a: f64, b: f64, successes: u64, trials: u64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidResultingParameters(
                "beta-bernoulli needs positive a and b".into(),
            ));
        }
        if successes > trials || trials == 0 {
            return Err(Error::InvalidArgument(
                "beta-bernoulli needs 0 <= successes <= trials and trials > 0".into(),
            ));
        }
        Ok(ConjugateModel::BetaBernoulli {
            a,
            b,
            successes,
            trials,
        })
    }

    pub fn prior(&self) -> Dist {
        match *self {
            ConjugateModel::NormalNormal {
                prior_mean,
                prior_sd,
                ..
            } => Dist::Normal {
                mean: prior_mean,
                sd: prior_sd,
            },
            ConjugateModel::BetaBernoulli { a, b, .. } => Dist::Beta { a, b },
        }
    }

    pub fn n_obs(&self) -> usize {
        match self {
            ConjugateModel::NormalNormal { data, .. } => data.len(),
            ConjugateModel::BetaBernoulli { trials, .. } => *trials as usize,
        }
    }

    pub fn log_prior(&self, theta: f64) -> f64 {
        self.prior().ln_pdf(theta)
    }

    /// Per-observation log likelihood. Bernoulli observations are ordered
    /// successes first.
    pub fn log_lik(&self, theta: f64) -> Vec<f64> {
        match self {
            ConjugateModel::NormalNormal { obs_sd, data, .. } => data
                .iter()
                .map(|&y| {
                    Dist::Normal {
                        mean: theta,
                        sd: *obs_sd,
                    }
                    .ln_pdf(y)
                })
                .collect(),
            ConjugateModel::BetaBernoulli {
                successes, trials, ..
            } => {
                let (hit, miss) = if theta > 0.0 && theta < 1.0 {
                    (theta.ln(), (-theta).ln_1p())
                } else {
                    (f64::NEG_INFINITY, f64::NEG_INFINITY)
                };
                (0..*trials)
                    .map(|i| if i < *successes { hit } else { miss })
                    .collect()
            }
        }
    }

    /// Exact posterior with the prior raised to `alpha_prior` and the
    /// likelihood to `alpha_lik`.
    pub fn perturbed_posterior(&self, alpha_prior: f64, alpha_lik: f64) -> Result<Dist> {
        for a in [alpha_prior, alpha_lik] {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidAlpha(a));
            }
        }
        match self {
            ConjugateModel::NormalNormal {
                prior_mean,
                prior_sd,
                obs_sd,
                data,
            } => {
                let prior_prec = alpha_prior / (prior_sd * prior_sd);
                let lik_prec = alpha_lik / (obs_sd * obs_sd);
                let n = data.len() as f64;
                let sum: f64 = data.iter().sum();
                let precision = prior_prec + lik_prec * n;
                let mean = (prior_prec * prior_mean + lik_prec * sum) / precision;
                Dist::Normal {
                    mean,
                    sd: precision.sqrt().recip(),
                }
                .validate()
            }
            ConjugateModel::BetaBernoulli {
                a,
                b,
                successes,
                trials,
            } => {
                let scaled = power_scaled_form(Dist::Beta { a: *a, b: *b }, alpha_prior)?;
                let Dist::Beta { a, b } = scaled else {
                    unreachable!()
                };
                Dist::Beta {
                    a: a + alpha_lik * *successes as f64,
                    b: b + alpha_lik * (*trials - *successes) as f64,
                }
                .validate()
            }
        }
    }

    /// `s` iid draws from the exact perturbed posterior, annotated with the
    /// unscaled log prior and log likelihood.
    pub fn sample_exact(
        &self,
        alpha_prior: f64,
        alpha_lik: f64,
        s: usize,
        seed: u64,
    ) -> Result<DrawsMatrix> {
        if s < 2 {
            return Err(Error::TooFewDraws(s));
        }
        let posterior = self.perturbed_posterior(alpha_prior, alpha_lik)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = match posterior {
            Dist::Normal { mean, sd } => (0..s)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean + sd * z
                })
                .collect(),
            Dist::Beta { a, b } => {
                let beta = BetaSampler::new(a, b)
                    .map_err(|e| Error::InvalidResultingParameters(e.to_string()))?;
                (0..s).map(|_| beta.sample(&mut rng)).collect()
            }
            _ => unreachable!("conjugate posteriors are normal or beta"),
        };
        self.annotate(theta)
    }

    fn annotate(&self, theta: Vec<f64>) -> Result<DrawsMatrix> {
        let s = theta.len();
        let n = self.n_obs();
        let log_prior = theta.iter().map(|&t| self.log_prior(t)).collect();
        let mut log_lik = DMatrix::zeros(s, n);
        for (i, &t) in theta.iter().enumerate() {
            for (j, v) in self.log_lik(t).into_iter().enumerate() {
                log_lik[(i, j)] = v;
            }
        }
        DrawsMatrix::new(
            vec!["theta".into()],
            DMatrix::from_vec(s, 1, theta),
            log_prior,
            log_lik,
        )
    }

    pub fn evaluator(&self) -> OracleEvaluator<'_, Self> {
        OracleEvaluator { model: self }
    }
}

/// A model that can evaluate its own densities at a scalar parameter.
pub trait ScalarModel {
    fn log_prior(&self, theta: f64) -> f64;
    fn log_lik(&self, theta: f64) -> Vec<f64>;
}

impl ScalarModel for ConjugateModel {
    fn log_prior(&self, theta: f64) -> f64 {
        ConjugateModel::log_prior(self, theta)
    }

    fn log_lik(&self, theta: f64) -> Vec<f64> {
        ConjugateModel::log_lik(self, theta)
    }
}

/// In-process evaluator backed by an oracle model.
#[derive(Debug, Clone, Copy)]
pub struct OracleEvaluator<'a, M> {
    model: &'a M,
}

impl<'a, M> OracleEvaluator<'a, M> {
    pub fn new(model: &'a M) -> Self {
        OracleEvaluator { model }
    }
}

impl<M: ScalarModel> OracleEvaluator<'_, M> {
    pub fn evaluate_point(&self, theta: f64) -> RowEvaluation {
        let log_prior = self.model.log_prior(theta);
        let log_lik = self.model.log_lik(theta);
        if !log_prior.is_finite() || log_lik.iter().any(|v| !v.is_finite()) {
            return Err(format!("theta = {theta} is outside the support"));
        }
        Ok(PointEvaluation { log_prior, log_lik })
    }
}

impl<M: ScalarModel> DensityEvaluator for OracleEvaluator<'_, M> {
    fn evaluate(&mut self, points: &DMatrix<f64>) -> Result<Vec<RowEvaluation>> {
        if points.ncols() != 1 {
            return Err(Error::EvaluatorBackend(format!(
                "oracle models have one parameter, got {} columns",
                points.ncols()
            )));
        }
        Ok(points
            .column(0)
            .iter()
            .map(|&t| self.evaluate_point(t))
            .collect())
    }
}

/// Normal prior with a single Student-t observation, a non-conjugate pair in
/// which the prior dominates a distant observation. Exact draws come from
/// numerically inverting the posterior CDF on a fine grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalStudentT {
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub observation: f64,
    pub scale: f64,
    pub df: f64,
}

const INVERSION_GRID: usize = 200_001;

impl NormalStudentT {
    pub fn new(
        prior_mean: f64,
        prior_sd: f64,
        observation: f64,
        scale: f64,
        df: f64,
    ) -> Result<Self> {
        let finite = [prior_mean, prior_sd, observation, scale, df]
            .iter()
            .all(|v| v.is_finite());
        if !finite || prior_sd <= 0.0 || scale <= 0.0 || df <= 0.0 {
            return Err(Error::InvalidResultingParameters(
                "normal/student-t needs positive scales and degrees of freedom".into(),
            ));
        }
        Ok(Self {
            prior_mean,
            prior_sd,
            observation,
            scale,
            df,
        })
    }

    fn student_t_ln_pdf(&self, x: f64) -> f64 {
        let nu = self.df;
        let z = x / self.scale;
        ln_gamma((nu + 1.0) / 2.0)
            - ln_gamma(nu / 2.0)
            - 0.5 * (nu * PI).ln()
            - self.scale.ln()
            - (nu + 1.0) / 2.0 * (z * z / nu).ln_1p()
    }

    /// Draws from the posterior proportional to `prior^ap * lik^al`.
    pub fn sample_exact(
        &self,
        alpha_prior: f64,
        alpha_lik: f64,
        s: usize,
        seed: u64,
    ) -> Result<DrawsMatrix> {
        if s < 2 {
            return Err(Error::TooFewDraws(s));
        }
        let lo = self.prior_mean.min(self.observation) - 12.0 * self.prior_sd.max(self.scale);
        let hi = self.prior_mean.max(self.observation) + 12.0 * self.prior_sd.max(self.scale);
        let step = (hi - lo) / (INVERSION_GRID - 1) as f64;
        let grid: Vec<f64> = (0..INVERSION_GRID).map(|i| lo + step * i as f64).collect();
        let log_dens: Vec<f64> = grid
            .iter()
            .map(|&t| alpha_prior * self.log_prior(t) + alpha_lik * self.log_lik(t)[0])
            .collect();
        let max = log_dens.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dens: Vec<f64> = log_dens.iter().map(|l| (l - max).exp()).collect();
        // Trapezoid-rule CDF, inverted by linear interpolation.
        let mut cdf = vec![0.0; INVERSION_GRID];
        for i in 1..INVERSION_GRID {
            cdf[i] = cdf[i - 1] + 0.5 * step * (dens[i] + dens[i - 1]);
        }
        let total = cdf[INVERSION_GRID - 1];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Uniform::new(0.0, 1.0).expect("valid range");
        let theta: Vec<f64> = (0..s)
            .map(|_| {
                let u = unit.sample(&mut rng) * total;
                let i = cdf.partition_point(|&c| c < u).clamp(1, INVERSION_GRID - 1);
                let (c0, c1) = (cdf[i - 1], cdf[i]);
                let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
                grid[i - 1] + frac * step
            })
            .collect();
        let log_prior = theta.iter().map(|&t| self.log_prior(t)).collect();
        let log_lik = theta.iter().map(|&t| self.log_lik(t)[0]).collect();
        DrawsMatrix::with_joint_log_lik(
            vec!["theta".into()],
            DMatrix::from_vec(s, 1, theta),
            log_prior,
            log_lik,
        )
    }

    pub fn evaluator(&self) -> OracleEvaluator<'_, Self> {
        OracleEvaluator { model: self }
    }
}

impl ScalarModel for NormalStudentT {
    fn log_prior(&self, theta: f64) -> f64 {
        Dist::Normal {
            mean: self.prior_mean,
            sd: self.prior_sd,
        }
        .ln_pdf(theta)
    }

    fn log_lik(&self, theta: f64) -> Vec<f64> {
        vec![self.student_t_ln_pdf(self.observation - theta)]
    }
}
