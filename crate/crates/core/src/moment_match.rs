//! Importance weighted moment matching.
//!
//! When the Pareto-smoothed weights of a perturbation are unreliable, the
//! draws are moved by affine maps that match the weighted mean, marginal
//! scales or full covariance. The densities are re-evaluated at the moved
//! points through a [`DensityEvaluator`], and the proposal density follows
//! from the base posterior at the original draws and the Jacobian:
//!
//! ```text
//! log r(s) = target(T x_s) + log|det T| - [log p(x_s) + log p(y | x_s)]
//! ```
//!
//! A transform is kept only if it strictly lowers `khat`.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::draws::DrawsMatrix;
use crate::error::{Error, Result};
use crate::powerscale::{Component, PowerScaleSpec};
use crate::psis::{smooth_log_weights, SmoothedWeights, TailIssue, KHAT_THRESHOLD};

/// Log prior and per-observation log likelihood at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEvaluation {
    pub log_prior: f64,
    pub log_lik: Vec<f64>,
}

impl PointEvaluation {
    pub fn joint_log_lik(&self) -> f64 {
        self.log_lik.iter().sum()
    }
}

/// Per-row outcome: an evaluation, or a failure message for that row.
pub type RowEvaluation = std::result::Result<PointEvaluation, String>;

/// Evaluates the model's unscaled log prior and log likelihood at arbitrary
/// parameter values (a K x D matrix, one point per row). Must return K
/// entries in input order and be deterministic.
pub trait DensityEvaluator {
    fn evaluate(&mut self, points: &DMatrix<f64>) -> Result<Vec<RowEvaluation>>;
}

impl<E: DensityEvaluator + ?Sized> DensityEvaluator for &mut E {
    fn evaluate(&mut self, points: &DMatrix<f64>) -> Result<Vec<RowEvaluation>> {
        (**self).evaluate(points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    /// Match the weighted mean.
    Translate,
    /// Match weighted mean and marginal standard deviations.
    Scale,
    /// Match weighted mean and covariance.
    Covariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentMatchOptions {
    pub khat_threshold: f64,
    pub max_iterations: usize,
}

impl Default for MomentMatchOptions {
    fn default() -> Self {
        Self {
            khat_threshold: KHAT_THRESHOLD,
            max_iterations: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatchResult {
    /// S x D, possibly transformed.
    pub draws: DMatrix<f64>,
    pub weights: SmoothedWeights,
    pub initial_khat: Option<f64>,
    pub iterations: usize,
    pub transform_chain: Vec<TransformKind>,
    /// `khat` before matching and after each accepted transform. Uniform
    /// weights count as `-inf`, weights whose tail cannot be fitted as `inf`.
    pub khat_trace: Vec<f64>,
}

impl MomentMatchResult {
    pub fn khat(&self) -> Option<f64> {
        self.weights.khat
    }

    pub fn log_w(&self) -> &[f64] {
        &self.weights.log_w
    }
}

/// Orders smoothed weights by how well they behave. Uniform weights are
/// perfect; weights whose tail could not be fitted are treated as worst.
fn score(w: &SmoothedWeights) -> f64 {
    match (w.khat, w.issue) {
        (Some(k), _) => k,
        (None, Some(TailIssue::NoTailVariation)) => f64::NEG_INFINITY,
        _ => f64::INFINITY,
    }
}

fn target_log_density(spec: PowerScaleSpec, log_prior: f64, log_lik: f64) -> f64 {
    match spec.component {
        Component::Prior => spec.alpha * log_prior + log_lik,
        Component::Likelihood => log_prior + spec.alpha * log_lik,
    }
}

/// Evaluates all rows and returns (log prior, joint log likelihood).
fn evaluate_rows(
    eval: &mut dyn DensityEvaluator,
    points: &DMatrix<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = eval.evaluate(points)?;
    if rows.len() != points.nrows() {
        return Err(Error::EvaluatorBackend(format!(
            "expected {} evaluations, got {}",
            points.nrows(),
            rows.len()
        )));
    }
    let mut lp = Vec::with_capacity(rows.len());
    let mut ll = Vec::with_capacity(rows.len());
    for (row, r) in rows.into_iter().enumerate() {
        let e = r.map_err(|message| Error::EvaluatorFailure { row, message })?;
        let joint = e.joint_log_lik();
        if !e.log_prior.is_finite() || !joint.is_finite() {
            return Err(Error::EvaluatorFailure {
                row,
                message: "non-finite density".into(),
            });
        }
        lp.push(e.log_prior);
        ll.push(joint);
    }
    Ok((lp, ll))
}

const SPOT_CHECK_ROWS: usize = 10;
const SPOT_CHECK_TOL: f64 = 1e-6;

/// Evaluates a few stored draws and compares with the stored columns.
pub fn check_evaluator(draws: &DrawsMatrix, eval: &mut dyn DensityEvaluator) -> Result<()> {
    let s = draws.n_draws();
    let k = s.min(SPOT_CHECK_ROWS);
    let rows: Vec<usize> = (0..k).map(|i| i * s / k).collect();
    let points = draws.values().select_rows(&rows);
    let (lp, ll) = evaluate_rows(eval, &points)?;
    for (i, &row) in rows.iter().enumerate() {
        let dp = (lp[i] - draws.log_prior()[row]).abs();
        if !(dp <= SPOT_CHECK_TOL) {
            return Err(Error::EvaluatorInconsistent {
                row,
                detail: format!("log prior {} vs stored {}", lp[i], draws.log_prior()[row]),
            });
        }
        let dl = (ll[i] - draws.log_lik_joint()[row]).abs();
        if !(dl <= SPOT_CHECK_TOL) {
            return Err(Error::EvaluatorInconsistent {
                row,
                detail: format!(
                    "log likelihood {} vs stored {}",
                    ll[i],
                    draws.log_lik_joint()[row]
                ),
            });
        }
    }
    Ok(())
}

struct Affine {
    kind: TransformKind,
    points: DMatrix<f64>,
    log_det: f64,
}

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    x.row_mean().transpose()
}

fn weighted_column_means(x: &DMatrix<f64>, w: &[f64]) -> DVector<f64> {
    let mut m = DVector::zeros(x.ncols());
    for (i, row) in x.row_iter().enumerate() {
        m += row.transpose() * w[i];
    }
    m
}

/// Covariance around `center` with row weights summing to one.
fn covariance(x: &DMatrix<f64>, w: &[f64], center: &DVector<f64>) -> DMatrix<f64> {
    let d = x.ncols();
    let mut c = DMatrix::zeros(d, d);
    for (i, row) in x.row_iter().enumerate() {
        let diff = row.transpose() - center;
        c += &diff * diff.transpose() * w[i];
    }
    c
}

fn cholesky_regularized(m: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let d = m.nrows();
    let jitter = 1e-10 * m.trace() / d as f64;
    let reg = m + DMatrix::identity(d, d) * jitter;
    Cholesky::new(reg).ok_or(Error::SingularTransform)
}

fn propose(kind: TransformKind, x: &DMatrix<f64>, w: &[f64]) -> Result<Option<Affine>> {
    let s = x.nrows();
    let d = x.ncols();
    let mean = column_means(x);
    let wmean = weighted_column_means(x, w);
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let (moved, log_det) = match kind {
        TransformKind::Translate => (centered, 0.0),
        TransformKind::Scale => {
            let uniform = vec![1.0 / s as f64; s];
            let var = covariance(x, &uniform, &mean).diagonal();
            let wvar = covariance(x, w, &wmean).diagonal();
            if var.iter().chain(wvar.iter()).any(|v| !(*v > 0.0)) {
                return Ok(None);
            }
            let ratio: DVector<f64> = wvar.zip_map(&var, |a, b| (a / b).sqrt());
            let log_det = ratio.iter().map(|r| r.ln()).sum();
            let mut moved = centered;
            for j in 0..d {
                moved.column_mut(j).scale_mut(ratio[j]);
            }
            (moved, log_det)
        }
        TransformKind::Covariance => {
            let uniform = vec![1.0 / s as f64; s];
            let chol = cholesky_regularized(covariance(x, &uniform, &mean))?;
            let wchol = cholesky_regularized(covariance(x, w, &wmean))?;
            let l = chol.l();
            let lw = wchol.l();
            let l_inv = l.clone().try_inverse().ok_or(Error::SingularTransform)?;
            let a = &lw * l_inv;
            let log_det = lw.diagonal().iter().map(|v| v.ln()).sum::<f64>()
                - l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            if !log_det.is_finite() {
                return Err(Error::SingularTransform);
            }
            (centered * a.transpose(), log_det)
        }
    };
    let mut points = moved;
    for mut row in points.row_iter_mut() {
        row += wmean.transpose();
    }
    Ok(Some(Affine {
        kind,
        points,
        log_det,
    }))
}

const LADDER: [TransformKind; 3] = [
    TransformKind::Translate,
    TransformKind::Scale,
    TransformKind::Covariance,
];

/// Log importance ratios of the perturbed target at `points`, the draws
/// mapped by an affine transform whose log determinant is `log_det`. With
/// the identity transform these are the plain power-scaling log weights.
pub fn transformed_log_ratios(
    draws: &DrawsMatrix,
    spec: PowerScaleSpec,
    eval: &mut dyn DensityEvaluator,
    points: &DMatrix<f64>,
    log_det: f64,
) -> Result<Vec<f64>> {
    let (lp, ll) = evaluate_rows(eval, points)?;
    Ok(log_ratios(draws, spec, &lp, &ll, log_det))
}

fn log_ratios(
    draws: &DrawsMatrix,
    spec: PowerScaleSpec,
    lp: &[f64],
    ll: &[f64],
    log_det: f64,
) -> Vec<f64> {
    lp.iter()
        .zip(ll)
        .zip(draws.log_prior().iter().zip(draws.log_lik_joint()))
        .map(|((p, l), (bp, bl))| target_log_density(spec, *p, *l) + log_det - (bp + bl))
        .collect()
}

pub fn moment_match(
    draws: &DrawsMatrix,
    spec: PowerScaleSpec,
    eval: &mut dyn DensityEvaluator,
    options: MomentMatchOptions,
) -> Result<MomentMatchResult> {
    check_evaluator(draws, eval)?;

    let mut points = draws.values().clone();
    let mut log_det = 0.0;
    let mut weights = smooth_log_weights(&log_ratios(
        draws,
        spec,
        draws.log_prior(),
        draws.log_lik_joint(),
        0.0,
    ));
    let initial_khat = weights.khat;
    let mut khat_trace = vec![score(&weights)];
    let mut chain = Vec::new();

    let done = |w: &SmoothedWeights| {
        score(w) <= options.khat_threshold || w.issue == Some(TailIssue::TooFewDraws)
    };

    while chain.len() < options.max_iterations && !done(&weights) {
        let w = weights.normalized()?;
        let mut accepted = false;
        for kind in LADDER {
            let Some(affine) = propose(kind, &points, &w)? else {
                continue;
            };
            let total_log_det = log_det + affine.log_det;
            let candidate = smooth_log_weights(&transformed_log_ratios(
                draws,
                spec,
                eval,
                &affine.points,
                total_log_det,
            )?);
            if score(&candidate) < score(&weights) {
                points = affine.points;
                log_det = total_log_det;
                weights = candidate;
                khat_trace.push(score(&weights));
                chain.push(affine.kind);
                accepted = true;
                break;
            }
        }
        if !accepted {
            break;
        }
    }

    Ok(MomentMatchResult {
        draws: points,
        weights,
        initial_khat,
        iterations: chain.len(),
        transform_chain: chain,
        khat_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ConjugateModel;
    use crate::powerscale::log_weights;

    fn conflict_model() -> ConjugateModel {
        ConjugateModel::normal_normal(0.0, 2.5, 1.0, vec![10.0]).unwrap()
    }

    struct NanAt(usize);

    impl DensityEvaluator for NanAt {
        fn evaluate(&mut self, points: &DMatrix<f64>) -> Result<Vec<RowEvaluation>> {
            let model = conflict_model();
            let mut inner = model.evaluator();
            let mut rows = inner.evaluate(points)?;
            if points.nrows() > SPOT_CHECK_ROWS && self.0 < rows.len() {
                rows[self.0] = Ok(PointEvaluation {
                    log_prior: f64::NAN,
                    log_lik: vec![0.0],
                });
            }
            Ok(rows)
        }
    }

    #[test]
    fn reliable_weights_exit_immediately() {
        let model = conflict_model();
        let draws = model.sample_exact(1.0, 1.0, 1000, 3).unwrap();
        let spec = PowerScaleSpec::new(Component::Prior, 1.1).unwrap();
        let mut eval = model.evaluator();
        let r = moment_match(&draws, spec, &mut eval, MomentMatchOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.transform_chain.is_empty());
        assert_eq!(&r.draws, draws.values());
    }

    #[test]
    fn identity_jacobian_matches_power_scaling() {
        let model = conflict_model();
        let draws = model.sample_exact(1.0, 1.0, 200, 5).unwrap();
        for c in Component::BOTH {
            let spec = PowerScaleSpec::new(c, 1.7).unwrap();
            let mut eval = model.evaluator();
            let (lp, ll) = evaluate_rows(&mut eval, draws.values()).unwrap();
            let base: Vec<f64> = draws
                .log_prior()
                .iter()
                .zip(draws.log_lik_joint())
                .map(|(p, l)| p + l)
                .collect();
            let plain = log_weights(&draws, spec);
            for i in 0..draws.n_draws() {
                let r = target_log_density(spec, lp[i], ll[i]) - base[i];
                assert!((r - plain.log_w[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn severe_prior_scaling_is_rescued() {
        let model = conflict_model();
        let draws = model.sample_exact(1.0, 1.0, 4000, 11).unwrap();
        let spec = PowerScaleSpec::new(Component::Prior, 8.0).unwrap();
        let mut eval = model.evaluator();
        let r = moment_match(&draws, spec, &mut eval, MomentMatchOptions::default()).unwrap();
        assert!(r.iterations > 0);
        assert!(r.khat().unwrap() < r.initial_khat.unwrap());
    }

    #[test]
    fn nan_evaluation_is_reported_with_row() {
        let model = conflict_model();
        let draws = model.sample_exact(1.0, 1.0, 1000, 2).unwrap();
        let spec = PowerScaleSpec::new(Component::Prior, 8.0).unwrap();
        let err =
            moment_match(&draws, spec, &mut NanAt(42), MomentMatchOptions::default()).unwrap_err();
        assert!(
            matches!(err, Error::EvaluatorFailure { row: 42, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn inconsistent_evaluator_is_rejected() {
        let model = conflict_model();
        let other = ConjugateModel::normal_normal(0.0, 1.0, 1.0, vec![10.0]).unwrap();
        let draws = model.sample_exact(1.0, 1.0, 100, 2).unwrap();
        let spec = PowerScaleSpec::new(Component::Prior, 8.0).unwrap();
        let mut eval = other.evaluator();
        let err = moment_match(&draws, spec, &mut eval, MomentMatchOptions::default()).unwrap_err();
        assert!(matches!(err, Error::EvaluatorInconsistent { row: 0, .. }));
    }
}
