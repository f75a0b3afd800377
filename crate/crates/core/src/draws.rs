//! Posterior draws annotated with per-draw log prior and log likelihood.
//!
//! The draws are the proposal distribution for every importance sampling
//! step. `log_prior` must already be restricted to the priors that should be
//! power-scaled (for hierarchical models, only the top-level priors); this
//! module cannot verify that selection.

use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Unvalidated draws, as read from a file or produced by a sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDraws {
    pub parameter_names: Vec<String>,
    /// S x D.
    pub values: DMatrix<f64>,
    pub log_prior: Vec<f64>,
    /// S x N per-observation log likelihood. A joint column is the N = 1 case.
    pub log_lik: DMatrix<f64>,
    pub chain_ids: Option<Vec<u32>>,
}

/// Validated posterior draws.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawsMatrix {
    names: Vec<String>,
    values: DMatrix<f64>,
    log_prior: Vec<f64>,
    log_lik: DMatrix<f64>,
    log_lik_joint: Vec<f64>,
    chain_ids: Option<Vec<u32>>,
}

/// Checks the draws invariants and returns the validated matrix.
pub fn validate_draws(raw: RawDraws) -> Result<DrawsMatrix> {
    let RawDraws {
        parameter_names,
        values,
        log_prior,
        log_lik,
        chain_ids,
    } = raw;

    let s = values.nrows();
    if s < 2 {
        return Err(Error::TooFewDraws(s));
    }
    if values.ncols() == 0 {
        return Err(Error::NoParameters);
    }
    if parameter_names.len() != values.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameter names for {} value columns",
            parameter_names.len(),
            values.ncols()
        )));
    }
    if log_prior.len() != s {
        return Err(Error::LengthMismatch {
            expected: s,
            found: log_prior.len(),
        });
    }
    if log_lik.nrows() != s {
        return Err(Error::LengthMismatch {
            expected: s,
            found: log_lik.nrows(),
        });
    }
    if log_lik.ncols() == 0 {
        return Err(Error::ShapeMismatch(
            "log likelihood needs at least one column".into(),
        ));
    }
    if let Some(chains) = &chain_ids {
        if chains.len() != s {
            return Err(Error::LengthMismatch {
                expected: s,
                found: chains.len(),
            });
        }
    }

    let mut seen = HashSet::with_capacity(parameter_names.len());
    for name in &parameter_names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateName(name.clone()));
        }
    }

    for (j, name) in parameter_names.iter().enumerate() {
        if let Some(row) = values.column(j).iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row,
                column: name.clone(),
            });
        }
    }
    if let Some(row) = log_prior.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            row,
            column: ".log_prior".into(),
        });
    }
    for n in 0..log_lik.ncols() {
        if let Some(row) = log_lik.column(n).iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row,
                column: format!(".log_lik.{}", n + 1),
            });
        }
    }

    let log_lik_joint = log_lik.row_iter().map(|r| r.sum()).collect();

    Ok(DrawsMatrix {
        names: parameter_names,
        values,
        log_prior,
        log_lik,
        log_lik_joint,
        chain_ids,
    })
}

impl DrawsMatrix {
    pub fn new(
        parameter_names: Vec<String>,
        values: DMatrix<f64>,
        log_prior: Vec<f64>,
        log_lik: DMatrix<f64>,
    ) -> Result<Self> {
        validate_draws(RawDraws {
            parameter_names,
            values,
            log_prior,
            log_lik,
            chain_ids: None,
        })
    }

    /// Builds draws from a joint (already summed) log-likelihood column.
    pub fn with_joint_log_lik(
        parameter_names: Vec<String>,
        values: DMatrix<f64>,
        log_prior: Vec<f64>,
        log_lik: Vec<f64>,
    ) -> Result<Self> {
        let s = log_lik.len();
        Self::new(
            parameter_names,
            values,
            log_prior,
            DMatrix::from_vec(s, 1, log_lik),
        )
    }

    pub fn with_chain_ids(mut self, chain_ids: Vec<u32>) -> Result<Self> {
        if chain_ids.len() != self.n_draws() {
            return Err(Error::LengthMismatch {
                expected: self.n_draws(),
                found: chain_ids.len(),
            });
        }
        self.chain_ids = Some(chain_ids);
        Ok(self)
    }

    pub fn n_draws(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.log_lik.ncols()
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.names
    }

    pub fn parameter_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Draws of parameter `j` (contiguous, since storage is column-major).
    pub fn column(&self, j: usize) -> &[f64] {
        let s = self.n_draws();
        &self.values.as_slice()[j * s..(j + 1) * s]
    }

    pub fn log_prior(&self) -> &[f64] {
        &self.log_prior
    }

    pub fn log_lik(&self) -> &DMatrix<f64> {
        &self.log_lik
    }

    /// Per-draw joint log likelihood (row sums over observations).
    pub fn log_lik_joint(&self) -> &[f64] {
        &self.log_lik_joint
    }

    pub fn chain_ids(&self) -> Option<&[u32]> {
        self.chain_ids.as_deref()
    }

    /// Same log density columns, new parameter values and names.
    pub(crate) fn with_values(&self, names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        validate_draws(RawDraws {
            parameter_names: names,
            values,
            log_prior: self.log_prior.clone(),
            log_lik: self.log_lik.clone(),
            chain_ids: self.chain_ids.clone(),
        })
    }

    /// Selects rows (with repetition) in the given order.
    pub(crate) fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let values = self.values.select_rows(rows);
        let log_lik = self.log_lik.select_rows(rows);
        let log_prior = rows.iter().map(|&r| self.log_prior[r]).collect();
        let chain_ids = self
            .chain_ids
            .as_ref()
            .map(|c| rows.iter().map(|&r| c[r]).collect());
        validate_draws(RawDraws {
            parameter_names: self.names.clone(),
            values,
            log_prior,
            log_lik,
            chain_ids,
        })
    }
}
