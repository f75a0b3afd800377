//! Built-in oracle models selected with `--oracle NAME:key=value,...`.
//!
//! ```text
//! normal-normal:mu0=0,s0=2.5,sigma=1,y=10      (repeat y= for more observations)
//! beta-bernoulli:a=1,b=1,k=7,n=10
//! normal-student-t:mu0=0,s0=1,y=10,scale=1,df=4
//! ```

use std::fmt;
use std::str::FromStr;

use powerscale_core::oracle::{ConjugateModel, NormalStudentT, OracleEvaluator, ScalarModel};
use powerscale_core::DrawsMatrix;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    text: String,
    model: OracleModel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleModel {
    Conjugate(ConjugateModel),
    StudentT(NormalStudentT),
}

impl OracleSpec {
    pub fn model(&self) -> &OracleModel {
        &self.model
    }

    /// Exact draws from the unperturbed posterior.
    pub fn sample(&self, s: usize, seed: u64) -> Result<DrawsMatrix> {
        Ok(match &self.model {
            OracleModel::Conjugate(m) => m.sample_exact(1.0, 1.0, s, seed)?,
            OracleModel::StudentT(m) => m.sample_exact(1.0, 1.0, s, seed)?,
        })
    }

    pub fn evaluator(&self) -> OracleEvaluator<'_, OracleModel> {
        OracleEvaluator::new(&self.model)
    }
}

impl ScalarModel for OracleModel {
    fn log_prior(&self, theta: f64) -> f64 {
        match self {
            OracleModel::Conjugate(m) => m.log_prior(theta),
            OracleModel::StudentT(m) => m.log_prior(theta),
        }
    }

    fn log_lik(&self, theta: f64) -> Vec<f64> {
        match self {
            OracleModel::Conjugate(m) => m.log_lik(theta),
            OracleModel::StudentT(m) => m.log_lik(theta),
        }
    }
}

impl fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

struct Fields<'a> {
    spec: &'a str,
    pairs: Vec<(&'a str, f64)>,
}

impl<'a> Fields<'a> {
    fn parse(spec: &'a str, body: &'a str) -> Result<Self> {
        let pairs = body
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|pair| {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| invalid(spec, format!("`{pair}` is not key=value")))?;
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| invalid(spec, format!("`{v}` is not a number")))?;
                Ok((k.trim(), v))
            })
            .collect::<Result<_>>()?;
        Ok(Fields { spec, pairs })
    }

    fn all(&self, key: &str) -> Vec<f64> {
        self.pairs
            .iter()
            .filter(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .collect()
    }

    fn one(&self, key: &str) -> Result<f64> {
        match self.all(key).as_slice() {
            [v] => Ok(*v),
            [] => Err(invalid(self.spec, format!("missing `{key}`"))),
            _ => Err(invalid(self.spec, format!("`{key}` given more than once"))),
        }
    }

    fn count(&self, key: &str) -> Result<u64> {
        let v = self.one(key)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(invalid(
                self.spec,
                format!("`{key}` must be a nonnegative integer"),
            ));
        }
        Ok(v as u64)
    }

    fn only(&self, keys: &[&str]) -> Result<()> {
        match self.pairs.iter().find(|(k, _)| !keys.contains(k)) {
            Some((k, _)) => Err(invalid(self.spec, format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

fn invalid(spec: &str, reason: impl Into<String>) -> CliError {
    CliError::InvalidOracle {
        spec: spec.to_string(),
        reason: reason.into(),
    }
}

impl FromStr for OracleSpec {
    type Err = CliError;

    fn from_str(spec: &str) -> Result<Self> {
        let (name, body) = spec.split_once(':').unwrap_or((spec, ""));
        let f = Fields::parse(spec, body)?;
        let wrap = |e: powerscale_core::Error| invalid(spec, e.to_string());
        let model = match name.trim() {
            "normal-normal" => {
                f.only(&["mu0", "s0", "sigma", "y"])?;
                let y = f.all("y");
                if y.is_empty() {
                    return Err(invalid(spec, "missing `y`"));
                }
                OracleModel::Conjugate(
                    ConjugateModel::normal_normal(f.one("mu0")?, f.one("s0")?, f.one("sigma")?, y)
                        .map_err(wrap)?,
                )
            }
            "beta-bernoulli" => {
                f.only(&["a", "b", "k", "n"])?;
                OracleModel::Conjugate(
                    ConjugateModel::beta_bernoulli(
                        f.one("a")?,
                        f.one("b")?,
                        f.count("k")?,
                        f.count("n")?,
                    )
                    .map_err(wrap)?,
                )
            }
            "normal-student-t" => {
                f.only(&["mu0", "s0", "y", "scale", "df"])?;
                OracleModel::StudentT(
                    NormalStudentT::new(
                        f.one("mu0")?,
                        f.one("s0")?,
                        f.one("y")?,
                        f.one("scale")?,
                        f.one("df")?,
                    )
                    .map_err(wrap)?,
                )
            }
            other => return Err(invalid(spec, format!("unknown model `{other}`"))),
        };
        Ok(OracleSpec {
            text: spec.to_string(),
            model,
        })
    }
}
