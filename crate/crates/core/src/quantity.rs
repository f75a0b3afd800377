use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A posterior summary of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Mean,
    Sd,
    Variance,
    Median,
    Quantile(f64),
}

impl Quantity {
    pub fn quantile(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidProbability(p));
        }
        Ok(Quantity::Quantile(p))
    }

    /// Whether this is the expectation of a function of the parameter.
    pub fn is_expectation(&self) -> bool {
        matches!(self, Quantity::Mean | Quantity::Variance | Quantity::Sd)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantity::Mean => f.write_str("mean"),
            Quantity::Sd => f.write_str("sd"),
            Quantity::Variance => f.write_str("variance"),
            Quantity::Median => f.write_str("median"),
            Quantity::Quantile(p) => {
                // q05, q95, q025 ...
                let digits = format!("{p}");
                match digits.strip_prefix("0.") {
                    Some(frac) if frac.len() >= 2 => write!(f, "q{frac}"),
                    Some(frac) => write!(f, "q{frac}0"),
                    None => write!(f, "quantile({p})"),
                }
            }
        }
    }
}

impl FromStr for Quantity {
    type Err = Error;

    /// Accepts `mean`, `sd`, `var`/`variance`, `median`, `qNN` where the
    /// digits are the decimal fraction (`q05` = 0.05, `q975` = 0.975) and
    /// `quantile(p)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "mean" => return Ok(Quantity::Mean),
            "sd" => return Ok(Quantity::Sd),
            "var" | "variance" => return Ok(Quantity::Variance),
            "median" => return Ok(Quantity::Median),
            _ => {}
        }
        if let Some(inner) = s
            .strip_prefix("quantile(")
            .and_then(|r| r.strip_suffix(')'))
        {
            let p: f64 = inner
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad quantile `{s}`")))?;
            return Quantity::quantile(p);
        }
        if let Some(digits) = s.strip_prefix('q') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let p: f64 = format!("0.{digits}").parse().expect("digits");
                return Quantity::quantile(p);
            }
        }
        Err(Error::InvalidArgument(format!("unknown quantity `{s}`")))
    }
}
