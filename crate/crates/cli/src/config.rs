use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, ValueEnum};

use powerscale_core::{AlphaGrid, Component, Quantity, SensitivityOptions};

use crate::error::{CliError, Result};
use crate::io::DrawsFormat;
use crate::oracle_spec::OracleSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ComponentChoice {
    Prior,
    Likelihood,
    Both,
}

impl ComponentChoice {
    pub fn components(self) -> &'static [Component] {
        match self {
            ComponentChoice::Prior => &[Component::Prior],
            ComponentChoice::Likelihood => &[Component::Likelihood],
            ComponentChoice::Both => &Component::BOTH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Json,
    Csv,
}

/// Options shared by the analysis subcommands.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Draws file (CSV or NDJSON).
    #[arg(long, short)]
    pub input: PathBuf,

    /// Draws file format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<DrawsFormat>,

    #[arg(long, value_enum, default_value = "both")]
    pub component: ComponentChoice,

    #[arg(long, default_value_t = 0.5)]
    pub alpha_lower: f64,

    #[arg(long, default_value_t = 2.0)]
    pub alpha_upper: f64,

    #[arg(long, default_value_t = 11)]
    pub alpha_count: usize,

    /// Finite-difference step for the local sensitivity.
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,

    /// Sensitivities at or above this value are reported as sensitive.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,

    #[arg(long, value_delimiter = ',', default_value = "mean,sd,median,q05,q95")]
    pub quantities: Vec<String>,

    /// Glob patterns selecting parameters (default: all).
    #[arg(long, value_delimiter = ',')]
    pub variables: Vec<String>,

    /// Analyse whitened (ZCA) parameters instead of the originals.
    #[arg(long)]
    pub whiten: bool,

    /// Refine unreliable weights with importance weighted moment matching.
    #[arg(long)]
    pub moment_match: bool,

    /// Shell command evaluating densities at new points.
    #[arg(long, conflicts_with = "oracle")]
    pub evaluator: Option<String>,

    /// Seconds to wait for each evaluator batch.
    #[arg(long, default_value_t = 60.0)]
    pub evaluator_timeout: f64,

    /// Built-in model used as the density evaluator.
    #[arg(long)]
    pub oracle: Option<String>,

    #[arg(long, value_enum, default_value = "table")]
    pub output: OutputFormat,

    /// Directory for plot data written by `sequence`.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum EvaluatorChoice {
    Command { command: String, timeout: Duration },
    Oracle(OracleSpec),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub format: Option<DrawsFormat>,
    pub component: ComponentChoice,
    pub grid: AlphaGrid,
    pub options: SensitivityOptions,
    pub quantities: Vec<Quantity>,
    pub variables: Vec<glob::Pattern>,
    pub whiten: bool,
    pub moment_match: bool,
    pub evaluator: Option<EvaluatorChoice>,
    pub output: OutputFormat,
    pub plot_data: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_args(args: RunArgs) -> Result<Self> {
        let options = SensitivityOptions {
            delta: args.delta,
            threshold: args.threshold,
        };
        options.validate()?;
        let grid = AlphaGrid::new(args.alpha_lower, args.alpha_upper, args.alpha_count)?;
        let quantities = args
            .quantities
            .iter()
            .map(|q| {
                q.trim()
                    .parse::<Quantity>()
                    .map_err(|e| CliError::InvalidConfig(format!("quantity `{q}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let variables = args
            .variables
            .iter()
            .map(|p| {
                glob::Pattern::new(p.trim())
                    .map_err(|e| CliError::InvalidConfig(format!("pattern `{p}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let evaluator = match (args.evaluator, args.oracle) {
            (Some(command), _) => {
                if !(args.evaluator_timeout > 0.0 && args.evaluator_timeout.is_finite()) {
                    return Err(CliError::InvalidConfig(
                        "evaluator timeout must be positive".into(),
                    ));
                }
                Some(EvaluatorChoice::Command {
                    command,
                    timeout: Duration::from_secs_f64(args.evaluator_timeout),
                })
            }
            (None, Some(spec)) => Some(EvaluatorChoice::Oracle(spec.parse()?)),
            (None, None) => None,
        };
        if args.moment_match && evaluator.is_none() {
            return Err(CliError::InvalidConfig(
                "--moment-match needs --evaluator or --oracle".into(),
            ));
        }
        if args.moment_match && args.whiten {
            return Err(CliError::InvalidConfig(
                "--moment-match cannot be combined with --whiten".into(),
            ));
        }
        Ok(RunConfig {
            input: args.input,
            format: args.format,
            component: args.component,
            grid,
            options,
            quantities,
            variables,
            whiten: args.whiten,
            moment_match: args.moment_match,
            evaluator,
            output: args.output,
            plot_data: args.plot_data,
            seed: args.seed,
        })
    }

    /// Indices of the selected parameters, in draws order.
    pub fn select(&self, names: &[String]) -> Result<Vec<usize>> {
        if self.variables.is_empty() {
            return Ok((0..names.len()).collect());
        }
        let picked: Vec<usize> = names
            .iter()
            .enumerate()
            .filter(|(_, n)| self.variables.iter().any(|p| p.matches(n)))
            .map(|(i, _)| i)
            .collect();
        if picked.is_empty() {
            let patterns: Vec<&str> = self.variables.iter().map(|p| p.as_str()).collect();
            return Err(CliError::EmptySelection(patterns.join(",")));
        }
        Ok(picked)
    }
}
