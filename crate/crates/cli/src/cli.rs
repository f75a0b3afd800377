use std::io::{self, Write};

use clap::{Parser, Subcommand};

use crate::commands::{cmd_quantities, cmd_sensitivity, cmd_sequence, cmd_simulate, Outcome};
use crate::config::{RunArgs, RunConfig};
use crate::error::{CliError, Result};
use crate::evaluator::serve;
use crate::io::DrawsFormat;
use crate::oracle_spec::OracleSpec;

/// Power-scaling sensitivity analysis of posterior draws.
///
/// Exit status: 0 when all importance weights are reliable, 3 when results
/// were produced but some are flagged, 1 on error.
#[derive(Debug, Parser)]
#[command(name = "powerscale-sense", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Local prior and likelihood sensitivity of each parameter, with diagnosis.
    Sensitivity(RunArgs),
    /// Perturbed posteriors over the alpha grid, written as plot data.
    Sequence(RunArgs),
    /// Quantity estimates and their derivatives with respect to log2(alpha).
    Quantities(RunArgs),
    /// Answer evaluator requests on stdin for a built-in model.
    #[command(hide = true)]
    ServeOracle {
        #[arg(long)]
        oracle: String,
    },
    /// Write exact posterior draws of a built-in model to stdout.
    #[command(hide = true)]
    Simulate {
        #[arg(long)]
        oracle: String,
        #[arg(long, default_value_t = 4000)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: DrawsFormat,
    },
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<Outcome> {
    match cli.command {
        Cmd::Sensitivity(args) => cmd_sensitivity(&RunConfig::from_args(args)?, out),
        Cmd::Sequence(args) => cmd_sequence(&RunConfig::from_args(args)?, out),
        Cmd::Quantities(args) => cmd_quantities(&RunConfig::from_args(args)?, out),
        Cmd::ServeOracle { oracle } => {
            let spec: OracleSpec = oracle.parse()?;
            serve(spec.model(), io::stdin().lock(), out).map_err(|e| CliError::io("<stdio>", e))?;
            Ok(Outcome::Clean)
        }
        Cmd::Simulate {
            oracle,
            draws,
            seed,
            format,
        } => cmd_simulate(&oracle.parse()?, draws, seed, format, out),
    }
}
