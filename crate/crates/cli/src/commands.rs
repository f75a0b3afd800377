use std::fs;
use std::io::{self, Write};
use std::path::Path;

use powerscale_core::moment_match::check_evaluator;
use powerscale_core::sensitivity::{base_estimate, quantity_gradient};
use powerscale_core::{
    powerscale_sensitivity, powerscale_sequence, quantity_estimate, whiten, Component,
    DensityEvaluator, DrawsMatrix, MomentMatchOptions, PerturbedPosterior, Stabilizer,
};

use crate::config::{EvaluatorChoice, OutputFormat, RunConfig};
use crate::error::{CliError, Result};
use crate::evaluator::SubprocessEvaluator;
use crate::io::{read_draws, write_csv, write_ndjson, DrawsFormat};
use crate::oracle_spec::OracleSpec;
use crate::report::{
    AlphaEstimate, ComponentSensitivity, QuantitiesReport, QuantitySensitivity, SensitivityReport,
    SequenceEntry, SequenceReport, SCHEMA_VERSION,
};

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    /// Results were produced, but some importance weights are unreliable.
    Flagged,
}

impl Outcome {
    fn from_clean(clean: bool) -> Self {
        if clean {
            Outcome::Clean
        } else {
            Outcome::Flagged
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Clean => 0,
            Outcome::Flagged => 3,
        }
    }
}

pub const ECDF_FILE: &str = "ecdf.csv";
pub const QUANTITIES_FILE: &str = "quantities.csv";

/// Reads the draws and applies whitening if requested.
pub fn load_draws(config: &RunConfig) -> Result<DrawsMatrix> {
    let draws = read_draws(&config.input, config.format)?;
    if config.whiten {
        Ok(whiten(&draws)?.0)
    } else {
        Ok(draws)
    }
}

/// Runs `f` with the stabilizer the configuration asks for. The evaluator
/// is spot-checked against the stored densities first.
fn with_stabilizer<T>(
    config: &RunConfig,
    draws: &DrawsMatrix,
    f: impl FnOnce(&mut Stabilizer<'_>) -> Result<T>,
) -> Result<T> {
    if !config.moment_match {
        return f(&mut Stabilizer::Psis);
    }
    let run = |evaluator: &mut dyn DensityEvaluator| -> Result<T> {
        check_evaluator(draws, evaluator)?;
        f(&mut Stabilizer::MomentMatch {
            evaluator,
            options: MomentMatchOptions::default(),
        })
    };
    match config.evaluator.as_ref() {
        Some(EvaluatorChoice::Command { command, timeout }) => {
            run(&mut SubprocessEvaluator::new(command.clone(), *timeout))
        }
        Some(EvaluatorChoice::Oracle(spec)) => run(&mut spec.evaluator()),
        None => Err(CliError::InvalidConfig(
            "--moment-match needs --evaluator or --oracle".into(),
        )),
    }
}

pub fn sensitivity_report(config: &RunConfig, draws: &DrawsMatrix) -> Result<SensitivityReport> {
    let selected = config.select(draws.parameter_names())?;
    let records = with_stabilizer(config, draws, |stabilize| {
        Ok(powerscale_sensitivity(draws, &config.options, stabilize)?)
    })?;
    let records = selected.into_iter().map(|j| records[j].clone()).collect();
    Ok(SensitivityReport {
        schema_version: SCHEMA_VERSION,
        n_draws: draws.n_draws(),
        delta: config.options.delta,
        threshold: config.options.threshold,
        whitened: config.whiten,
        moment_matched: config.moment_match,
        records,
    })
}

pub fn cmd_sensitivity(config: &RunConfig, out: &mut dyn Write) -> Result<Outcome> {
    let draws = load_draws(config)?;
    let report = sensitivity_report(config, &draws)?;
    let text = match config.output {
        OutputFormat::Table => report.to_table(),
        OutputFormat::Json => report.to_json(),
        OutputFormat::Csv => report.to_csv(),
    };
    write_out(out, &text)?;
    Ok(Outcome::from_clean(report.is_clean()))
}

fn sequences<'a>(
    config: &RunConfig,
    draws: &'a DrawsMatrix,
) -> Result<Vec<(Component, Vec<PerturbedPosterior<'a>>)>> {
    with_stabilizer(config, draws, |stabilize| {
        config
            .component
            .components()
            .iter()
            .map(|&c| Ok((c, powerscale_sequence(draws, c, &config.grid, stabilize)?)))
            .collect()
    })
}

pub fn quantities_report(config: &RunConfig, draws: &DrawsMatrix) -> Result<QuantitiesReport> {
    let selected = config.select(draws.parameter_names())?;
    let seqs = sequences(config, draws)?;
    let mut quantities = Vec::new();
    for j in selected {
        let name = &draws.parameter_names()[j];
        for &q in &config.quantities {
            let base = base_estimate(draws, name, q)?;
            let components = seqs
                .iter()
                .map(|(component, seq)| {
                    let estimates = seq
                        .iter()
                        .map(|pp| {
                            let e = quantity_estimate(pp, name, q)?;
                            Ok(AlphaEstimate {
                                alpha: pp.spec.alpha,
                                value: e.value,
                                mcse: e.mcse,
                                khat: pp.khat(),
                                reliable: pp.is_reliable(),
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(ComponentSensitivity {
                        component: *component,
                        derivative: quantity_gradient(
                            draws,
                            name,
                            *component,
                            q,
                            config.options.delta,
                        )?,
                        estimates,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            quantities.push(QuantitySensitivity {
                parameter: name.clone(),
                quantity: q.to_string(),
                value: base.value,
                mcse: base.mcse,
                components,
            });
        }
    }
    Ok(QuantitiesReport {
        schema_version: SCHEMA_VERSION,
        n_draws: draws.n_draws(),
        delta: config.options.delta,
        quantities,
    })
}

pub fn cmd_quantities(config: &RunConfig, out: &mut dyn Write) -> Result<Outcome> {
    let draws = load_draws(config)?;
    let report = quantities_report(config, &draws)?;
    let text = match config.output {
        OutputFormat::Table => report.to_table(),
        OutputFormat::Json => report.to_json(),
        OutputFormat::Csv => report.to_csv(),
    };
    write_out(out, &text)?;
    Ok(Outcome::from_clean(report.is_clean()))
}

/// Writes the ECDF and quantity plot data for every selected parameter,
/// component and alpha (ascending), in that order.
pub fn write_plot_data(
    config: &RunConfig,
    draws: &DrawsMatrix,
    dir: &Path,
) -> Result<SequenceReport> {
    let selected = config.select(draws.parameter_names())?;
    let seqs = sequences(config, draws)?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;

    let ecdf_path = dir.join(ECDF_FILE);
    let mut ecdf = csv_writer(&ecdf_path)?;
    let quant_path = dir.join(QUANTITIES_FILE);
    let mut quant = csv_writer(&quant_path)?;
    let werr = |path: &Path| {
        let path = path.to_path_buf();
        move |e: csv::Error| CliError::io(path.clone(), io::Error::other(e))
    };
    ecdf.write_record(["parameter", "component", "alpha", "point", "cum_weight"])
        .map_err(werr(&ecdf_path))?;
    quant
        .write_record([
            "parameter",
            "component",
            "alpha",
            "quantity",
            "estimate",
            "mcse",
        ])
        .map_err(werr(&quant_path))?;

    for &j in &selected {
        let name = &draws.parameter_names()[j];
        for (component, seq) in &seqs {
            for pp in seq {
                let alpha = pp.spec.alpha.to_string();
                let e = pp.ecdf(j)?;
                for (x, c) in e.points().iter().zip(e.cum_weights()) {
                    ecdf.write_record([
                        name.as_str(),
                        component.as_str(),
                        &alpha,
                        &x.to_string(),
                        &c.to_string(),
                    ])
                    .map_err(werr(&ecdf_path))?;
                }
                for &q in &config.quantities {
                    let est = quantity_estimate(pp, name, q)?;
                    quant
                        .write_record([
                            name.as_str(),
                            component.as_str(),
                            &alpha,
                            &q.to_string(),
                            &est.value.to_string(),
                            &est.mcse.to_string(),
                        ])
                        .map_err(werr(&quant_path))?;
                }
            }
        }
    }
    ecdf.flush().map_err(|e| CliError::io(&ecdf_path, e))?;
    quant.flush().map_err(|e| CliError::io(&quant_path, e))?;

    let posteriors = seqs
        .iter()
        .flat_map(|(component, seq)| {
            seq.iter().map(move |pp| {
                Ok(SequenceEntry {
                    component: *component,
                    alpha: pp.spec.alpha,
                    khat: pp.khat(),
                    reliable: pp.is_reliable(),
                    ess: pp.ess()?,
                    moment_matched: pp.is_moment_matched(),
                })
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SequenceReport {
        schema_version: SCHEMA_VERSION,
        n_draws: draws.n_draws(),
        files: vec![ECDF_FILE.into(), QUANTITIES_FILE.into()],
        posteriors,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn cmd_sequence(config: &RunConfig, out: &mut dyn Write) -> Result<Outcome> {
    let dir = config
        .plot_data
        .as_deref()
        .ok_or_else(|| CliError::InvalidConfig("sequence needs --plot-data DIR".into()))?;
    let draws = load_draws(config)?;
    let report = write_plot_data(config, &draws, dir)?;
    let text = match config.output {
        OutputFormat::Table => report.to_table(),
        OutputFormat::Json => report.to_json(),
        OutputFormat::Csv => report.to_csv(),
    };
    write_out(out, &text)?;
    Ok(Outcome::from_clean(report.is_clean()))
}

/// Writes exact base-posterior draws of an oracle model.
pub fn cmd_simulate(
    oracle: &OracleSpec,
    n_draws: usize,
    seed: u64,
    format: DrawsFormat,
    out: &mut dyn Write,
) -> Result<Outcome> {
    let draws = oracle.sample(n_draws, seed)?;
    let res = match format {
        DrawsFormat::Csv => write_csv(&draws, out),
        DrawsFormat::Ndjson => write_ndjson(&draws, out),
    };
    res.map_err(|e| CliError::io("<stdout>", e))?;
    Ok(Outcome::Clean)
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io("<stdout>", e))
}
