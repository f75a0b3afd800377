//! Report documents and their table, JSON and CSV renderings.
//!
//! Numbers are rendered with Rust's shortest round-trip formatting in JSON
//! and CSV, and with a fixed number of significant digits in tables, so the
//! same results always produce the same bytes.

use serde::{Deserialize, Serialize};

use powerscale_core::{Component, SensitivityRecord};

pub const SCHEMA_VERSION: u32 = 1;

/// Rounds to `digits` significant digits in positional notation.
pub fn format_sig(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{:.*e}", digits - 1, x)
        .parse()
        .expect("formatted float parses");
    if rounded == 0.0 {
        return format!("{:.*}", digits - 1, 0.0);
    }
    let magnitude = rounded.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{rounded:.decimals$}")
}

/// Left-aligned columns separated by two spaces.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let header: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    for row in std::iter::once(&header).chain(rows) {
        let mut line = String::new();
        for (i, (cell, w)) in row.iter().zip(&widths).enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            line.extend(std::iter::repeat_n(' ', w - cell.chars().count()));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub schema_version: u32,
    pub n_draws: usize,
    pub delta: f64,
    pub threshold: f64,
    pub whitened: bool,
    pub moment_matched: bool,
    pub records: Vec<SensitivityRecord>,
}

impl SensitivityReport {
    pub fn is_clean(&self) -> bool {
        self.records.iter().all(SensitivityRecord::is_reliable)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn to_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .records
            .iter()
            .map(|r| {
                let comment = r.diagnosis.comment();
                vec![
                    r.parameter.clone(),
                    format_sig(r.prior_sensitivity, 2),
                    format_sig(r.likelihood_sensitivity, 2),
                    if comment.is_empty() {
                        "-".into()
                    } else {
                        comment.into()
                    },
                    reliability_note(r),
                ]
            })
            .collect();
        render_table(
            &["variable", "prior", "likelihood", "diagnosis", "notes"],
            &rows,
        )
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .records
            .iter()
            .map(|r| {
                vec![
                    r.parameter.clone(),
                    r.prior_sensitivity.to_string(),
                    r.likelihood_sensitivity.to_string(),
                    diagnosis_key(r),
                    opt(r.khat_prior),
                    opt(r.khat_likelihood),
                    r.reliable_prior.to_string(),
                    r.reliable_likelihood.to_string(),
                ]
            })
            .collect();
        csv_string(
            &[
                "parameter",
                "prior_sensitivity",
                "likelihood_sensitivity",
                "diagnosis",
                "khat_prior",
                "khat_likelihood",
                "reliable_prior",
                "reliable_likelihood",
            ],
            &rows,
        )
    }
}

fn diagnosis_key(r: &SensitivityRecord) -> String {
    serde_json::to_value(r.diagnosis)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn reliability_note(r: &SensitivityRecord) -> String {
    let mut notes = Vec::new();
    for (reliable, khat, name) in [
        (r.reliable_prior, r.khat_prior, "prior"),
        (r.reliable_likelihood, r.khat_likelihood, "likelihood"),
    ] {
        if !reliable {
            notes.push(match khat {
                Some(k) => format!("{name} khat {}", format_sig(k, 2)),
                None => format!("{name} khat n/a"),
            });
        }
    }
    notes.join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub alpha: f64,
    pub value: f64,
    pub mcse: f64,
    pub khat: Option<f64>,
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSensitivity {
    pub component: Component,
    /// Derivative of the estimate with respect to `log2(alpha)` at 1.
    pub derivative: f64,
    pub estimates: Vec<AlphaEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantitySensitivity {
    pub parameter: String,
    pub quantity: String,
    pub value: f64,
    pub mcse: f64,
    pub components: Vec<ComponentSensitivity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantitiesReport {
    pub schema_version: u32,
    pub n_draws: usize,
    pub delta: f64,
    pub quantities: Vec<QuantitySensitivity>,
}

impl QuantitiesReport {
    pub fn is_clean(&self) -> bool {
        self.quantities
            .iter()
            .flat_map(|q| &q.components)
            .flat_map(|c| &c.estimates)
            .all(|e| e.reliable)
    }

    fn components(&self) -> Vec<Component> {
        self.quantities
            .first()
            .map(|q| q.components.iter().map(|c| c.component).collect())
            .unwrap_or_default()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        let components = self.components();
        let mut header = vec!["variable", "quantity", "estimate", "mcse"];
        let labels: Vec<String> = components.iter().map(|c| format!("d/{c}")).collect();
        header.extend(labels.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = self
            .quantities
            .iter()
            .map(|q| {
                let mut row = vec![
                    q.parameter.clone(),
                    q.quantity.clone(),
                    format_sig(q.value, 3),
                    format_sig(q.mcse, 2),
                ];
                row.extend(q.components.iter().map(|c| format_sig(c.derivative, 2)));
                row
            })
            .collect();
        render_table(&header, &rows)
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .quantities
            .iter()
            .flat_map(|q| {
                q.components.iter().map(move |c| {
                    vec![
                        q.parameter.clone(),
                        q.quantity.clone(),
                        q.value.to_string(),
                        q.mcse.to_string(),
                        c.component.to_string(),
                        c.derivative.to_string(),
                    ]
                })
            })
            .collect();
        csv_string(
            &[
                "parameter",
                "quantity",
                "estimate",
                "mcse",
                "component",
                "derivative",
            ],
            &rows,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub component: Component,
    pub alpha: f64,
    pub khat: Option<f64>,
    pub reliable: bool,
    pub ess: f64,
    pub moment_matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub schema_version: u32,
    pub n_draws: usize,
    pub files: Vec<String>,
    pub posteriors: Vec<SequenceEntry>,
}

impl SequenceReport {
    pub fn is_clean(&self) -> bool {
        self.posteriors.iter().all(|p| p.reliable)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .posteriors
            .iter()
            .map(|p| {
                vec![
                    p.component.to_string(),
                    format_sig(p.alpha, 3),
                    p.khat
                        .map(|k| format_sig(k, 2))
                        .unwrap_or_else(|| "-".into()),
                    format_sig(p.ess, 3),
                    if p.reliable { "yes" } else { "no" }.into(),
                ]
            })
            .collect();
        render_table(&["component", "alpha", "khat", "ess", "reliable"], &rows)
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .posteriors
            .iter()
            .map(|p| {
                vec![
                    p.component.to_string(),
                    p.alpha.to_string(),
                    opt(p.khat),
                    p.ess.to_string(),
                    p.reliable.to_string(),
                    p.moment_matched.to_string(),
                ]
            })
            .collect();
        csv_string(
            &[
                "component",
                "alpha",
                "khat",
                "ess",
                "reliable",
                "moment_matched",
            ],
            &rows,
        )
    }
}
