//! Report types and their on-disk forms.
//!
//! `summary.csv` columns, in order:
//!
//! ```text
//! experiment,theta,n,sigma,lambda,clock_time,log10_prenorm,engine,fidelity,
//! t_plus,t_minus,var_plus,var_minus,mass_plus,mass_minus,predicted_var,
//! rel_err_position,rel_err_var,model_match,lobe_fidelity,rewind_error,
//! max_amp_diff,error_ratio,exact_spacing,approx_spacing,spread,overlapping,pass
//! ```
//!
//! Cells that do not apply to an experiment are empty. Floats are written
//! with 17 significant digits in both CSV and JSON.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{LabError, Result};

pub const ENGINE_VERSION: &str = concat!("qvp-lab ", env!("CARGO_PKG_VERSION"));

/// One row of results for an `(experiment, theta, N)` job.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub theta: f64,
    pub n: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub clock_time: Option<f64>,
    pub log10_prenorm: Option<f64>,
    pub engine: Option<String>,
    pub fidelity: Option<f64>,
    pub t_plus: Option<f64>,
    pub t_minus: Option<f64>,
    pub var_plus: Option<f64>,
    pub var_minus: Option<f64>,
    pub mass_plus: Option<f64>,
    pub mass_minus: Option<f64>,
    pub predicted_var: Option<f64>,
    pub rel_err_position: Option<f64>,
    pub rel_err_var: Option<f64>,
    pub model_match: Option<f64>,
    pub lobe_fidelity: Option<f64>,
    pub rewind_error: Option<f64>,
    pub max_amp_diff: Option<f64>,
    pub error_ratio: Option<f64>,
    pub exact_spacing: Option<f64>,
    pub approx_spacing: Option<f64>,
    pub spread: Option<f64>,
    pub overlapping: Option<bool>,
    pub pass: bool,
}

pub const CSV_HEADER: [&str; 28] = [
    "experiment",
    "theta",
    "n",
    "sigma",
    "lambda",
    "clock_time",
    "log10_prenorm",
    "engine",
    "fidelity",
    "t_plus",
    "t_minus",
    "var_plus",
    "var_minus",
    "mass_plus",
    "mass_minus",
    "predicted_var",
    "rel_err_position",
    "rel_err_var",
    "model_match",
    "lobe_fidelity",
    "rewind_error",
    "max_amp_diff",
    "error_ratio",
    "exact_spacing",
    "approx_spacing",
    "spread",
    "overlapping",
    "pass",
];

/// Float formatting shared by CSV and JSON: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl Row {
    fn csv_record(&self) -> Vec<String> {
        vec![
            self.experiment.clone(),
            fmt_f64(self.theta),
            self.n.to_string(),
            fmt_f64(self.sigma),
            fmt_f64(self.lambda),
            opt(self.clock_time),
            opt(self.log10_prenorm),
            self.engine.clone().unwrap_or_default(),
            opt(self.fidelity),
            opt(self.t_plus),
            opt(self.t_minus),
            opt(self.var_plus),
            opt(self.var_minus),
            opt(self.mass_plus),
            opt(self.mass_minus),
            opt(self.predicted_var),
            opt(self.rel_err_position),
            opt(self.rel_err_var),
            opt(self.model_match),
            opt(self.lobe_fidelity),
            opt(self.rewind_error),
            opt(self.max_amp_diff),
            opt(self.error_ratio),
            opt(self.exact_spacing),
            opt(self.approx_spacing),
            opt(self.spread),
            self.overlapping.map(|b| b.to_string()).unwrap_or_default(),
            self.pass.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "==")]
    Equals,
}

/// One tolerance comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub theta: f64,
    pub n: usize,
    pub value: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, theta: f64, n: usize, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), theta, n, value, relation: Relation::AtMost, threshold, pass: value <= threshold }
    }

    pub fn at_least(name: &str, theta: f64, n: usize, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), theta, n, value, relation: Relation::AtLeast, threshold, pass: value >= threshold }
    }

    /// Boolean condition recorded as `value == 1`.
    pub fn holds(name: &str, theta: f64, n: usize, ok: bool) -> Self {
        Self {
            name: name.into(),
            theta,
            n,
            value: if ok { 1.0 } else { 0.0 },
            relation: Relation::Equals,
            threshold: 1.0,
            pass: ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Everything a run produces except densities.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub engine_version: String,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub digest: String,
    pub timings: Vec<Timing>,
}

/// The digest covers every field except timings and the digest itself.
#[derive(Serialize)]
struct Digested<'a> {
    engine_version: &'a str,
    experiment: ExperimentKind,
    config: &'a ExperimentConfig,
    rows: &'a [Row],
    checks: &'a [Check],
    pass: bool,
}

impl RunReport {
    pub fn new(config: ExperimentConfig, mut rows: Vec<Row>, checks: Vec<Check>, timings: Vec<Timing>) -> Self {
        rows.sort_by(|a, b| a.theta.total_cmp(&b.theta).then(a.n.cmp(&b.n)));
        let pass = checks.iter().all(|c| c.pass);
        let mut report = Self {
            engine_version: ENGINE_VERSION.to_string(),
            experiment: config.experiment,
            config,
            rows,
            checks,
            pass,
            digest: String::new(),
            timings,
        };
        report.digest = report.compute_digest();
        report
    }

    pub fn compute_digest(&self) -> String {
        let view = Digested {
            engine_version: &self.engine_version,
            experiment: self.experiment,
            config: &self.config,
            rows: &self.rows,
            checks: &self.checks,
            pass: self.pass,
        };
        let bytes = to_json_bytes(&view, false).expect("in-memory serialisation");
        let hash = Sha256::digest(&bytes);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let bytes = to_json_bytes(self, true).map_err(|e| LabError::io("serialising report", e))?;
        std::fs::write(path, bytes).map_err(|e| LabError::io(format!("writing {}", path.display()), e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let wrap = |e: csv::Error| LabError::io(format!("writing {}", path.display()), e.into());
        let mut w = csv::Writer::from_path(path).map_err(wrap)?;
        w.write_record(CSV_HEADER).map_err(wrap)?;
        for row in &self.rows {
            w.write_record(row.csv_record()).map_err(wrap)?;
        }
        w.flush().map_err(|e| LabError::io(format!("writing {}", path.display()), e))
    }
}

/// Writes `<axis>,probability` rows for one density.
pub fn write_density(path: &Path, axis_label: &str, axis: &[f64], density: &[f64]) -> Result<()> {
    let wrap = |e: csv::Error| LabError::io(format!("writing {}", path.display()), e.into());
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record([axis_label, "probability"]).map_err(wrap)?;
    for (x, p) in axis.iter().zip(density) {
        w.write_record([fmt_f64(*x), fmt_f64(*p)]).map_err(wrap)?;
    }
    w.flush().map_err(|e| LabError::io(format!("writing {}", path.display()), e))
}

/// JSON formatter that writes every float with 17 significant digits.
struct Sig17<F> {
    inner: F,
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.inner.$name(writer $(, $arg)*)
        })*
    };
}

impl<F: Formatter> Formatter for Sig17<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        end_object_key();
        begin_object_value();
        end_object_value();
    }
}

fn to_json_bytes<T: Serialize>(value: &T, pretty: bool) -> io::Result<Vec<u8>> {
    let mut out = Vec::new();
    if pretty {
        let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17 { inner: PrettyFormatter::new() });
        value.serialize(&mut ser).map_err(io::Error::from)?;
        out.push(b'\n');
    } else {
        let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17 { inner: serde_json::ser::CompactFormatter });
        value.serialize(&mut ser).map_err(io::Error::from)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        let parsed: f64 = fmt_f64(std::f64::consts::PI).parse().unwrap();
        assert_eq!(parsed, std::f64::consts::PI);
        let json = String::from_utf8(to_json_bytes(&vec![0.1f64, 2.0], false).unwrap()).unwrap();
        assert_eq!(json, "[1.0000000000000001e-1,2.0000000000000000e0]");
    }

    #[test]
    fn checks_compare() {
        assert!(Check::at_most("a", 0.0, 1, 0.04, 0.05).pass);
        assert!(!Check::at_least("b", 0.0, 1, 0.8, 0.9).pass);
        assert!(!Check::holds("c", 0.0, 1, false).pass);
    }

    #[test]
    fn header_matches_record_width() {
        assert_eq!(Row::default().csv_record().len(), CSV_HEADER.len());
    }
}
