//! Experiment configuration: strict TOML with section headers.
//!
//! ```toml
//! experiment = "tviolation-peaks"
//!
//! [physics]
//! sigma = 1.0
//! theta = "2.23pi"        # or lambda = 7.0; exactly one of the two
//! n_values = [144, 256, 400]
//!
//! [analysis.tolerances]
//! position = 0.05
//!
//! [output]
//! directory = "peaks"
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use qvp_core::qvp::{resolution_threshold, ResolutionPolicy};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CommutingLimit,
    TviolationPeaks,
    OracleEquivalence,
    ModelMatch,
    SchrodingerCheck,
    SpacingOverlap,
    ThetaScan,
    NetEvolution,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CommutingLimit => "commuting-limit",
            ExperimentKind::TviolationPeaks => "tviolation-peaks",
            ExperimentKind::OracleEquivalence => "oracle-equivalence",
            ExperimentKind::ModelMatch => "model-match",
            ExperimentKind::SchrodingerCheck => "schrodinger-check",
            ExperimentKind::SpacingOverlap => "spacing-overlap",
            ExperimentKind::ThetaScan => "theta-scan",
            ExperimentKind::NetEvolution => "net-evolution",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A theta value: a number (radians) or a multiple of pi such as `"2.23pi"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta {
    Radians(f64),
    Text(String),
}

impl Theta {
    pub fn radians(&self) -> std::result::Result<f64, String> {
        match self {
            Theta::Radians(v) => Ok(*v),
            Theta::Text(s) => parse_pi_multiple(s),
        }
    }
}

fn parse_pi_multiple(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let stripped = t.strip_suffix("pi").or_else(|| t.strip_suffix('π'));
    match stripped {
        Some(m) => {
            let m = m.trim().trim_end_matches('*').trim();
            if m.is_empty() {
                Ok(PI)
            } else {
                m.parse::<f64>().map(|v| v * PI).map_err(|_| format!("cannot read `{s}` as a multiple of pi"))
            }
        }
        None => t.parse::<f64>().map_err(|_| format!("cannot read `{s}` as a number or multiple of pi")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub extent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Theta>,
    pub n_values: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dw_min: Option<f64>,
    /// Seed width in clock time; defaults to `max(4 spacing, sigma / 50)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_width: Option<f64>,
    /// Generator magnitude for the commuting regime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_grid: Option<Vec<Theta>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub position: f64,
    pub variance: f64,
    pub fidelity: f64,
    pub ladder_slack: f64,
    pub amplitude: f64,
    pub model_match: f64,
    pub lobe_fidelity: f64,
    pub identity: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub spacing: f64,
    pub asymptotic: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            position: 0.05,
            variance: 0.2,
            fidelity: 0.999,
            ladder_slack: 1e-4,
            amplitude: 1e-8,
            model_match: 0.9,
            lobe_fidelity: 0.95,
            identity: 1e-10,
            ratio_min: 3.6,
            ratio_max: 4.4,
            spacing: 1e-12,
            asymptotic: 1.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Coarse-graining kernel standard deviation in clock time; defaults to
    /// the predicted lobe spread.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_width: Option<f64>,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Also write `density_N<k>.csv` for every built state.
    #[serde(default)]
    pub densities: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

/// Physics parameters after validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub sigma: f64,
    /// Commutator constant; 0 in the commuting regime.
    pub lambda: f64,
    /// `sigma^2 lambda`.
    pub theta: f64,
    pub n_values: Vec<usize>,
    /// Theta values of a scan, ascending; `[theta]` when no grid is given.
    pub thetas: Vec<f64>,
    pub policy: Option<ResolutionPolicy>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| LabError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text, path)
    }

    /// Validates cross-field rules and derives lambda/theta.
    pub fn resolve(&self) -> Result<Resolved> {
        let p = &self.physics;
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(LabError::config(field, format!("must be positive and finite, got {v}")))
            }
        };
        positive("physics.sigma", p.sigma)?;
        let (lambda, theta) = match (p.lambda, &p.theta) {
            (Some(_), Some(_)) => {
                return Err(LabError::config("physics.lambda", "give exactly one of `lambda` and `theta`, not both"))
            }
            (None, None) => return Err(LabError::config("physics.theta", "one of `lambda` or `theta` is required")),
            (Some(l), None) => (l, p.sigma * p.sigma * l),
            (None, Some(t)) => {
                let t = t.radians().map_err(|m| LabError::config("physics.theta", m))?;
                (t / (p.sigma * p.sigma), t)
            }
        };
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(LabError::config("physics.lambda", format!("must be non-negative, got {lambda}")));
        }
        let commuting = self.experiment == ExperimentKind::CommutingLimit;
        if commuting && lambda != 0.0 {
            return Err(LabError::config("physics.lambda", "commuting-limit requires lambda = 0"));
        }
        if !commuting && lambda == 0.0 {
            return Err(LabError::config("physics.lambda", format!("{} requires lambda > 0", self.experiment)));
        }
        if let Some(s) = p.scale {
            positive("physics.scale", s)?;
            if !commuting {
                return Err(LabError::config("physics.scale", "only used by commuting-limit"));
            }
        }
        if let Some(w) = p.seed_width {
            positive("physics.seed_width", w)?;
        }
        if let Some(k) = self.analysis.kernel_width {
            positive("analysis.kernel_width", k)?;
        }
        if let Some(g) = &self.grid {
            if g.dim < qvp_core::hilbert::MIN_DIM || g.dim % 2 != 0 {
                return Err(LabError::config("grid.dim", format!("must be even and at least 8, got {}", g.dim)));
            }
            positive("grid.extent", g.extent)?;
        }

        if p.n_values.is_empty() {
            return Err(LabError::config("physics.n_values", "must not be empty"));
        }
        if p.n_values.contains(&0) {
            return Err(LabError::config("physics.n_values", "every N must be at least 1"));
        }
        let mut n_values = p.n_values.clone();
        n_values.sort_unstable();
        n_values.dedup();

        let policy = match p.dw_min {
            Some(dw) => {
                positive("physics.dw_min", dw)?;
                let policy = resolution_threshold(p.sigma, dw).map_err(|e| LabError::config("physics.dw_min", e.to_string()))?;
                if let Some(n) = n_values.iter().find(|&&n| n < policy.n_min) {
                    return Err(LabError::config(
                        "physics.n_values",
                        format!("N = {n} is below the resolution threshold n_min = {}", policy.n_min),
                    ));
                }
                Some(policy)
            }
            None => None,
        };

        let scans = matches!(
            self.experiment,
            ExperimentKind::ThetaScan | ExperimentKind::OracleEquivalence | ExperimentKind::SpacingOverlap
        );
        let thetas = match &p.theta_grid {
            Some(_) if !scans => {
                return Err(LabError::config("physics.theta_grid", format!("not used by {}", self.experiment)))
            }
            Some(grid) => {
                if grid.is_empty() {
                    return Err(LabError::config("physics.theta_grid", "must not be empty"));
                }
                let mut v = grid
                    .iter()
                    .map(|t| t.radians().map_err(|m| LabError::config("physics.theta_grid", m)))
                    .collect::<Result<Vec<_>>>()?;
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            }
            None => vec![theta],
        };
        if !commuting {
            if let Some(t) = thetas.iter().find(|&&t| !(t > 2.0 * PI && t < 4.0 * PI)) {
                let field = if p.theta_grid.is_some() { "physics.theta_grid" } else { "physics.theta" };
                return Err(LabError::config(field, format!("theta = {t} is outside (2pi, 4pi)")));
            }
        }
        match self.experiment {
            ExperimentKind::NetEvolution if n_values.len() < 2 => {
                return Err(LabError::config("physics.n_values", "net-evolution needs at least two N values"))
            }
            ExperimentKind::OracleEquivalence => {
                if let Some(n) = n_values.iter().find(|&&n| n > qvp_core::qvp::ORACLE_CAP) {
                    return Err(LabError::config(
                        "physics.n_values",
                        format!("N = {n} exceeds the oracle cap {}", qvp_core::qvp::ORACLE_CAP),
                    ));
                }
            }
            _ => {}
        }
        if self.output.formats.is_empty() {
            return Err(LabError::config("output.formats", "must list at least one of csv, json"));
        }
        Ok(Resolved { sigma: p.sigma, lambda, theta, n_values, thetas, policy })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(text, Path::new("test.toml"))
    }

    const PEAKS: &str = r#"
experiment = "tviolation-peaks"
[physics]
sigma = 1.0
theta = "2.23pi"
n_values = [256, 144]
[output]
directory = "out"
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = parse(PEAKS).unwrap();
        let r = cfg.resolve().unwrap();
        assert!((r.theta - 2.23 * PI).abs() < 1e-12);
        assert!((r.lambda - 2.23 * PI).abs() < 1e-12);
        assert_eq!(r.n_values, vec![144, 256]);
        assert_eq!(cfg.output.formats, vec![Format::Csv, Format::Json]);
        assert_eq!(cfg.analysis.tolerances.position, 0.05);
    }

    #[test]
    fn theta_text_forms() {
        assert_eq!(parse_pi_multiple("pi").unwrap(), PI);
        assert!((parse_pi_multiple("3 pi").unwrap() - 3.0 * PI).abs() < 1e-15);
        assert!((parse_pi_multiple("2.5π").unwrap() - 2.5 * PI).abs() < 1e-15);
        assert_eq!(parse_pi_multiple("7.5").unwrap(), 7.5);
        assert!(parse_pi_multiple("two pi").is_err());
    }

    fn field_of(e: LabError) -> String {
        match e {
            LabError::Config { field, .. } => field,
            LabError::Parse { message, .. } => message,
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_sigma_names_the_field() {
        let text = PEAKS.replace("sigma = 1.0\n", "");
        let msg = field_of(parse(&text).unwrap_err());
        assert!(msg.contains("sigma"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = PEAKS.replace("sigma = 1.0", "sigma = 1.0\nsigmaa = 2.0");
        let msg = field_of(parse(&text).unwrap_err());
        assert!(msg.contains("sigmaa"), "{msg}");
    }

    #[test]
    fn lambda_and_theta_are_exclusive() {
        let both = PEAKS.replace("theta = \"2.23pi\"", "theta = \"2.23pi\"\nlambda = 7.0");
        assert_eq!(field_of(parse(&both).unwrap_err()), "physics.lambda");
        let neither = PEAKS.replace("theta = \"2.23pi\"\n", "");
        assert_eq!(field_of(parse(&neither).unwrap_err()), "physics.theta");
    }

    #[test]
    fn resolution_policy_filters_n() {
        let text = PEAKS.replace("n_values = [256, 144]", "n_values = [100, 144]\ndw_min = 0.1");
        assert_eq!(field_of(parse(&text).unwrap_err()), "physics.n_values");
    }

    #[test]
    fn regime_rules() {
        let text = PEAKS.replace("theta = \"2.23pi\"", "theta = \"4.5pi\"");
        assert_eq!(field_of(parse(&text).unwrap_err()), "physics.theta");
        let comm = PEAKS.replace("tviolation-peaks", "commuting-limit");
        assert_eq!(field_of(parse(&comm).unwrap_err()), "physics.lambda");
        let grid = PEAKS.replace("n_values", "theta_grid = [\"3pi\"]\nn_values");
        assert_eq!(field_of(parse(&grid).unwrap_err()), "physics.theta_grid");
    }
}
