//! The acceptance suite: one outcome per numbered criterion.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use qvp_core::generators::{build_weyl_pair, Direction};
use qvp_core::hilbert::gaussian_state;
use qvp_core::qvp::{
    clock_time, resolution_threshold, upsilon_set, walk_grid,
};

use crate::config::{
    AnalysisConfig, ExperimentConfig, ExperimentKind, Format, GridConfig, OutputConfig, PhysicsConfig, Theta,
    Tolerances,
};
use crate::error::Result;
use crate::report::Check;
use crate::runner::execute;

/// Overrides applied to the whole suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    /// Relative lobe-position tolerance (criterion 3).
    pub position_tol: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { position_tol: Tolerances::default().position }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
    /// Digest of the underlying run report, where one exists.
    pub digest: Option<String>,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] C{:<2} {:<28} {} ({:.2} s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.seconds
        )
    }
}

pub const TITLES: [&str; 10] = [
    "commuting limit law",
    "oracle equivalence",
    "clock-time law",
    "spread law",
    "two-peak model match",
    "Schrodinger consistency",
    "net-evolution ordering",
    "spacing and overlap",
    "time-reversal conjugation",
    "resolution policy",
];

fn config(kind: ExperimentKind, theta: Option<&str>, n_values: Vec<usize>) -> ExperimentConfig {
    ExperimentConfig {
        experiment: kind,
        grid: None,
        physics: PhysicsConfig {
            sigma: 1.0,
            lambda: if theta.is_none() { Some(0.0) } else { None },
            theta: theta.map(|t| Theta::Text(t.into())),
            n_values,
            dw_min: None,
            seed_width: None,
            scale: None,
            theta_grid: None,
        },
        analysis: AnalysisConfig::default(),
        output: OutputConfig { directory: PathBuf::from(kind.name()), formats: vec![Format::Json], densities: false },
    }
}

fn worst<'a>(checks: impl Iterator<Item = &'a Check>, name: &str) -> Option<&'a Check> {
    checks.filter(|c| c.name == name).max_by(|a, b| {
        let slack = |c: &Check| match c.relation {
            crate::report::Relation::AtLeast => c.threshold - c.value,
            _ => c.value - c.threshold,
        };
        slack(a).total_cmp(&slack(b))
    })
}

fn describe(c: Option<&Check>) -> String {
    match c {
        Some(c) => {
            let rel = match c.relation {
                crate::report::Relation::AtMost => "<=",
                crate::report::Relation::AtLeast => ">=",
                crate::report::Relation::Equals => "==",
            };
            format!("{}={:.6e} (N={}) {} {:.3e}", c.name, c.value, c.n, rel, c.threshold)
        }
        None => "no checks".into(),
    }
}

struct Timed<T> {
    value: T,
    seconds: f64,
}

fn timed<T>(f: impl FnOnce() -> T) -> Timed<T> {
    let t = Instant::now();
    let value = f();
    Timed { value, seconds: t.elapsed().as_secs_f64() }
}

fn outcome(id: u8, result: Timed<Result<(bool, String, Option<String>)>>, budget: Option<f64>) -> CriterionOutcome {
    let title = TITLES[id as usize - 1];
    let (mut pass, mut detail, digest) = match result.value {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}"), None),
    };
    if let Some(b) = budget {
        if result.seconds > b {
            pass = false;
            detail.push_str(&format!("; runtime {:.1} s exceeds {b} s", result.seconds));
        }
    }
    CriterionOutcome { id, title, pass, detail, seconds: result.seconds, digest }
}

fn run_checks(cfg: &ExperimentConfig, names: &[&str]) -> Result<(bool, String, Option<String>)> {
    let out = execute(cfg)?;
    let r = &out.report;
    let detail = names.iter().map(|n| describe(worst(r.checks.iter(), n))).collect::<Vec<_>>().join("; ");
    Ok((r.pass, detail, Some(r.digest.clone())))
}

pub fn c1_commuting_limit() -> CriterionOutcome {
    let mut cfg = config(ExperimentKind::CommutingLimit, None, vec![1024]);
    cfg.grid = Some(GridConfig { dim: 1024, extent: 32.0 });
    outcome(1, timed(|| run_checks(&cfg, &["fidelity_final"])), Some(10.0))
}

pub fn c2_oracle_equivalence() -> CriterionOutcome {
    let mut cfg = config(ExperimentKind::OracleEquivalence, Some("2.23pi"), vec![16, 32, 48, 64]);
    cfg.physics.theta_grid = Some(["2.1pi", "2.23pi", "3pi", "3.9pi"].iter().map(|t| Theta::Text((*t).into())).collect());
    outcome(2, timed(|| run_checks(&cfg, &["oracle_amplitude"])), Some(30.0))
}

pub fn c3_clock_time(opts: &SuiteOptions) -> CriterionOutcome {
    // N = 100 supplies the 4N partner of 400 for the scaling check.
    let mut cfg = config(ExperimentKind::TviolationPeaks, Some("2.23pi"), vec![100, 144, 256, 400]);
    cfg.analysis.tolerances.position = opts.position_tol;
    outcome(3, timed(|| run_checks(&cfg, &["position_forward", "position_backward", "scaling_4n"])), Some(120.0))
}

pub fn c4_spread() -> CriterionOutcome {
    let mut cfg = config(ExperimentKind::ThetaScan, Some("2.23pi"), vec![256]);
    cfg.physics.theta_grid = Some(vec![Theta::Text("2.23pi".into()), Theta::Text("3pi".into())]);
    outcome(4, timed(|| run_checks(&cfg, &["variance_forward", "variance_backward"])), None)
}

/// Scored at the pinned kernel of four grid spacings. The model transports a
/// narrow seed without the lobe spread, so agreement only appears once the
/// kernel reaches the spread; that wider reading is reported, not scored.
pub fn c5_model_match() -> CriterionOutcome {
    let mut cfg = config(ExperimentKind::ModelMatch, Some("2.23pi"), vec![256]);
    let result = timed(|| {
        let theta = 2.23 * PI;
        let g = walk_grid(1.0, theta.sqrt(), &[256])?;
        cfg.analysis.kernel_width = Some(4.0 * g.spacing() / theta.sqrt());
        let (pass, pinned, digest) = run_checks(&cfg, &["model_match"])?;
        cfg.analysis.kernel_width = None;
        let wide = execute(&cfg)?.report.rows[0].model_match.unwrap_or(f64::NAN);
        Ok((pass, format!("{pinned} at 4 spacings; spread-width kernel gives {wide:.4} (not scored)"), digest))
    });
    outcome(5, result, None)
}

/// Criteria that cannot be met as pinned; see the README.
pub const KNOWN_UNATTAINABLE: [u8; 1] = [5];

pub fn c6_schrodinger() -> CriterionOutcome {
    let cfg = config(ExperimentKind::SchrodingerCheck, Some("2.23pi"), vec![256]);
    outcome(6, timed(|| run_checks(&cfg, &["error_ratio_min", "error_ratio_max"])), None)
}

pub fn c7_net_evolution() -> CriterionOutcome {
    let cfg = config(ExperimentKind::NetEvolution, Some("2.23pi"), vec![256, 289]);
    outcome(7, timed(|| run_checks(&cfg, &["lobe_fidelity", "rewind_identity"])), None)
}

pub fn c8_spacing() -> CriterionOutcome {
    let mut cfg = config(ExperimentKind::SpacingOverlap, Some("3pi"), vec![1, 10, 100, 1000, 10_000]);
    cfg.physics.theta_grid =
        Some(["2.23pi", "2.5pi", "3pi", "3.5pi"].iter().map(|t| Theta::Text((*t).into())).collect());
    let result = timed(|| {
        let out = execute(&cfg)?;
        let r = &out.report;
        let grid_points = r.rows.len();
        let detail = format!(
            "{}; {}; overlap flag consistent on {grid_points} (N, theta) points",
            describe(worst(r.checks.iter(), "exact_vs_clock")),
            describe(worst(r.checks.iter(), "asymptotic_ratio")),
        );
        Ok((r.pass && grid_points == 20, detail, Some(r.digest.clone())))
    });
    outcome(8, result, None)
}

pub fn c9_time_reversal() -> CriterionOutcome {
    let result = timed(|| {
        let theta = 2.23 * PI;
        let g = walk_grid(1.0, theta.sqrt(), &[64])?;
        let pair = build_weyl_pair(&g, theta)?;
        let f = pair.clock_factor();
        let mut worst = 0.0f64;
        for (center, width) in [(0.0, 0.5), (1.5, 1.0), (-2.0, 0.25)] {
            let psi = gaussian_state(pair.space(), center * f, width * f)?;
            psi.check_boundary()?;
            let lhs = pair.time_reversal_inverse(&pair.evolve(&pair.time_reversal(&psi), 0.1, Direction::Forward)?);
            let rhs = pair.evolve(&psi, 0.1, Direction::Backward)?;
            worst = worst.max(lhs.distance(&rhs)?);
        }
        Ok((worst <= 1e-8, format!("max residual {worst:.3e} <= 1e-8 over 3 guarded Gaussians"), None))
    });
    outcome(9, result, None)
}

pub fn c10_resolution() -> CriterionOutcome {
    let result = timed(|| {
        let policy = resolution_threshold(1.0, 0.1)?;
        let theta = 2.23 * PI;
        let g = walk_grid(1.0, theta.sqrt(), &[policy.n_min])?;
        let pair = build_weyl_pair(&g, theta)?;
        let rejected = matches!(
            upsilon_set(&pair, 1.0, &policy, &[policy.n_min - 1]),
            Err(qvp_core::Error::BelowResolution { .. })
        );
        let set = upsilon_set(&pair, 1.0, &policy, &[policy.n_min])?;
        let expected = 2.0 * PI * (policy.n_min as f64).sqrt() / theta;
        let reported = set[0].clock_time.unwrap_or(f64::NAN);
        let err = (reported - expected).abs().max((policy.min_clock_time(1.0, theta) - expected).abs());
        let pass = policy.n_min == 101 && rejected && err <= 1e-12 && clock_time(101, 1.0, theta) == reported;
        Ok((pass, format!("n_min={}, N={} rejected={rejected}, t_c,min error {err:.1e}", policy.n_min, policy.n_min - 1), None))
    });
    outcome(10, result, None)
}

/// Runs every criterion in order.
pub fn run_all(opts: &SuiteOptions) -> Vec<CriterionOutcome> {
    vec![
        c1_commuting_limit(),
        c2_oracle_equivalence(),
        c3_clock_time(opts),
        c4_spread(),
        c5_model_match(),
        c6_schrodinger(),
        c7_net_evolution(),
        c8_spacing(),
        c9_time_reversal(),
        c10_resolution(),
    ]
}
