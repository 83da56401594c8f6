//! Experiment execution. Jobs for distinct `(theta, N)` run concurrently;
//! the report orders rows by `(theta, N)` so output is schedule-independent.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use qvp_core::analysis::{
    clock_density, lobe_match, lobe_stats, model_match, predict_clock_time, predict_spread, schrodinger_check,
    spacing_report, theta_scan, Lobe, PeakReport,
};
use qvp_core::generators::{build_commuting, build_weyl_pair, GeneratorPair};
use qvp_core::hilbert::{fidelity, gaussian_state, make_grid, GridSpace, StateVector};
use qvp_core::qvp::{
    build_qvp, coarse_model, default_seed, limit_ket, net_evolution, qbinomial_oracle, walk_grid, ConditionalState,
    Engine, NetDirection, QvpParams,
};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind, Format, Resolved};
use crate::error::{LabError, Result};
use crate::report::{write_density, Check, Row, RunReport, Timing};

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "QVPLAB_OUTPUT_ROOT";

/// Step used by the Schrodinger check, as a fraction of `1 / ||H psi||`.
const SCHRODINGER_STEP: f64 = 0.05;

/// Probability density of one built state on its export axis.
#[derive(Debug, Clone)]
pub struct Density {
    pub n: usize,
    pub theta: f64,
    pub axis_label: &'static str,
    pub axis: Vec<f64>,
    pub probability: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub densities: Vec<Density>,
}

struct Job {
    rows: Vec<Row>,
    checks: Vec<Check>,
    densities: Vec<Density>,
}

impl Job {
    fn single(row: Row, checks: Vec<Check>, density: Option<Density>) -> Self {
        let mut row = row;
        row.pass = checks.iter().all(|c| c.pass);
        Self { rows: vec![row], checks, densities: density.into_iter().collect() }
    }
}

fn engine_label(e: Engine) -> String {
    match e {
        Engine::Spectral => "spectral".into(),
        Engine::Extended { bits } => format!("extended:{bits}"),
        Engine::Oracle { bits } => format!("oracle:{bits}"),
    }
}

fn base_row(kind: ExperimentKind, theta: f64, n: usize, sigma: f64, lambda: f64) -> Row {
    Row { experiment: kind.name().into(), theta, n, sigma, lambda, ..Row::default() }
}

fn with_state(mut row: Row, c: &ConditionalState) -> Row {
    row.clock_time = c.clock_time;
    row.log10_prenorm = Some(c.log10_prenorm);
    row.engine = Some(engine_label(c.engine));
    row
}

fn density_of(pair: &GeneratorPair, c: &ConditionalState, theta: f64) -> Density {
    let (axis, probability) = clock_density(pair, &c.state);
    let axis_label = match pair.regime() {
        qvp_core::Regime::Weyl => "t",
        qvp_core::Regime::Commuting => "w",
    };
    Density { n: c.n(), theta, axis_label, axis, probability }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    res: &'a Resolved,
}

impl Ctx<'_> {
    fn tol(&self) -> &crate::config::Tolerances {
        &self.cfg.analysis.tolerances
    }

    /// Weyl pair at fixed lambda for width `sigma`, on the configured grid
    /// or on the smallest grid where every `N` in `ns` walks whole spacings.
    fn weyl_pair(&self, sigma: f64, ns: &[usize]) -> Result<GeneratorPair> {
        let lambda = self.res.lambda;
        let grid = match &self.cfg.grid {
            Some(g) => make_grid(g.dim, g.extent)?,
            None => walk_grid(sigma, lambda.sqrt(), ns).map_err(|e| match e {
                qvp_core::Error::NoCommonGrid(_) => LabError::config("physics.n_values", e.to_string()),
                other => other.into(),
            })?,
        };
        Ok(build_weyl_pair(&grid, lambda)?)
    }

    fn seed(&self, pair: &GeneratorPair, params: &QvpParams) -> Result<StateVector> {
        match self.cfg.physics.seed_width {
            Some(w) => {
                let f = pair.clock_factor();
                Ok(gaussian_state(pair.space(), params.initial_center() * f, w * f)?)
            }
            None => Ok(default_seed(pair, params)?),
        }
    }

    /// Sigma giving `theta` at the configured lambda.
    fn sigma_for(&self, theta: f64) -> f64 {
        if theta == self.res.theta {
            self.res.sigma
        } else {
            (theta / self.res.lambda).sqrt()
        }
    }

    /// Clock-time kernel: configured, or the predicted lobe spread.
    fn kernel(&self, theta: f64) -> Result<f64> {
        match self.cfg.analysis.kernel_width {
            Some(k) => Ok(k),
            None => Ok(predict_spread(self.res.lambda, theta)?.sqrt()),
        }
    }

    fn built(&self, pair: &GeneratorPair, n: usize, sigma: f64) -> Result<(QvpParams, StateVector, ConditionalState)> {
        let params = QvpParams::for_pair(pair, n, sigma)?;
        let seed = self.seed(pair, &params)?;
        let state = build_qvp(pair, &params, &seed)?;
        Ok((params, seed, state))
    }
}

/// Runs an experiment in memory.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let res = cfg.resolve()?;
    let ctx = Ctx { cfg, res: &res };
    let configured = start.elapsed().as_secs_f64();

    let compute = Instant::now();
    let jobs = match cfg.experiment {
        ExperimentKind::CommutingLimit => commuting_limit(&ctx)?,
        ExperimentKind::TviolationPeaks => tviolation_peaks(&ctx)?,
        ExperimentKind::OracleEquivalence => oracle_equivalence(&ctx)?,
        ExperimentKind::ModelMatch => per_n(&ctx, model_match_job)?,
        ExperimentKind::SchrodingerCheck => per_n(&ctx, schrodinger_job)?,
        ExperimentKind::SpacingOverlap => spacing_overlap(&ctx)?,
        ExperimentKind::ThetaScan => theta_scan_jobs(&ctx)?,
        ExperimentKind::NetEvolution => net_evolution_jobs(&ctx)?,
    };
    let computed = compute.elapsed().as_secs_f64();

    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut densities = Vec::new();
    for job in jobs {
        rows.extend(job.rows);
        checks.extend(job.checks);
        densities.extend(job.densities);
    }
    checks.sort_by(|a, b| a.theta.total_cmp(&b.theta).then(a.n.cmp(&b.n)).then(a.name.cmp(&b.name)));
    densities.sort_by(|a, b| a.theta.total_cmp(&b.theta).then(a.n.cmp(&b.n)));
    let timings = vec![
        Timing { stage: "configure".into(), seconds: configured },
        Timing { stage: "compute".into(), seconds: computed },
    ];
    Ok(RunOutcome { report: RunReport::new(cfg.clone(), rows, checks, timings), densities })
}

fn commuting_limit(ctx: &Ctx) -> Result<Vec<Job>> {
    let sigma = ctx.res.sigma;
    let scale = ctx.cfg.physics.scale.unwrap_or(1.0);
    let grid: GridSpace = match &ctx.cfg.grid {
        Some(g) => make_grid(g.dim, g.extent)?,
        None => make_grid(1024, 32.0 * sigma * scale)?,
    };
    let pair = build_commuting(&grid, scale)?;
    let ket = limit_ket(&grid, 0.0, sigma * scale)?;
    let mut jobs = ctx
        .res
        .n_values
        .par_iter()
        .map(|&n| -> Result<Job> {
            let params = QvpParams::new(n, sigma)?;
            let seed = ctx.seed(&pair, &params)?;
            let c = build_qvp(&pair, &params, &seed)?;
            let mut row = with_state(base_row(ExperimentKind::CommutingLimit, 0.0, n, sigma, 0.0), &c);
            row.fidelity = Some(fidelity(&c.state, &ket)?);
            row.pass = true;
            Ok(Job { rows: vec![row], checks: Vec::new(), densities: vec![density_of(&pair, &c, 0.0)] })
        })
        .collect::<Result<Vec<_>>>()?;
    // Ladder checks across N (jobs are in ascending N).
    let fids: Vec<(usize, f64)> = jobs.iter().map(|j| (j.rows[0].n, j.rows[0].fidelity.unwrap_or(0.0))).collect();
    let tol = ctx.tol();
    let (last_n, last_f) = *fids.last().expect("n_values is non-empty");
    let mut checks = vec![Check::at_least("fidelity_final", 0.0, last_n, last_f, tol.fidelity)];
    for w in fids.windows(2) {
        checks.push(Check::at_least("ladder", 0.0, w[1].0, w[1].1 + tol.ladder_slack, w[0].1));
    }
    for job in &mut jobs {
        let n = job.rows[0].n;
        job.rows[0].pass = checks.iter().filter(|c| c.n == n).all(|c| c.pass);
    }
    jobs.push(Job { rows: Vec::new(), checks, densities: Vec::new() });
    Ok(jobs)
}

fn peak_report(ctx: &Ctx, pair: &GeneratorPair, c: &ConditionalState, theta: f64) -> Result<PeakReport> {
    let (axis, density) = clock_density(pair, &c.state);
    let lobes = lobe_stats(&density, &axis, 0.0)?;
    let tc = c.clock_time.unwrap_or_else(|| predict_clock_time(c.n(), c.params.sigma(), ctx.res.lambda));
    Ok(PeakReport::new(lobes, tc, predict_spread(pair.lambda(), theta)?))
}

fn fill_peaks(mut row: Row, r: &PeakReport) -> Row {
    row.t_plus = Some(r.t_plus);
    row.t_minus = Some(r.t_minus);
    row.var_plus = Some(r.var_plus);
    row.var_minus = Some(r.var_minus);
    row.mass_plus = Some(r.mass_plus);
    row.mass_minus = Some(r.mass_minus);
    row.predicted_var = Some(r.predicted_var);
    row.rel_err_position = Some(r.rel_err_position);
    row.rel_err_var = Some(r.rel_err_var);
    row
}

fn tviolation_peaks(ctx: &Ctx) -> Result<Vec<Job>> {
    let theta = ctx.res.theta;
    let sigma = ctx.res.sigma;
    let tol = ctx.tol().position;
    let mut jobs = ctx
        .res
        .n_values
        .par_iter()
        .map(|&n| -> Result<Job> {
            let pair = ctx.weyl_pair(sigma, &[n])?;
            let (_, _, c) = ctx.built(&pair, n, sigma)?;
            let r = peak_report(ctx, &pair, &c, theta)?;
            let row = fill_peaks(with_state(base_row(ExperimentKind::TviolationPeaks, theta, n, sigma, ctx.res.lambda), &c), &r);
            let checks = vec![
                Check::at_most("position_forward", theta, n, r.rel_err_position, tol),
                Check::at_most("position_backward", theta, n, r.rel_err_position_minus(), tol),
                Check::at_most("symmetry", theta, n, r.asymmetry(), tol),
            ];
            Ok(Job::single(row, checks, Some(density_of(&pair, &c, theta))))
        })
        .collect::<Result<Vec<_>>>()?;
    // Quadrupling N doubles the lobe position.
    let positions: Vec<(usize, f64)> = jobs.iter().map(|j| (j.rows[0].n, j.rows[0].t_plus.unwrap_or(0.0))).collect();
    let mut scaling = Vec::new();
    for &(n, t) in &positions {
        if let Some(&(n4, t4)) = positions.iter().find(|(m, _)| *m == 4 * n) {
            scaling.push(Check::at_most("scaling_4n", theta, n4, (t4 / t / 2.0 - 1.0).abs(), tol));
        }
    }
    jobs.push(Job { rows: Vec::new(), checks: scaling, densities: Vec::new() });
    Ok(jobs)
}

fn jobs_over_theta_and_n(ctx: &Ctx) -> Vec<(f64, usize)> {
    ctx.res.thetas.iter().flat_map(|&t| ctx.res.n_values.iter().map(move |&n| (t, n))).collect()
}

fn oracle_equivalence(ctx: &Ctx) -> Result<Vec<Job>> {
    jobs_over_theta_and_n(ctx)
        .par_iter()
        .map(|&(theta, n)| -> Result<Job> {
            let sigma = ctx.sigma_for(theta);
            let pair = ctx.weyl_pair(sigma, &[n])?;
            let (params, seed, c) = ctx.built(&pair, n, sigma)?;
            let oracle = qbinomial_oracle(&pair, &params, &seed)?;
            let diff = c.state.max_abs_diff(&oracle.state)?;
            let mut row = with_state(base_row(ExperimentKind::OracleEquivalence, theta, n, sigma, ctx.res.lambda), &c);
            row.max_amp_diff = Some(diff);
            let checks = vec![Check::at_most("oracle_amplitude", theta, n, diff, ctx.tol().amplitude)];
            Ok(Job::single(row, checks, None))
        })
        .collect()
}

fn per_n(ctx: &Ctx, f: fn(&Ctx, usize) -> Result<Job>) -> Result<Vec<Job>> {
    ctx.res.n_values.par_iter().map(|&n| f(ctx, n)).collect()
}

fn model_match_job(ctx: &Ctx, n: usize) -> Result<Job> {
    let (theta, sigma) = (ctx.res.theta, ctx.res.sigma);
    let pair = ctx.weyl_pair(sigma, &[n])?;
    let (_, seed, c) = ctx.built(&pair, n, sigma)?;
    let tc = c.clock_time.expect("weyl regime");
    let model = coarse_model(&pair, theta, tc, &seed)?;
    let kernel = ctx.kernel(theta)? * pair.clock_factor();
    let m = model_match(&c.state, &model, kernel)?;
    let mut row = with_state(base_row(ExperimentKind::ModelMatch, theta, n, sigma, ctx.res.lambda), &c);
    row.model_match = Some(m);
    let checks = vec![Check::at_least("model_match", theta, n, m, ctx.tol().model_match)];
    Ok(Job::single(row, checks, Some(density_of(&pair, &c, theta))))
}

fn schrodinger_job(ctx: &Ctx, n: usize) -> Result<Job> {
    let (theta, sigma) = (ctx.res.theta, ctx.res.sigma);
    let pair = ctx.weyl_pair(sigma, &[n])?;
    let params = QvpParams::for_pair(&pair, n, sigma)?;
    let seed = ctx.seed(&pair, &params)?;
    let phen = pair.phen_pair(theta)?;
    let t = predict_clock_time(n, sigma, ctx.res.lambda);
    let h_norm = phen.apply_forward(&phen.evolve_forward(&seed, t)).norm();
    let check = schrodinger_check(&phen, &seed, t, SCHRODINGER_STEP / h_norm)?;
    let mut row = base_row(ExperimentKind::SchrodingerCheck, theta, n, sigma, ctx.res.lambda);
    row.clock_time = Some(t);
    row.error_ratio = Some(check.ratio);
    let tol = ctx.tol();
    let checks = vec![
        Check::at_least("error_ratio_min", theta, n, check.ratio, tol.ratio_min),
        Check::at_most("error_ratio_max", theta, n, check.ratio, tol.ratio_max),
    ];
    Ok(Job::single(row, checks, None))
}

/// `t_c(N+1) - t_c(N)` by direct differencing. Each square root carries its
/// FMA-recovered residual, so the subtraction does not cancel digits.
fn clock_time_step(n: usize, sigma: f64, lambda: f64) -> f64 {
    let split = |x: f64| {
        let s = x.sqrt();
        (s, s.mul_add(-s, x) / (2.0 * s))
    };
    let (hi1, lo1) = split((n + 1) as f64);
    let (hi0, lo0) = split(n as f64);
    2.0 * std::f64::consts::PI * ((hi1 - hi0) + (lo1 - lo0)) / (sigma * lambda)
}

fn spacing_overlap(ctx: &Ctx) -> Result<Vec<Job>> {
    let lambda = ctx.res.lambda;
    let tol = ctx.tol();
    jobs_over_theta_and_n(ctx)
        .into_iter()
        .map(|(theta, n)| -> Result<Job> {
            let sigma = ctx.sigma_for(theta);
            let r = spacing_report(n, sigma, lambda, theta)?;
            let direct = clock_time_step(n, sigma, lambda);
            let mut checks = vec![
                Check::at_most("exact_vs_clock", theta, n, (r.exact_spacing - direct).abs() / r.exact_spacing, tol.spacing),
                Check::holds("exact_below_approx", theta, n, r.exact_spacing < r.approx_spacing),
                Check::holds("overlap_flag", theta, n, r.overlapping == (r.approx_spacing < r.spread)),
            ];
            if n >= 10_000 {
                checks.push(Check::at_most("asymptotic_ratio", theta, n, r.approx_spacing / r.exact_spacing, tol.asymptotic));
            }
            let mut row = base_row(ExperimentKind::SpacingOverlap, theta, n, sigma, lambda);
            row.clock_time = Some(predict_clock_time(n, sigma, lambda));
            row.exact_spacing = Some(r.exact_spacing);
            row.approx_spacing = Some(r.approx_spacing);
            row.spread = Some(r.spread);
            row.overlapping = Some(r.overlapping);
            Ok(Job::single(row, checks, None))
        })
        .collect()
}

fn theta_scan_jobs(ctx: &Ctx) -> Result<Vec<Job>> {
    let lambda = ctx.res.lambda;
    let tol = ctx.tol().variance;
    let mut jobs = Vec::new();
    for &n in &ctx.res.n_values {
        let rows = theta_scan(lambda, &ctx.res.thetas, |theta| -> qvp_core::Result<_> {
            let sigma = ctx.sigma_for(theta);
            let run = || -> Result<_> {
                let pair = ctx.weyl_pair(sigma, &[n])?;
                let (_, _, c) = ctx.built(&pair, n, sigma)?;
                let r = peak_report(ctx, &pair, &c, theta)?;
                Ok((with_state(base_row(ExperimentKind::ThetaScan, theta, n, sigma, lambda), &c), r, density_of(&pair, &c, theta)))
            };
            run().map_err(|e| match e {
                LabError::Guard(e) | LabError::Model(e) => e,
                other => qvp_core::Error::Invariant(other.to_string()),
            })
        })?;
        for scan in rows {
            let (row, r, density) = scan.measured;
            let theta = scan.theta;
            let checks = vec![
                Check::at_most("variance_forward", theta, n, r.rel_err_var, tol),
                Check::at_most("variance_backward", theta, n, r.rel_err_var_minus(), tol),
            ];
            jobs.push(Job::single(fill_peaks(row, &r), checks, Some(density)));
        }
    }
    Ok(jobs)
}

fn net_evolution_jobs(ctx: &Ctx) -> Result<Vec<Job>> {
    let (theta, sigma, lambda) = (ctx.res.theta, ctx.res.sigma, ctx.res.lambda);
    let ns = &ctx.res.n_values;
    let pair = ctx.weyl_pair(sigma, ns)?;
    let states = ns.par_iter().map(|&n| ctx.built(&pair, n, sigma).map(|b| b.2)).collect::<Result<Vec<_>>>()?;
    let kernel = ctx.kernel(theta)? * pair.clock_factor();
    let tol = ctx.tol();
    let mut jobs = Vec::new();
    for (i, c) in states.iter().enumerate() {
        let mut row = with_state(base_row(ExperimentKind::NetEvolution, theta, c.n(), sigma, lambda), c);
        let mut checks = Vec::new();
        if let Some(next) = states.get(i + 1) {
            let delta = next.clock_time.expect("weyl") - c.clock_time.expect("weyl");
            let advanced = net_evolution(&pair, theta, &c.state, delta, NetDirection::Advance)?;
            let f = lobe_match(&advanced, &next.state, kernel, Lobe::Forward)?;
            let back = net_evolution(&pair, theta, &advanced, delta, NetDirection::Rewind)?;
            // Rewind is the exact inverse, so no global phase is allowed.
            let err = back.add_scaled(Complex64::new(-1.0, 0.0), &c.state)?.amplitudes().iter().map(|a| a.norm()).fold(0.0, f64::max);
            row.lobe_fidelity = Some(f);
            row.rewind_error = Some(err);
            checks.push(Check::at_least("lobe_fidelity", theta, c.n(), f, tol.lobe_fidelity));
            checks.push(Check::at_most("rewind_identity", theta, c.n(), err, tol.identity));
        }
        jobs.push(Job::single(row, checks, Some(density_of(&pair, c, theta))));
    }
    Ok(jobs)
}

/// Output directory for a config: relative paths resolve against
/// `$QVPLAB_OUTPUT_ROOT` when set, otherwise the working directory.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    let dir = &cfg.output.directory;
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir.clone(),
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(|e| LabError::io(format!("reading {}", dir.display()), e))?;
        if entries.next().is_some() {
            return Err(LabError::OutputCollision(dir.to_path_buf()));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| LabError::io(format!("creating {}", dir.display()), e))
}

fn density_name(d: &Density, multi_theta: bool, thetas: &[f64]) -> String {
    if multi_theta {
        let idx = thetas.iter().position(|&t| t == d.theta).unwrap_or(0);
        format!("density_N{}_theta{}.csv", d.n, idx)
    } else {
        format!("density_N{}.csv", d.n)
    }
}

/// Loads, executes and writes all artifacts for one config file.
pub fn run(path: &Path) -> Result<RunOutcome> {
    let cfg = ExperimentConfig::load(path)?;
    let dir = output_dir(&cfg);
    prepare_dir(&dir)?;
    let outcome = execute(&cfg)?;
    let report = &outcome.report;
    if cfg.output.formats.contains(&Format::Json) {
        report.write_json(&dir.join("report.json"))?;
    }
    if cfg.output.formats.contains(&Format::Csv) {
        report.write_csv(&dir.join("summary.csv"))?;
    }
    if cfg.output.densities {
        let thetas = cfg.resolve()?.thetas;
        for d in &outcome.densities {
            let name = density_name(d, thetas.len() > 1, &thetas);
            write_density(&dir.join(name), d.axis_label, &d.axis, &d.probability)?;
        }
    }
    Ok(outcome)
}

/// Builds the state for one `N` of a config and writes its density into the
/// config's output directory. Returns the written path.
pub fn emit_density(path: &Path, n: usize) -> Result<PathBuf> {
    let cfg = ExperimentConfig::load(path)?;
    let res = cfg.resolve()?;
    let ctx = Ctx { cfg: &cfg, res: &res };
    let density = if cfg.experiment == ExperimentKind::CommutingLimit {
        let scale = cfg.physics.scale.unwrap_or(1.0);
        let grid = match &cfg.grid {
            Some(g) => make_grid(g.dim, g.extent)?,
            None => make_grid(1024, 32.0 * res.sigma * scale)?,
        };
        let pair = build_commuting(&grid, scale)?;
        let params = QvpParams::new(n, res.sigma)?;
        let c = build_qvp(&pair, &params, &ctx.seed(&pair, &params)?)?;
        density_of(&pair, &c, 0.0)
    } else {
        let pair = ctx.weyl_pair(res.sigma, &[n])?;
        let (_, _, c) = ctx.built(&pair, n, res.sigma)?;
        density_of(&pair, &c, res.theta)
    };
    let dir = output_dir(&cfg);
    std::fs::create_dir_all(&dir).map_err(|e| LabError::io(format!("creating {}", dir.display()), e))?;
    let file = dir.join(format!("density_N{n}.csv"));
    if file.exists() {
        return Err(LabError::OutputCollision(file));
    }
    write_density(&file, density.axis_label, &density.axis, &density.probability)?;
    Ok(file)
}
