//! Quantum-virtual-path states.
//!
//! A QVP of `N` steps is `2^-N (e^{i step H_B} + e^{-i step H_F})^N |seed>`,
//! normalised. Two independent evaluations are provided:
//!
//! * [`build_qvp`] iterates the half-sum step `N` times;
//! * [`qbinomial_oracle`] reorders the product with the central commutator,
//!   `(A + B)^N = sum_k [N, k]_p A^k B^(N-k)` with `p = exp(-i theta / N)`,
//!   and applies each ordered word as a single pair of displacements.
//!
//! In the T-violating regime the sum cancels to a tiny remainder (the norm
//! before normalisation is around `1e-70` at `N = 256`, `theta = 2.23 pi`).
//! When more than a few digits are lost, the iterative walk runs in MPFR
//! arithmetic on a grid where one step is a whole number of grid spacings:
//! each factor is then an index shift between two diagonal phase tables.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rug::Float;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::generators::{GeneratorPair, LinearGenerator, Regime};
use crate::hilbert::{gaussian_state, GridSpace, Representation, StateVector, GUARD_FRACTION, GUARD_MASS_LIMIT};
use crate::mp::{precision_for, MpComplex};

/// Largest `N` accepted by [`qbinomial_oracle`] by default.
pub const ORACLE_CAP: usize = 64;

/// Digits of cancellation above which the f64 spectral walk is not trusted.
pub const F64_LOSS_LIMIT: f64 = 4.0;

/// Decimal digits carried beyond the cancellation loss.
const KEPT_DIGITS: f64 = 24.0;

/// Finest clock-time spacing used by [`walk_grid`], as a fraction of sigma.
const GRID_RESOLUTION: f64 = 200.0;

/// Labels of one conditional state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QvpParams {
    n_steps: usize,
    sigma: f64,
    step: f64,
    theta: f64,
    initial_center: f64,
}

impl QvpParams {
    /// Parameters for the commuting regime (`theta = 0`).
    pub fn new(n_steps: usize, sigma: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(invalid("n_steps", "must be at least 1"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(invalid("sigma", format!("must be positive, got {sigma}")));
        }
        Ok(Self { n_steps, sigma, step: sigma / (n_steps as f64).sqrt(), theta: 0.0, initial_center: 0.0 })
    }

    /// Parameters attached to a generator pair: `theta = sigma^2 lambda`.
    pub fn for_pair(pair: &GeneratorPair, n_steps: usize, sigma: f64) -> Result<Self> {
        let mut p = Self::new(n_steps, sigma)?;
        p.theta = sigma * sigma * pair.lambda();
        Ok(p)
    }

    /// Seed centre in clock time.
    pub fn with_center(mut self, center: f64) -> Self {
        self.initial_center = center;
        self
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn initial_center(&self) -> f64 {
        self.initial_center
    }
}

/// Surrogate for the fundamental resolution and the smallest admissible N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolutionPolicy {
    pub dw_min: f64,
    pub n_min: usize,
}

/// Smallest `N` with `sigma / sqrt(N) < dw_min`.
pub fn resolution_threshold(sigma: f64, dw_min: f64) -> Result<ResolutionPolicy> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    if !(dw_min.is_finite() && dw_min > 0.0) {
        return Err(invalid("dw_min", format!("must be positive, got {dw_min}")));
    }
    let ratio = sigma / dw_min;
    let mut n = (ratio * ratio).floor() as usize + 1;
    // The floor can land one off when the square is not exactly representable.
    while n > 1 && sigma / ((n - 1) as f64).sqrt() < dw_min {
        n -= 1;
    }
    while sigma / (n as f64).sqrt() >= dw_min {
        n += 1;
    }
    Ok(ResolutionPolicy { dw_min, n_min: n })
}

impl ResolutionPolicy {
    /// Default surrogate `dw_min = sigma / 32`.
    pub fn default_for(sigma: f64) -> Result<Self> {
        resolution_threshold(sigma, sigma / 32.0)
    }

    pub fn admits(&self, n: usize) -> bool {
        n >= self.n_min
    }

    /// Smallest clock time in the admissible set, `2 pi sqrt(n_min) / (sigma lambda)`.
    pub fn min_clock_time(&self, sigma: f64, lambda: f64) -> f64 {
        clock_time(self.n_min, sigma, lambda)
    }
}

/// `t_c = 2 pi sqrt(N) / (sigma lambda)`.
pub fn clock_time(n: usize, sigma: f64, lambda: f64) -> f64 {
    2.0 * PI * (n as f64).sqrt() / (sigma * lambda)
}

/// How a conditional state was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Engine {
    /// Double-precision walk with spectral propagators.
    Spectral,
    /// Exact index shifts with MPFR amplitudes at the given precision.
    Extended { bits: u32 },
    /// Reordered q-binomial expansion.
    Oracle { bits: u32 },
}

/// One element of the equivalence set, labelled by its parameters.
#[derive(Debug, Clone)]
pub struct ConditionalState {
    pub params: QvpParams,
    pub state: StateVector,
    /// `2 pi sqrt(N) / (sigma lambda)`; `None` in the commuting regime.
    pub clock_time: Option<f64>,
    /// `log10` of the norm before normalisation (seed of unit norm).
    pub log10_prenorm: f64,
    pub engine: Engine,
}

impl ConditionalState {
    pub fn n(&self) -> usize {
        self.params.n_steps
    }
}

/// Decimal digits lost to cancellation in an `n`-step walk with interference
/// parameter `theta`, estimated from `sum_k |[n,k]_q|^2 / 4^n` (teeth assumed
/// disjoint).
pub fn interference_loss_digits(n: usize, theta: f64) -> f64 {
    // A tiny detuning keeps the estimate finite where numerator and
    // denominator factors vanish together.
    let phi = theta * (1.0 + 1e-9) / n as f64;
    let factor = |m: usize| -> f64 {
        if phi == 0.0 {
            (m as f64).ln()
        } else {
            (0.5 * m as f64 * phi).sin().abs().max(1e-300).ln()
        }
    };
    let mut logs = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    logs.push(acc);
    for j in 0..n {
        acc += factor(n - j) - factor(j + 1);
        logs.push(acc);
    }
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|l| (2.0 * (l - peak)).exp()).sum();
    let log_norm = peak + 0.5 * sum.ln() - n as f64 * 2f64.ln();
    (-log_norm / std::f64::consts::LN_10).max(0.0)
}

/// Seed `|t0>`: Gaussian of clock-time width `max(4 spacing, sigma / 50)`
/// centred on the params' initial centre.
pub fn default_seed(pair: &GeneratorPair, params: &QvpParams) -> Result<StateVector> {
    let f = pair.clock_factor();
    let spacing_t = pair.space().spacing() / f;
    let w0 = (4.0 * spacing_t).max(params.sigma / 50.0);
    gaussian_state(pair.space(), params.initial_center * f, w0 * f)
}

/// Grid on which every `N` in `n_values` walks in whole grid spacings.
///
/// The clock-time spacing is `sigma / (L m)` with `L` the least common
/// multiple of the `sqrt(N)` and `m` the smallest refinement reaching
/// `sigma / 200`; the extent keeps the full walk of the largest `N` inside
/// the guarded region. A single `N` need not be a perfect square.
pub fn walk_grid(sigma: f64, clock_factor: f64, n_values: &[usize]) -> Result<GridSpace> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    if !(clock_factor.is_finite() && clock_factor > 0.0) {
        return Err(invalid("clock_factor", format!("must be positive, got {clock_factor}")));
    }
    let n_max = *n_values.iter().max().ok_or_else(|| invalid("n_values", "must not be empty"))?;
    if n_values.contains(&0) {
        return Err(invalid("n_values", "N must be at least 1"));
    }
    let base = if n_values.iter().all(|&n| n == n_max) {
        sigma / (n_max as f64).sqrt()
    } else {
        let mut l = 1u64;
        for &n in n_values {
            let r = (n as f64).sqrt().round() as u64;
            if (r * r) as usize != n {
                return Err(Error::NoCommonGrid(n_values.to_vec()));
            }
            l = lcm(l, r);
        }
        sigma / l as f64
    };
    let refine = (base * GRID_RESOLUTION / sigma).ceil().max(1.0);
    let spacing_t = base / refine;
    let w0 = (4.0 * spacing_t).max(sigma / 50.0);
    // 40 seed widths is where an f64 Gaussian underflows to zero.
    let reach = sigma * (n_max as f64).sqrt() + 40.0 * w0;
    let min_extent = 2.0 * reach / GUARD_FRACTION + 8.0 * spacing_t;
    let dim = 2 * (min_extent / (2.0 * spacing_t)).ceil() as usize;
    GridSpace::new(dim, dim as f64 * spacing_t * clock_factor)
}

fn lcm(a: u64, b: u64) -> u64 {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

fn validate(pair: &GeneratorPair, params: &QvpParams, seed: &StateVector) -> Result<StateVector> {
    if seed.space() != pair.space() {
        return Err(Error::SpaceMismatch);
    }
    let seed = seed.to_coordinate();
    seed.check_boundary()?;
    if seed.norm_sqr() == 0.0 {
        return Err(invalid("seed", "zero vector"));
    }
    let expected = params.sigma * params.sigma * pair.lambda();
    if (params.theta - expected).abs() > 1e-12 * expected.abs().max(1.0) {
        return Err(invalid(
            "params",
            format!("theta {} does not match sigma^2 lambda = {expected}", params.theta),
        ));
    }
    Ok(seed)
}

fn finish(
    pair: &GeneratorPair,
    params: &QvpParams,
    state: StateVector,
    log10_prenorm: f64,
    engine: Engine,
) -> ConditionalState {
    let clock_time = match pair.regime() {
        Regime::Weyl => Some(clock_time(params.n_steps, params.sigma, pair.lambda())),
        Regime::Commuting => None,
    };
    ConditionalState { params: *params, state, clock_time, log10_prenorm, engine }
}

/// Iterative QVP: applies `psi <- (e^{i step H_B} psi + e^{-i step H_F} psi) / 2`
/// `n_steps` times and normalises. The boundary guard is checked after every
/// step.
pub fn build_qvp(pair: &GeneratorPair, params: &QvpParams, seed: &StateVector) -> Result<ConditionalState> {
    let seed = validate(pair, params, seed)?;
    let loss = interference_loss_digits(params.n_steps, params.theta);
    if loss < F64_LOSS_LIMIT {
        return spectral_walk(pair, params, seed);
    }
    match ShiftPlan::new(pair, params.step) {
        Some(plan) => extended_walk(pair, params, &seed, &plan, precision_for(loss, KEPT_DIGITS)),
        None => Err(Error::IncommensurateStep {
            step: params.step,
            ratio: pair.coordinate_rate() * params.step / pair.space().spacing(),
            digits: loss,
        }),
    }
}

fn spectral_walk(pair: &GeneratorPair, params: &QvpParams, seed: StateVector) -> Result<ConditionalState> {
    let seed_norm = seed.norm();
    let mut psi = seed;
    for step in 1..=params.n_steps {
        let a = pair.backward().propagate(&psi, -params.step);
        let b = pair.forward().propagate(&psi, params.step);
        let half = Complex64::new(0.5, 0.0);
        let amps = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| half * (x + y)).collect();
        psi = StateVector::new(*pair.space(), amps, Representation::Coordinate)?;
        let mass = psi.boundary_mass();
        if mass > GUARD_MASS_LIMIT {
            return Err(Error::BoundaryMass { mass, limit: GUARD_MASS_LIMIT, step: Some(step) });
        }
    }
    let norm = psi.normalize()?;
    let prenorm = (norm / seed_norm).log10();
    Ok(finish(pair, params, psi, prenorm, Engine::Spectral))
}

/// A step factor as an index shift between diagonal phases: for
/// `exp(-i tau (p P + q Q))` the shift is `tau p / spacing` and the phase
/// `exp(-i tau q x / 2)` sits on both sides.
struct ShiftPlan {
    shift_a: isize,
    shift_b: isize,
    /// `(tau, q_coef)` of the B factor; the A factor shares the same phase rate.
    phase: (f64, f64),
}

impl ShiftPlan {
    fn new(pair: &GeneratorPair, step: f64) -> Option<Self> {
        let h = pair.space().spacing();
        let whole = |tau: f64, g: &LinearGenerator| -> Option<isize> {
            let r = tau * g.p_coef / h;
            let n = r.round();
            ((r - n).abs() <= 1e-9 * n.abs().max(1.0)).then_some(n as isize)
        };
        let (a, b) = (pair.backward(), pair.forward());
        let shift_a = whole(-step, a)?;
        let shift_b = whole(step, b)?;
        // Phase rate per unit coordinate: -tau q / 2 for each factor.
        let rate_a = 0.5 * step * a.q_coef;
        let rate_b = -0.5 * step * b.q_coef;
        if (rate_a - rate_b).abs() > 1e-15 * rate_a.abs().max(rate_b.abs()) {
            return None;
        }
        Some(Self { shift_a, shift_b, phase: (step, b.q_coef) })
    }
}

/// `exp(i rate (i - origin) h)` for every grid index, built by repeated
/// multiplication outward from the origin.
fn phase_table(space: &GridSpace, angle: &Float, prec: u32) -> Vec<MpComplex> {
    let dim = space.dim();
    let origin = space.origin_index();
    let u = MpComplex::unit(prec, angle);
    let mut ubar = u.clone();
    ubar.conj_in_place();
    let mut table = vec![MpComplex::zero(prec); dim];
    table[origin] = MpComplex::from_f64(prec, Complex64::new(1.0, 0.0));
    for i in origin + 1..dim {
        let (lo, hi) = table.split_at_mut(i);
        hi[0].assign_mul(&lo[i - 1], &u);
    }
    for i in (0..origin).rev() {
        let (lo, hi) = table.split_at_mut(i + 1);
        lo[i].assign_mul(&hi[0], &ubar);
    }
    table
}

fn extended_walk(
    pair: &GeneratorPair,
    params: &QvpParams,
    seed: &StateVector,
    plan: &ShiftPlan,
    prec: u32,
) -> Result<ConditionalState> {
    let space = *pair.space();
    let dim = space.dim();
    let h = space.spacing();

    // ph(i) = exp(-i tau q x_i / 2) for the B factor (identical for A).
    let mut angle = Float::with_val(prec, plan.phase.0);
    angle *= plan.phase.1;
    angle *= h;
    angle /= -2.0;
    let phased = !angle.is_zero();
    let (ph, ph2) = if phased {
        let doubled = Float::with_val(prec, &angle * 2u32);
        (phase_table(&space, &angle, prec), phase_table(&space, &doubled, prec))
    } else {
        (Vec::new(), Vec::new())
    };

    let amps = seed.amplitudes();
    let first = amps.iter().position(|a| *a != Complex64::new(0.0, 0.0));
    let last = amps.iter().rposition(|a| *a != Complex64::new(0.0, 0.0));
    let (mut lo, mut hi) = match (first, last) {
        (Some(f), Some(l)) => (f as isize, l as isize + 1),
        _ => return Err(invalid("seed", "zero vector")),
    };
    let mut full = false;

    // Work in v = ph * psi so each step is one sum and one phase product:
    // v'[i] = ph(i)^2 (v[i - s_a] + v[i - s_b]), with the 2^-N deferred.
    let mut cur = vec![MpComplex::zero(prec); dim];
    let mut next = vec![MpComplex::zero(prec); dim];
    for i in lo as usize..hi as usize {
        let s = MpComplex::from_f64(prec, amps[i]);
        if phased {
            cur[i].assign_mul(&s, &ph[i]);
        } else {
            cur[i] = s;
        }
    }

    let (glo, ghi) = space.guarded_range();
    let (s_min, s_max) = (plan.shift_a.min(plan.shift_b), plan.shift_a.max(plan.shift_b));
    let n = dim as isize;
    for step in 1..=params.n_steps {
        let (mut nlo, mut nhi) = (lo + s_min, hi + s_max);
        if full || nlo < 0 || nhi > n {
            full = true;
            nlo = 0;
            nhi = n;
        }
        let (sa, sb) = (plan.shift_a, plan.shift_b);
        let src = &cur;
        next[nlo as usize..nhi as usize].par_iter_mut().enumerate().for_each_init(
            || MpComplex::zero(prec),
            |tmp, (off, out)| {
                let i = nlo + off as isize;
                let ia = (i - sa).rem_euclid(n) as usize;
                let ib = (i - sb).rem_euclid(n) as usize;
                if phased {
                    tmp.assign_add(&src[ia], &src[ib]);
                    out.assign_mul(tmp, &ph2[i as usize]);
                } else {
                    out.assign_add(&src[ia], &src[ib]);
                }
            },
        );
        std::mem::swap(&mut cur, &mut next);
        lo = nlo;
        hi = nhi;
        if lo < glo as isize || hi > ghi as isize {
            let mass = outside_mass(&cur[lo as usize..hi as usize], lo as usize, glo, ghi, prec);
            if mass > GUARD_MASS_LIMIT {
                return Err(Error::BoundaryMass { mass, limit: GUARD_MASS_LIMIT, step: Some(step) });
            }
        }
    }

    // psi = conj(ph) v, then normalise in extended precision.
    let mut total = Float::new(prec);
    let mut tmp = MpComplex::zero(prec);
    for i in lo as usize..hi as usize {
        if phased {
            let mut c = ph[i].clone();
            c.conj_in_place();
            tmp.assign_mul(&cur[i], &c);
            cur[i] = tmp.clone();
        }
        total += cur[i].norm_sqr();
    }
    if total.is_zero() {
        return Err(Error::Invariant("walk cancelled to an exactly zero state".into()));
    }
    let norm = total.sqrt();
    let inv = Float::with_val(prec, 1.0 / &norm);
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    for i in lo as usize..hi as usize {
        let z = &cur[i];
        out[i] = Complex64::new(Float::with_val(prec, &z.re * &inv).to_f64(), Float::with_val(prec, &z.im * &inv).to_f64());
    }
    let log10_prenorm = norm.log10().to_f64() - params.n_steps as f64 * 2f64.log10() - seed.norm().log10();
    let state = StateVector::new(space, out, Representation::Coordinate)?;
    Ok(finish(pair, params, state, log10_prenorm, Engine::Extended { bits: prec }))
}

fn outside_mass(window: &[MpComplex], offset: usize, glo: usize, ghi: usize, prec: u32) -> f64 {
    let mut total = Float::new(prec);
    let mut outside = Float::new(prec);
    for (j, z) in window.iter().enumerate() {
        let m = z.norm_sqr();
        let i = offset + j;
        if i < glo || i >= ghi {
            outside += &m;
        }
        total += m;
    }
    if total.is_zero() {
        return 0.0;
    }
    (outside / total).to_f64()
}

/// Gaussian binomial `[n, k]_q` by the division-free recurrence
/// `[n, k] = [n-1, k-1] + q^k [n-1, k]`.
pub fn gaussian_binomial(n: usize, k: usize, q: Complex64) -> Complex64 {
    if k > n {
        return Complex64::new(0.0, 0.0);
    }
    let mut powers = vec![Complex64::new(1.0, 0.0); n + 1];
    for j in 1..=n {
        powers[j] = powers[j - 1] * q;
    }
    let mut row = vec![Complex64::new(1.0, 0.0)];
    for r in 1..=n {
        row.push(Complex64::new(0.0, 0.0));
        for j in (1..=r).rev() {
            row[j] = row[j - 1] + powers[j] * row[j];
        }
    }
    row[k]
}

/// Row `[n, 0..=n]_p` with `p = exp(i angle)`, in extended precision.
pub fn gaussian_binomial_row(n: usize, angle: &Float, prec: u32) -> Vec<MpComplex> {
    let p = MpComplex::unit(prec, angle);
    let mut powers = vec![MpComplex::from_f64(prec, Complex64::new(1.0, 0.0))];
    for j in 1..=n {
        let mut next = MpComplex::zero(prec);
        next.assign_mul(&powers[j - 1], &p);
        powers.push(next);
    }
    let mut row = vec![MpComplex::from_f64(prec, Complex64::new(1.0, 0.0))];
    let mut scratch = MpComplex::zero(prec);
    for r in 1..=n {
        row.push(MpComplex::zero(prec));
        for j in (1..=r).rev() {
            let (left, right) = row.split_at_mut(j);
            let mut acc = left[j - 1].clone();
            acc.add_mul(&powers[j], &right[0], &mut scratch);
            right[0] = acc;
        }
    }
    row
}

/// q-binomial evaluation of the same QVP with the default cap.
pub fn qbinomial_oracle(pair: &GeneratorPair, params: &QvpParams, seed: &StateVector) -> Result<ConditionalState> {
    qbinomial_oracle_capped(pair, params, seed, ORACLE_CAP)
}

/// With `A = e^{i step H_B}`, `B = e^{-i step H_F}` and `AB = BA e^{i theta/N}`,
/// `(A + B)^N = sum_k [N, k]_p A^k B^(N-k)`, `p = e^{-i theta/N}`. Each word
/// is one forward evolution by `(N-k) step` followed by one backward
/// evolution by `k step`; coefficients come from the recurrence at a
/// precision matched to the expected cancellation.
pub fn qbinomial_oracle_capped(
    pair: &GeneratorPair,
    params: &QvpParams,
    seed: &StateVector,
    cap: usize,
) -> Result<ConditionalState> {
    if pair.regime() != Regime::Weyl {
        return Err(Error::WrongRegime("weyl"));
    }
    let n = params.n_steps;
    if n > cap {
        return Err(Error::OracleCap { n, cap });
    }
    let seed = validate(pair, params, seed)?;
    let prec = precision_for(interference_loss_digits(n, params.theta), KEPT_DIGITS);
    let mut angle = Float::with_val(prec, pair.lambda());
    angle *= params.step;
    angle *= params.step;
    angle = -angle;
    let row = gaussian_binomial_row(n, &angle, prec);
    let coeffs: Vec<Complex64> = row
        .into_iter()
        .map(|mut c| {
            c.scale_pow2(-(n as i32));
            c.to_c64()
        })
        .collect();
    let words: Vec<StateVector> = (0..=n)
        .into_par_iter()
        .map(|k| {
            let b = pair.forward().propagate(&seed, (n - k) as f64 * params.step);
            pair.backward().propagate(&b, -(k as f64) * params.step)
        })
        .collect();
    let mut sum = vec![Complex64::new(0.0, 0.0); pair.space().dim()];
    for (c, w) in coeffs.iter().zip(&words) {
        for (s, a) in sum.iter_mut().zip(w.amplitudes()) {
            *s += c * a;
        }
    }
    let mut state = StateVector::new(*pair.space(), sum, Representation::Coordinate)?;
    let norm = state.normalize()?;
    let prenorm = (norm / seed.norm()).log10();
    Ok(finish(pair, params, state, prenorm, Engine::Oracle { bits: prec }))
}

/// Gaussian limit ket `exp[-(w - center)^2 / (2 sigma^2)]`, guard-checked.
pub fn limit_ket(space: &GridSpace, center: f64, sigma: f64) -> Result<StateVector> {
    let s = gaussian_state(space, center, sigma)?;
    s.check_boundary()?;
    Ok(s)
}

/// Conditional states for every admissible `N` in `n_list`, in ascending `N`.
/// Each uses [`default_seed`]; distinct `N` are built concurrently.
pub fn upsilon_set(
    pair: &GeneratorPair,
    sigma: f64,
    policy: &ResolutionPolicy,
    n_list: &[usize],
) -> Result<Vec<ConditionalState>> {
    if let Some(&n) = n_list.iter().find(|&&n| !policy.admits(n)) {
        return Err(Error::BelowResolution { n, n_min: policy.n_min });
    }
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    ns.par_iter()
        .map(|&n| {
            let params = QvpParams::for_pair(pair, n, sigma)?;
            let seed = default_seed(pair, &params)?;
            build_qvp(pair, &params, &seed)
        })
        .collect()
}

/// Two-term model `e^{i H^phen_B t_c} seed + e^{-i H^phen_F t_c} seed`, normalised.
pub fn coarse_model(pair: &GeneratorPair, theta: f64, t_c: f64, seed: &StateVector) -> Result<StateVector> {
    let phen = pair.phen_pair(theta)?;
    if !(t_c.is_finite() && t_c >= 0.0) {
        return Err(invalid("t_c", format!("must be non-negative, got {t_c}")));
    }
    if seed.space() != pair.space() {
        return Err(Error::SpaceMismatch);
    }
    let back = phen.evolve_backward(seed, t_c);
    let fwd = phen.evolve_forward(seed, t_c);
    let sum = back.add_scaled(Complex64::new(1.0, 0.0), &fwd)?.normalized()?;
    sum.check_boundary()?;
    Ok(sum)
}

/// Direction of a net clock-time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetDirection {
    Advance,
    Rewind,
}

/// `exp(-i delta H^phen_F)` (advance) or its inverse (rewind).
pub fn net_evolution(
    pair: &GeneratorPair,
    theta: f64,
    a: &StateVector,
    delta_tc: f64,
    direction: NetDirection,
) -> Result<StateVector> {
    if !(delta_tc.is_finite() && delta_tc > 0.0) {
        return Err(invalid("delta_tc", format!("must be positive, got {delta_tc}")));
    }
    if a.space() != pair.space() {
        return Err(Error::SpaceMismatch);
    }
    let phen = pair.phen_pair(theta)?;
    Ok(match direction {
        NetDirection::Advance => phen.evolve_forward(a, delta_tc),
        NetDirection::Rewind => phen.evolve_forward(a, -delta_tc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{build_commuting, build_weyl_pair};
    use crate::hilbert::{fidelity, make_grid};

    #[test]
    fn params_derive_step_and_theta() {
        let g = make_grid(64, 32.0).unwrap();
        let pair = build_weyl_pair(&g, 2.23 * PI).unwrap();
        let p = QvpParams::for_pair(&pair, 256, 1.0).unwrap();
        assert!((p.step() - 1.0 / 16.0).abs() < 1e-12);
        assert!((p.theta() - 2.23 * PI).abs() < 1e-12);
        assert!(QvpParams::new(0, 1.0).is_err());
        assert!(QvpParams::new(4, -1.0).is_err());
    }

    #[test]
    fn resolution_examples() {
        assert_eq!(resolution_threshold(1.0, 0.1).unwrap().n_min, 101);
        assert_eq!(resolution_threshold(1.0, 1.5).unwrap().n_min, 1);
        assert_eq!(resolution_threshold(2.0, 0.1).unwrap().n_min, 401);
        assert_eq!(ResolutionPolicy::default_for(1.0).unwrap().n_min, 1025);
        assert!(resolution_threshold(0.0, 0.1).is_err());
    }

    #[test]
    fn small_gaussian_binomials() {
        let one = Complex64::new(1.0, 0.0);
        assert!((gaussian_binomial(4, 2, one) - 6.0).norm() < 1e-15);
        assert!(gaussian_binomial(2, 1, -one).norm() < 1e-15);
        assert_eq!(gaussian_binomial(3, 5, one), Complex64::new(0.0, 0.0));
        let q = Complex64::from_polar(1.0, 0.3);
        // [3,1]_q = 1 + q + q^2
        assert!((gaussian_binomial(3, 1, q) - (1.0 + q + q * q)).norm() < 1e-14);
    }

    #[test]
    fn extended_row_matches_f64_row_where_stable() {
        let prec = 200;
        let angle = Float::with_val(prec, 0.37);
        let row = gaussian_binomial_row(10, &angle, prec);
        let q = Complex64::from_polar(1.0, 0.37);
        for (k, c) in row.iter().enumerate() {
            assert!((c.to_c64() - gaussian_binomial(10, k, q)).norm() < 1e-10);
        }
    }

    #[test]
    fn loss_estimate_tracks_regime() {
        assert!(interference_loss_digits(1024, 0.0) < 1.0);
        let l = interference_loss_digits(256, 2.23 * PI);
        assert!((60.0..80.0).contains(&l), "{l}");
    }

    #[test]
    fn walk_grid_is_commensurate() {
        let lambda: f64 = 2.23 * PI;
        let g = walk_grid(1.0, lambda.sqrt(), &[144, 256, 400]).unwrap();
        let spacing_t = g.spacing() / lambda.sqrt();
        for n in [144usize, 256, 400] {
            let r = (1.0 / (n as f64).sqrt()) / spacing_t;
            assert!((r - r.round()).abs() < 1e-9, "{n}: {r}");
        }
        assert!(matches!(walk_grid(1.0, 1.0, &[144, 150]), Err(Error::NoCommonGrid(_))));
        assert!(walk_grid(1.0, 1.0, &[101]).is_ok());
    }

    #[test]
    fn zero_generator_leaves_seed() {
        let g = make_grid(128, 32.0).unwrap();
        let pair = build_commuting(&g, 1e-300).unwrap();
        let params = QvpParams::new(16, 1.0).unwrap();
        let seed = gaussian_state(&g, 0.0, 1.0).unwrap();
        let out = build_qvp(&pair, &params, &seed).unwrap();
        assert!(fidelity(&out.state, &seed).unwrap() >= 1.0 - 1e-12);
        assert_eq!(out.clock_time, None);
    }

    #[test]
    fn incommensurate_deep_walk_is_refused() {
        let g = make_grid(2048, 60.0).unwrap();
        let lambda = 2.23 * PI;
        let pair = build_weyl_pair(&g, lambda).unwrap();
        let params = QvpParams::for_pair(&pair, 130, 1.0).unwrap();
        let seed = default_seed(&pair, &params).unwrap();
        assert!(matches!(build_qvp(&pair, &params, &seed), Err(Error::IncommensurateStep { .. })));
    }

    #[test]
    fn coarse_model_at_zero_time_is_seed() {
        let lambda = 3.0 * PI;
        let g = walk_grid(1.0, lambda.sqrt(), &[64]).unwrap();
        let pair = build_weyl_pair(&g, lambda).unwrap();
        let seed = default_seed(&pair, &QvpParams::for_pair(&pair, 64, 1.0).unwrap()).unwrap();
        let m = coarse_model(&pair, 3.0 * PI, 0.0, &seed).unwrap();
        assert!(fidelity(&m, &seed).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn net_evolution_rejects_bad_duration() {
        let g = make_grid(256, 32.0).unwrap();
        let pair = build_weyl_pair(&g, PI).unwrap();
        let s = gaussian_state(&g, 0.0, 1.0).unwrap();
        assert!(net_evolution(&pair, 2.5 * PI, &s, 0.0, NetDirection::Advance).is_err());
        assert!(net_evolution(&pair, 2.5 * PI, &s, 0.1, NetDirection::Advance).is_ok());
    }
}
