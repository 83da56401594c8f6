//! Observables of conditional states and the closed-form predictions they
//! are scored against.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::generators::{GeneratorPair, PhenomenologicalPair};
use crate::hilbert::StateVector;
use crate::qvp::clock_time;

/// Smallest fraction of the mass each half-line must carry to count as a lobe.
pub const LOBE_MASS_FLOOR: f64 = 0.01;

/// Kernel half-support in standard deviations.
const KERNEL_REACH: f64 = 10.0;

/// Circular convolution of a density with a normalised Gaussian kernel of
/// standard deviation `kernel_width` (axis units).
pub fn coarse_grain(density: &[f64], spacing: f64, kernel_width: f64) -> Result<Vec<f64>> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(invalid("spacing", format!("must be positive, got {spacing}")));
    }
    if !(kernel_width.is_finite() && kernel_width >= spacing * (1.0 - 1e-12)) {
        return Err(invalid(
            "kernel_width",
            format!("{kernel_width} is narrower than the grid spacing {spacing}"),
        ));
    }
    let dim = density.len();
    let reach = ((KERNEL_REACH * kernel_width / spacing).ceil() as usize).min(dim / 2);
    let mut kernel: Vec<f64> = (0..=reach)
        .map(|j| {
            let x = j as f64 * spacing / kernel_width;
            (-0.5 * x * x).exp()
        })
        .collect();
    let total = kernel[0] + 2.0 * kernel[1..].iter().sum::<f64>();
    kernel.iter_mut().for_each(|k| *k /= total);
    let out = (0..dim)
        .map(|i| {
            let mut acc = kernel[0] * density[i];
            for (j, k) in kernel.iter().enumerate().skip(1) {
                acc += k * (density[(i + j) % dim] + density[(i + dim - j % dim) % dim]);
            }
            acc
        })
        .collect();
    Ok(out)
}

/// Mass, mean and variance of the two half-lines about a split point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LobeStats {
    pub t_plus: f64,
    pub t_minus: f64,
    pub var_plus: f64,
    pub var_minus: f64,
    pub mass_plus: f64,
    pub mass_minus: f64,
}

/// Split-moment lobe estimates. Points exactly on the split are shared.
pub fn lobe_stats(density: &[f64], axis: &[f64], split_at: f64) -> Result<LobeStats> {
    if density.len() != axis.len() {
        return Err(invalid("axis", "length differs from the density"));
    }
    let total: f64 = density.iter().sum();
    if !(total > 0.0) {
        return Err(invalid("density", "has no mass"));
    }
    let side = |sign: f64| {
        let weight = |x: f64| {
            let d = (x - split_at) * sign;
            if d > 0.0 {
                1.0
            } else if d == 0.0 {
                0.5
            } else {
                0.0
            }
        };
        let mass: f64 = density.iter().zip(axis).map(|(p, &x)| p * weight(x)).sum::<f64>();
        if mass == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let mean = density.iter().zip(axis).map(|(p, &x)| p * weight(x) * x).sum::<f64>() / mass;
        let var = density.iter().zip(axis).map(|(p, &x)| p * weight(x) * (x - mean).powi(2)).sum::<f64>() / mass;
        (mass / total, mean, var)
    };
    let (mass_plus, t_plus, var_plus) = side(1.0);
    let (mass_minus, t_minus, var_minus) = side(-1.0);
    let weakest = mass_plus.min(mass_minus);
    if weakest < LOBE_MASS_FLOOR {
        return Err(Error::SingleLobe { mass: weakest, floor: LOBE_MASS_FLOOR });
    }
    Ok(LobeStats { t_plus, t_minus, var_plus, var_minus, mass_plus, mass_minus })
}

/// Lobe statistics scored against the clock-time and spread predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakReport {
    pub t_plus: f64,
    pub t_minus: f64,
    pub var_plus: f64,
    pub var_minus: f64,
    pub mass_plus: f64,
    pub mass_minus: f64,
    pub predicted_tc: f64,
    pub predicted_var: f64,
    pub rel_err_position: f64,
    pub rel_err_var: f64,
}

impl PeakReport {
    pub fn new(lobes: LobeStats, predicted_tc: f64, predicted_var: f64) -> Self {
        Self {
            t_plus: lobes.t_plus,
            t_minus: lobes.t_minus,
            var_plus: lobes.var_plus,
            var_minus: lobes.var_minus,
            mass_plus: lobes.mass_plus,
            mass_minus: lobes.mass_minus,
            predicted_tc,
            predicted_var,
            rel_err_position: (lobes.t_plus - predicted_tc).abs() / predicted_tc,
            rel_err_var: (lobes.var_plus - predicted_var).abs() / predicted_var,
        }
    }

    /// Relative error of the backward lobe against `-t_c`.
    pub fn rel_err_position_minus(&self) -> f64 {
        (self.t_minus + self.predicted_tc).abs() / self.predicted_tc
    }

    pub fn rel_err_var_minus(&self) -> f64 {
        (self.var_minus - self.predicted_var).abs() / self.predicted_var
    }

    /// `|t+ + t-| / t_c`.
    pub fn asymmetry(&self) -> f64 {
        (self.t_plus + self.t_minus).abs() / self.predicted_tc
    }
}

/// `2 pi sqrt(n) / (sigma lambda)`.
pub fn predict_clock_time(n: usize, sigma: f64, lambda: f64) -> f64 {
    clock_time(n, sigma, lambda)
}

/// Lobe variance `2 / |lambda tan(theta / 4)|` for `2 pi < theta < 4 pi`.
pub fn predict_spread(lambda: f64, theta: f64) -> Result<f64> {
    if !(theta > 2.0 * PI && theta < 4.0 * PI) {
        return Err(Error::ThetaOutOfRange { theta });
    }
    let tan_abs = (theta / 4.0).tan().abs();
    if tan_abs < 1e-6 {
        return Err(Error::SpreadDivergent { theta, tan_abs });
    }
    Ok(2.0 / (lambda * tan_abs).abs())
}

/// Successive clock-time spacing against the lobe spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpacingReport {
    pub n: usize,
    pub exact_spacing: f64,
    pub approx_spacing: f64,
    /// Standard deviation `sqrt(predict_spread)`.
    pub spread: f64,
    pub overlapping: bool,
}

pub fn spacing_report(n: usize, sigma: f64, lambda: f64, theta: f64) -> Result<SpacingReport> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let nf = n as f64;
    // sqrt(n+1) - sqrt(n) without the cancellation.
    let exact_spacing = 2.0 * PI / (sigma * lambda * ((nf + 1.0).sqrt() + nf.sqrt()));
    let approx_spacing = PI / (sigma * lambda * nf.sqrt());
    let spread = predict_spread(lambda, theta)?.sqrt();
    Ok(SpacingReport { n, exact_spacing, approx_spacing, spread, overlapping: approx_spacing < spread })
}

/// One row of a theta scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaScanRow<T> {
    pub theta: f64,
    pub measured: T,
    pub predicted_var: f64,
}

/// Evaluates `measure` (typically a lobe variance) at each theta against the
/// spread law, one row per theta in ascending order. The predicted variance
/// must increase with theta across the scan.
pub fn theta_scan<T, F>(lambda: f64, theta_grid: &[f64], measure: F) -> Result<Vec<ThetaScanRow<T>>>
where
    T: Send,
    F: Fn(f64) -> Result<T> + Sync,
{
    let mut thetas = theta_grid.to_vec();
    thetas.sort_by(f64::total_cmp);
    let predicted = thetas.iter().map(|&t| predict_spread(lambda, t)).collect::<Result<Vec<_>>>()?;
    if predicted.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Invariant("predicted spread is not increasing in theta".into()));
    }
    thetas
        .par_iter()
        .zip(predicted.par_iter())
        .map(|(&theta, &predicted_var)| Ok(ThetaScanRow { theta, measured: measure(theta)?, predicted_var }))
        .collect()
}

/// Clock-time axis and probability density of a state.
pub fn clock_density(pair: &GeneratorPair, s: &StateVector) -> (Vec<f64>, Vec<f64>) {
    let c = s.to_coordinate();
    let total = c.norm_sqr();
    let density = c.density().into_iter().map(|p| p / total).collect();
    (pair.clock_axis(), density)
}

fn bhattacharyya_sq(p: &[f64], q: &[f64]) -> f64 {
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    if sp == 0.0 || sq == 0.0 {
        return 0.0;
    }
    let bc: f64 = p.iter().zip(q).map(|(a, b)| (a.max(0.0) * b.max(0.0)).sqrt()).sum::<f64>() / (sp * sq).sqrt();
    (bc * bc).clamp(0.0, 1.0)
}

fn smoothed(s: &StateVector, kernel_width: f64) -> Result<Vec<f64>> {
    let c = s.to_coordinate();
    coarse_grain(&c.density(), c.space().spacing(), kernel_width)
}

/// Squared Bhattacharyya coefficient of the coarse-grained coordinate
/// densities; `kernel_width` is in grid-coordinate units.
pub fn model_match(qvp_state: &StateVector, model_state: &StateVector, kernel_width: f64) -> Result<f64> {
    if qvp_state.space() != model_state.space() {
        return Err(Error::SpaceMismatch);
    }
    Ok(bhattacharyya_sq(&smoothed(qvp_state, kernel_width)?, &smoothed(model_state, kernel_width)?))
}

/// Which half-line a lobe occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lobe {
    Forward,
    Backward,
}

/// [`model_match`] restricted to one half-line, each side renormalised.
pub fn lobe_match(a: &StateVector, b: &StateVector, kernel_width: f64, lobe: Lobe) -> Result<f64> {
    if a.space() != b.space() {
        return Err(Error::SpaceMismatch);
    }
    let space = *a.space();
    let keep = |i: usize| match lobe {
        Lobe::Forward => space.coordinate(i) > 0.0,
        Lobe::Backward => space.coordinate(i) < 0.0,
    };
    let restrict = |d: Vec<f64>| -> Vec<f64> { d.into_iter().enumerate().map(|(i, p)| if keep(i) { p } else { 0.0 }).collect() };
    let p = restrict(smoothed(a, kernel_width)?);
    let q = restrict(smoothed(b, kernel_width)?);
    Ok(bhattacharyya_sq(&p, &q))
}

/// Central-difference check of `i d/dt psi = H^phen_F psi` at clock time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchrodingerCheck {
    pub t: f64,
    pub h: f64,
    pub error_h: f64,
    pub error_half: f64,
    pub ratio: f64,
}

/// Compares `(psi(t+h) - psi(t-h)) / 2h` with `-i H^phen_F psi(t)` at steps
/// `h` and `h/2`; the error ratio is 4 for a second-order match.
pub fn schrodinger_check(phen: &PhenomenologicalPair, seed: &StateVector, t: f64, h: f64) -> Result<SchrodingerCheck> {
    if !(h.is_finite() && h > 0.0) {
        return Err(invalid("h", format!("must be positive, got {h}")));
    }
    let psi = phen.evolve_forward(seed, t);
    let rhs = phen.apply_forward(&psi).scaled(Complex64::new(0.0, -1.0));
    let error = |h: f64| -> Result<f64> {
        let plus = phen.evolve_forward(seed, t + h);
        let minus = phen.evolve_forward(seed, t - h);
        let diff = plus.add_scaled(Complex64::new(-1.0, 0.0), &minus)?.scaled(Complex64::new(0.5 / h, 0.0));
        Ok(diff.distance(&rhs)? / rhs.norm())
    };
    let error_h = error(h)?;
    let error_half = error(0.5 * h)?;
    Ok(SchrodingerCheck { t, h, error_h, error_half, ratio: error_h / error_half })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(dim: usize, h: f64) -> Vec<f64> {
        (0..dim).map(|i| (i as f64 - (dim / 2) as f64) * h).collect()
    }

    #[test]
    fn coarse_grain_preserves_mass_and_positivity() {
        let x = axis(512, 0.05);
        let d: Vec<f64> = x.iter().map(|v| (-(v - 3.0).powi(2)).exp() + 0.2 * (-(v + 4.0).powi(2) * 4.0).exp()).collect();
        let s: f64 = d.iter().sum();
        let g = coarse_grain(&d, 0.05, 0.3).unwrap();
        assert!((g.iter().sum::<f64>() - s).abs() < 1e-12 * s);
        assert!(g.iter().all(|&v| v >= 0.0));
        let fine = axis(2048, 0.02);
        let smooth: Vec<f64> = fine.iter().map(|v| (-(v - 3.0).powi(2)).exp()).collect();
        let narrow = coarse_grain(&smooth, 0.02, 0.02).unwrap();
        let diff = smooth.iter().zip(&narrow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-3, "{diff}");
        assert!(coarse_grain(&d, 0.05, 0.01).is_err());
    }

    #[test]
    fn delta_smooths_to_kernel_variance() {
        let x = axis(1024, 0.02);
        let mut d = vec![0.0; 1024];
        d[512] = 1.0;
        let g = coarse_grain(&d, 0.02, 0.5).unwrap();
        let (m, v) = crate::hilbert::moments(&g, &x);
        assert!(m.abs() < 1e-12);
        assert!((v / 0.25 - 1.0).abs() < 0.02);
    }

    #[test]
    fn lobes_of_a_double_gaussian() {
        let x = axis(4096, 0.01);
        let d: Vec<f64> = x
            .iter()
            .map(|v| (-(v - 5.0).powi(2) / 0.4).exp() + (-(v + 5.0).powi(2) / 0.4).exp())
            .collect();
        let l = lobe_stats(&d, &x, 0.0).unwrap();
        assert!((l.t_plus - 5.0).abs() < 0.05 && (l.t_minus + 5.0).abs() < 0.05);
        assert!((l.var_plus / 0.2 - 1.0).abs() < 0.05 && (l.var_minus / 0.2 - 1.0).abs() < 0.05);
        assert!(l.mass_plus + l.mass_minus <= 1.0 + 1e-9);
        let single: Vec<f64> = x.iter().map(|v| (-(v - 5.0).powi(2)).exp()).collect();
        assert!(matches!(lobe_stats(&single, &x, 0.0), Err(Error::SingleLobe { .. })));
    }

    #[test]
    fn peak_report_errors_recompute() {
        let l = LobeStats { t_plus: 10.3, t_minus: -9.9, var_plus: 0.5, var_minus: 0.45, mass_plus: 0.5, mass_minus: 0.5 };
        let r = PeakReport::new(l, 10.0, 0.4);
        assert!((r.rel_err_position - (r.t_plus - r.predicted_tc).abs() / r.predicted_tc).abs() < 1e-12);
        assert!((r.rel_err_var - 0.25).abs() < 1e-12);
        assert!((r.asymmetry() - 0.04).abs() < 1e-12);
    }

    #[test]
    fn clock_time_examples() {
        assert!((predict_clock_time(100, 1.0, 2.0 * PI) - 10.0).abs() < 1e-12);
        assert!((predict_clock_time(400, 1.0, 2.0 * PI) - 20.0).abs() < 1e-12);
        assert!((predict_clock_time(1, 1.0, 2.0 * PI) - 1.0).abs() < 1e-12);
        let r = predict_clock_time(4 * 37, 1.3, 2.1) / predict_clock_time(37, 1.3, 2.1);
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spread_examples() {
        assert!((predict_spread(3.0 * PI, 3.0 * PI).unwrap() - 0.21221).abs() < 1e-5);
        assert!((predict_spread(6.0 * PI, 3.0 * PI).unwrap() - 0.10610).abs() < 1e-5);
        assert!(matches!(predict_spread(PI, 4.0 * PI - 1e-9), Err(Error::SpreadDivergent { .. })));
        assert!(matches!(predict_spread(PI, 2.0 * PI), Err(Error::ThetaOutOfRange { .. })));
    }

    #[test]
    fn spacing_examples() {
        let r = spacing_report(100, 1.0, 2.0 * PI, 3.0 * PI).unwrap();
        assert!((r.exact_spacing - (101f64.sqrt() - 10.0)).abs() < 1e-12);
        assert!((r.approx_spacing - 0.05).abs() < 1e-15);
        let direct = predict_clock_time(101, 1.0, 2.0 * PI) - predict_clock_time(100, 1.0, 2.0 * PI);
        assert!((r.exact_spacing - direct).abs() < 1e-12);
        let big = spacing_report(10_000, 1.0, 2.0 * PI, 3.0 * PI).unwrap();
        assert!(big.approx_spacing / big.exact_spacing <= 1.01);
        assert!(big.exact_spacing < big.approx_spacing);
        let o = spacing_report(20, 1.0, 3.0 * PI, 3.0 * PI).unwrap();
        assert!(o.overlapping);
    }

    #[test]
    fn theta_scan_orders_and_validates() {
        let rows = theta_scan(PI, &[3.5 * PI, 2.5 * PI, 3.0 * PI], |t| predict_spread(PI, t)).unwrap();
        assert!(rows.windows(2).all(|w| w[0].theta < w[1].theta && w[0].predicted_var < w[1].predicted_var));
        assert!(theta_scan(PI, &[2.0 * PI], |_| Ok(0.0)).is_err());
        assert!(rows.iter().all(|r| r.measured == r.predicted_var));
    }
}
