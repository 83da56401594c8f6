//! Forward/backward generator pairs, directional evolution, the antiunitary
//! time-reversal map and the phenomenological (weighted-average) generators.
//!
//! Every generator here is linear in the canonical pair, `H = p P + q Q`
//! with `[Q, P] = i`, so every exponential factorises exactly as
//! `exp(-i t H) = exp(-i t q Q / 2) exp(-i t p P) exp(-i t q Q / 2)`
//! (the symmetric split of two operators with a central commutator has no
//! residual phase). Each evolution therefore costs one pair of transforms.
//!
//! In the T-violating regime the pair is
//!
//! ```text
//! H_F = sqrt(lambda) (P - Q/2),    H_B = sqrt(lambda) (P + Q/2),
//! ```
//!
//! which gives `[H_B, H_F] = i lambda`. Both generators advance the grid
//! coordinate at rate `sqrt(lambda)`, so the clock-time axis is
//! `t = coordinate / sqrt(lambda)`: forward evolution moves a packet to
//! positive `t` and backward evolution to negative `t`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::hilbert::{conjugate_transform, GridSpace, Representation, StateVector};

/// Generator `p_coef * P + q_coef * Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearGenerator {
    pub p_coef: f64,
    pub q_coef: f64,
}

impl LinearGenerator {
    pub const fn new(p_coef: f64, q_coef: f64) -> Self {
        Self { p_coef, q_coef }
    }

    /// `a * self + b * other`.
    pub fn combine(a: f64, first: &Self, b: f64, second: &Self) -> Self {
        Self {
            p_coef: a * first.p_coef + b * second.p_coef,
            q_coef: a * first.q_coef + b * second.q_coef,
        }
    }

    /// The constant `c` in `[self, other] = i c`.
    pub fn commutator(&self, other: &Self) -> f64 {
        // [pP + qQ, p'P + q'Q] = p q' [P,Q] + q p' [Q,P] = i (q p' - p q')
        self.q_coef * other.p_coef - self.p_coef * other.q_coef
    }

    /// `H psi` by direct operator application (P spectrally, Q pointwise).
    /// Output is in the coordinate representation.
    pub fn apply(&self, s: &StateVector) -> StateVector {
        let s = s.to_coordinate();
        let space = *s.space();
        let mut out = StateVector::zeros(space, Representation::Coordinate);
        if self.p_coef != 0.0 {
            let mut k = conjugate_transform(&s);
            for (j, a) in k.amplitudes_mut().iter_mut().enumerate() {
                *a *= self.p_coef * space.wavenumber(j);
            }
            out = conjugate_transform(&k);
        }
        if self.q_coef != 0.0 {
            for (i, (o, a)) in out.amplitudes_mut().iter_mut().zip(s.amplitudes()).enumerate() {
                *o += self.q_coef * space.coordinate(i) * a;
            }
        }
        out
    }

    /// `exp(-i tau H) psi` for any real `tau`, in the coordinate representation.
    pub fn propagate(&self, s: &StateVector, tau: f64) -> StateVector {
        let mut s = s.to_coordinate();
        if tau == 0.0 {
            return s;
        }
        let space = *s.space();
        let half_phase = |s: &mut StateVector| {
            if self.q_coef != 0.0 {
                let rate = -0.5 * tau * self.q_coef;
                for (i, a) in s.amplitudes_mut().iter_mut().enumerate() {
                    *a *= Complex64::from_polar(1.0, rate * space.coordinate(i));
                }
            }
        };
        half_phase(&mut s);
        if self.p_coef != 0.0 {
            let mut k = conjugate_transform(&s);
            let rate = -tau * self.p_coef;
            for (j, a) in k.amplitudes_mut().iter_mut().enumerate() {
                *a *= Complex64::from_polar(1.0, rate * space.wavenumber(j));
            }
            s = conjugate_transform(&k);
        }
        half_phase(&mut s);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Commuting,
    Weyl,
}

/// Direction of physical time evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Realisation of the forward and backward generators on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorPair {
    regime: Regime,
    lambda: f64,
    scale: f64,
    space: GridSpace,
    forward: LinearGenerator,
    backward: LinearGenerator,
}

/// Single generator `scale * P` acting in both directions (T-symmetric case).
pub fn build_commuting(space: &GridSpace, scale: f64) -> Result<GeneratorPair> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(invalid("scale", format!("must be positive and finite, got {scale}")));
    }
    let g = LinearGenerator::new(scale, 0.0);
    Ok(GeneratorPair {
        regime: Regime::Commuting,
        lambda: 0.0,
        scale,
        space: *space,
        forward: g,
        backward: g,
    })
}

/// T-violating pair with `[H_B, H_F] = i lambda`.
pub fn build_weyl_pair(space: &GridSpace, lambda: f64) -> Result<GeneratorPair> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid(
            "lambda",
            format!("must be positive (got {lambda}); use build_commuting for the lambda = 0 case"),
        ));
    }
    let r = lambda.sqrt();
    Ok(GeneratorPair {
        regime: Regime::Weyl,
        lambda,
        scale: r,
        space: *space,
        forward: LinearGenerator::new(r, -0.5 * r),
        backward: LinearGenerator::new(r, 0.5 * r),
    })
}

impl GeneratorPair {
    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn space(&self) -> &GridSpace {
        &self.space
    }

    pub fn forward(&self) -> &LinearGenerator {
        &self.forward
    }

    pub fn backward(&self) -> &LinearGenerator {
        &self.backward
    }

    /// Grid-coordinate displacement produced per unit evolution time.
    pub fn coordinate_rate(&self) -> f64 {
        self.scale
    }

    /// Conversion factor from grid coordinate to clock time (`t = x / factor`).
    /// Weyl pairs read the axis in clock time; commuting pairs keep the raw
    /// coordinate.
    pub fn clock_factor(&self) -> f64 {
        match self.regime {
            Regime::Weyl => self.scale,
            Regime::Commuting => 1.0,
        }
    }

    /// Axis of the grid expressed in clock time (or raw coordinate).
    pub fn clock_axis(&self) -> Vec<f64> {
        let f = self.clock_factor();
        (0..self.space.dim()).map(|i| self.space.coordinate(i) / f).collect()
    }

    fn check_space(&self, s: &StateVector) -> Result<()> {
        if *s.space() != self.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }

    /// `exp(-i d H_F)` forward, `exp(+i d H_B)` backward, for `d > 0`.
    pub fn evolve(&self, s: &StateVector, duration: f64, direction: Direction) -> Result<StateVector> {
        self.check_space(s)?;
        if !(duration.is_finite() && duration > 0.0) {
            return Err(invalid("duration", format!("must be positive, got {duration}")));
        }
        Ok(match direction {
            Direction::Forward => self.forward.propagate(s, duration),
            Direction::Backward => self.backward.propagate(s, -duration),
        })
    }

    /// Inverse of [`evolve`](Self::evolve): `exp(+i d H_F)` or `exp(-i d H_B)`.
    pub fn unwind(&self, s: &StateVector, duration: f64, direction: Direction) -> Result<StateVector> {
        self.check_space(s)?;
        if !(duration.is_finite() && duration > 0.0) {
            return Err(invalid("duration", format!("must be positive, got {duration}")));
        }
        Ok(match direction {
            Direction::Forward => self.forward.propagate(s, -duration),
            Direction::Backward => self.backward.propagate(s, duration),
        })
    }

    /// Largest deviation `|<psi|[H_B, H_F]|psi> - i lambda|` over the probes,
    /// with both operator products applied directly.
    pub fn commutator_check(&self, probes: &[StateVector]) -> Result<f64> {
        let mut worst = 0.0f64;
        for probe in probes {
            self.check_space(probe)?;
            probe.check_boundary()?;
            let bf = self.backward.apply(&self.forward.apply(probe));
            let fb = self.forward.apply(&self.backward.apply(probe));
            let comm = bf.add_scaled(Complex64::new(-1.0, 0.0), &fb)?;
            let expectation = probe.inner(&comm)? / probe.norm_sqr();
            worst = worst.max((expectation - Complex64::new(0.0, self.lambda)).norm());
        }
        Ok(worst)
    }

    /// Antiunitary time reversal `Theta psi(x) = conj(psi(-x))`: complex
    /// conjugation composed with parity, equivalently complex conjugation of
    /// the conjugate-representation amplitudes. It maps `H_F` onto `H_B`
    /// (`Theta^-1 H_F Theta = H_B`) and squares to the identity exactly, so
    /// it is its own inverse.
    pub fn time_reversal(&self, s: &StateVector) -> StateVector {
        let s = s.to_coordinate();
        let dim = s.space().dim();
        let src = s.amplitudes();
        let amps = (0..dim).map(|i| src[(dim - i) % dim].conj()).collect();
        StateVector::new(*s.space(), amps, Representation::Coordinate).expect("same length")
    }

    pub fn time_reversal_inverse(&self, s: &StateVector) -> StateVector {
        self.time_reversal(s)
    }

    /// Phenomenological pair for interference parameter `theta`.
    pub fn phen_pair(&self, theta: f64) -> Result<PhenomenologicalPair> {
        phen_pair(self, theta)
    }
}

/// `H^phen_F = a+ H_F - a- H_B` and its time-reversal conjugate
/// `H^phen_B = a+ H_B - a- H_F`, with `a+- = theta/4pi +- 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhenomenologicalPair {
    pub a_plus: f64,
    pub a_minus: f64,
    pub theta: f64,
    forward: LinearGenerator,
    backward: LinearGenerator,
    source: GeneratorPair,
}

pub fn phen_pair(pair: &GeneratorPair, theta: f64) -> Result<PhenomenologicalPair> {
    if !(theta > 2.0 * PI && theta < 4.0 * PI) {
        return Err(Error::ThetaOutOfRange { theta });
    }
    let a_plus = theta / (4.0 * PI) + 0.5;
    // a_plus is in (1, 2), so this subtraction is exact and a+ - a- == 1.
    let a_minus = a_plus - 1.0;
    let forward = LinearGenerator::combine(a_plus, &pair.forward, -a_minus, &pair.backward);
    let backward = LinearGenerator::combine(a_plus, &pair.backward, -a_minus, &pair.forward);
    Ok(PhenomenologicalPair { a_plus, a_minus, theta, forward, backward, source: *pair })
}

impl PhenomenologicalPair {
    pub fn source(&self) -> &GeneratorPair {
        &self.source
    }

    pub fn forward(&self) -> &LinearGenerator {
        &self.forward
    }

    pub fn backward(&self) -> &LinearGenerator {
        &self.backward
    }

    /// `exp(-i t H^phen_F) psi`.
    pub fn evolve_forward(&self, s: &StateVector, t: f64) -> StateVector {
        self.forward.propagate(s, t)
    }

    /// `exp(+i t H^phen_B) psi`.
    pub fn evolve_backward(&self, s: &StateVector, t: f64) -> StateVector {
        self.backward.propagate(s, -t)
    }

    /// `H^phen_F psi`.
    pub fn apply_forward(&self, s: &StateVector) -> StateVector {
        self.forward.apply(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{density_moments, fidelity, gaussian_state, make_grid};

    fn weyl_setup() -> (GeneratorPair, StateVector) {
        let g = make_grid(512, 64.0).unwrap();
        let pair = build_weyl_pair(&g, PI).unwrap();
        let psi = gaussian_state(&g, 0.0, 1.0).unwrap();
        (pair, psi)
    }

    #[test]
    fn commuting_translation_and_inverse() {
        let g = make_grid(1024, 64.0).unwrap();
        let pair = build_commuting(&g, 1.5).unwrap();
        assert_eq!(pair.lambda(), 0.0);
        let psi = gaussian_state(&g, 0.0, 1.0).unwrap();
        let out = pair.evolve(&psi, 2.0, Direction::Forward).unwrap();
        let (m, v) = density_moments(&out);
        assert!((m - 3.0).abs() < 0.03);
        assert!((v - 0.5).abs() < 1e-9);
        let back = pair.evolve(&out, 2.0, Direction::Backward).unwrap();
        assert!(fidelity(&back, &psi).unwrap() >= 1.0 - 1e-10);
        assert!(build_commuting(&g, 0.0).is_err());
    }

    #[test]
    fn weyl_requires_positive_lambda() {
        let g = make_grid(64, 16.0).unwrap();
        let err = build_weyl_pair(&g, 0.0).unwrap_err();
        assert!(err.to_string().contains("build_commuting"));
    }

    #[test]
    fn weyl_forward_is_a_translation() {
        let (pair, psi) = weyl_setup();
        let d = 3.0;
        let out = pair.evolve(&psi, d, Direction::Forward).unwrap();
        let (m, v) = density_moments(&out);
        assert!((m - PI.sqrt() * d).abs() < 0.01 * PI.sqrt() * d);
        assert!((v - 0.5).abs() < 0.005);
        let back = pair.evolve(&psi, d, Direction::Backward).unwrap();
        let (mb, _) = density_moments(&back);
        assert!((mb + PI.sqrt() * d).abs() < 0.01 * PI.sqrt() * d);
    }

    #[test]
    fn commutator_residuals() {
        let (pair, psi) = weyl_setup();
        let probes = vec![psi.clone(), gaussian_state(pair.space(), 2.0, 1.5).unwrap()];
        assert!(pair.commutator_check(&probes).unwrap() <= 1e-6);
        let comm = build_commuting(pair.space(), 1.0).unwrap();
        assert!(comm.commutator_check(&probes).unwrap() <= 1e-10);
        let edge = gaussian_state(pair.space(), 27.0, 1.0).unwrap();
        assert!(matches!(pair.commutator_check(&[edge]), Err(Error::BoundaryMass { .. })));
        assert!((pair.backward().commutator(pair.forward()) - pair.lambda()).abs() < 1e-14);
    }

    #[test]
    fn evolve_rejects_bad_durations_and_is_continuous() {
        let (pair, psi) = weyl_setup();
        assert!(pair.evolve(&psi, 0.0, Direction::Forward).is_err());
        assert!(pair.evolve(&psi, -1.0, Direction::Backward).is_err());
        let tiny = pair.evolve(&psi, 1e-8, Direction::Forward).unwrap();
        assert!(fidelity(&tiny, &psi).unwrap() >= 1.0 - 1e-6);
    }

    #[test]
    fn weyl_round_trip_is_not_identity() {
        let (pair, psi) = weyl_setup();
        let there = pair.evolve(&psi, 0.5, Direction::Forward).unwrap();
        let back = pair.evolve(&there, 0.5, Direction::Backward).unwrap();
        let f = fidelity(&back, &psi).unwrap();
        assert!(f < 1.0 - 1e-3, "fidelity {f}");
        // the unwinding operators are the true inverses
        let undone = pair.unwind(&there, 0.5, Direction::Forward).unwrap();
        assert!(fidelity(&undone, &psi).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn time_reversal_conjugates_forward_into_backward() {
        let (pair, _) = weyl_setup();
        let psi = gaussian_state(pair.space(), 0.7, 1.2).unwrap();
        let delta = 0.1;
        let lhs = pair.time_reversal_inverse(
            &pair.evolve(&pair.time_reversal(&psi), delta, Direction::Forward).unwrap(),
        );
        let rhs = pair.evolve(&psi, delta, Direction::Backward).unwrap();
        assert!(lhs.distance(&rhs).unwrap() <= 1e-8);
        // Theta^2 = identity exactly under this convention
        let twice = pair.time_reversal(&pair.time_reversal(&psi));
        assert_eq!(twice.max_abs_diff(&psi).unwrap(), 0.0);
    }

    #[test]
    fn time_reversal_is_antilinear() {
        let (pair, _) = weyl_setup();
        let psi = gaussian_state(pair.space(), 1.0, 1.0).unwrap();
        let shifted = pair.evolve(&psi, 0.3, Direction::Forward).unwrap();
        let i = Complex64::new(0.0, 1.0);
        let lhs = pair.time_reversal(&shifted.clone().scaled(i));
        let rhs = pair.time_reversal(&shifted).scaled(i.conj());
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
    }

    #[test]
    fn phen_coefficients() {
        let (pair, _) = weyl_setup();
        let p = phen_pair(&pair, 3.0 * PI).unwrap();
        assert!((p.a_plus - 1.25).abs() < 1e-15 && (p.a_minus - 0.25).abs() < 1e-15);
        let p = phen_pair(&pair, 2.23 * PI).unwrap();
        assert!((p.a_plus - 1.0575).abs() < 1e-12 && (p.a_minus - 0.0575).abs() < 1e-12);
        for i in 1..100 {
            let theta = 2.0 * PI + 2.0 * PI * i as f64 / 100.0;
            let p = phen_pair(&pair, theta).unwrap();
            assert_eq!(p.a_plus - p.a_minus, 1.0);
            assert!((p.a_plus + p.a_minus - theta / (2.0 * PI)).abs() < 1e-12);
        }
        assert!(matches!(phen_pair(&pair, 2.0 * PI), Err(Error::ThetaOutOfRange { .. })));
        assert!(matches!(phen_pair(&pair, 4.0 * PI), Err(Error::ThetaOutOfRange { .. })));
    }

    #[test]
    fn phen_generators_are_time_reversal_conjugates() {
        let (pair, _) = weyl_setup();
        let p = phen_pair(&pair, 2.5 * PI).unwrap();
        let psi = gaussian_state(pair.space(), -0.4, 1.1).unwrap();
        let t = 0.8;
        let lhs = pair.time_reversal(&p.evolve_forward(&pair.time_reversal(&psi), t));
        let rhs = p.evolve_backward(&psi, t);
        assert!(lhs.distance(&rhs).unwrap() < 1e-8);
    }

    #[test]
    fn net_evolution_decomposes_into_directional_steps() {
        let (pair, psi) = weyl_setup();
        let p = phen_pair(&pair, 2.23 * PI).unwrap();
        for delta in [0.1, 0.5, 1.0] {
            let net = p.evolve_forward(&psi, delta);
            let f = pair.evolve(&psi, p.a_minus * delta, Direction::Backward).unwrap();
            let composite = pair.evolve(&f, p.a_plus * delta, Direction::Forward).unwrap();
            assert!(fidelity(&net, &composite).unwrap() >= 1.0 - 1e-8);
        }
    }
}
