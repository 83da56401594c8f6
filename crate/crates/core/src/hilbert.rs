//! Finite periodic 1-D Hilbert space: grid, complex state vectors and the
//! unitary map between the coordinate and conjugate representations.
//!
//! Conventions, fixed once for the whole crate:
//!
//! * `coordinate(i) = (i - dim/2) * spacing`, so the grid covers
//!   `[-extent/2, extent/2)`.
//! * The conjugate transform is the symmetric-normalised DFT over grid
//!   indices with a negative-exponent forward kernel,
//!   `phi_j = dim^{-1/2} sum_i psi_i exp(-2 pi i ij / dim)`. Bin `j` carries the
//!   wavenumber `k_j = 2 pi j' / extent` with `j' = j` for `j < dim/2` and
//!   `j' = j - dim` otherwise (the Nyquist bin is negative).
//! * Multiplying conjugate amplitudes by `exp(-i k a)` translates a
//!   coordinate-space wavepacket by `+a`.
//!
//! Units are natural (hbar = 1).

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};

/// Smallest admissible grid dimension.
pub const MIN_DIM: usize = 8;
/// Fraction of the extent (centred on 0) that wavepackets must stay inside.
pub const GUARD_FRACTION: f64 = 0.8;
/// Largest probability mass tolerated outside the guarded region.
pub const GUARD_MASS_LIMIT: f64 = 1e-6;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(dim: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if forward {
            p.plan_fft_forward(dim)
        } else {
            p.plan_fft_inverse(dim)
        }
    })
}

/// Basis in which a [`StateVector`] stores its amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Coordinate,
    Conjugate,
}

impl Representation {
    pub fn other(self) -> Self {
        match self {
            Representation::Coordinate => Representation::Conjugate,
            Representation::Conjugate => Representation::Coordinate,
        }
    }
}

/// Uniform periodic grid of `dim` points over a total length `extent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpace {
    dim: usize,
    extent: f64,
    spacing: f64,
    origin_index: usize,
}

impl GridSpace {
    pub fn new(dim: usize, extent: f64) -> Result<Self> {
        if dim < MIN_DIM || !dim.is_multiple_of(2) {
            return Err(Error::InvalidDimension { dim, min: MIN_DIM });
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidExtent(extent));
        }
        Ok(Self { dim, extent, spacing: extent / dim as f64, origin_index: dim / 2 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin_index(&self) -> usize {
        self.origin_index
    }

    #[inline]
    pub fn coordinate(&self, i: usize) -> f64 {
        (i as f64 - self.origin_index as f64) * self.spacing
    }

    /// Signed wavenumber of conjugate bin `j`.
    #[inline]
    pub fn wavenumber(&self, j: usize) -> f64 {
        let signed = if j < self.dim / 2 { j as f64 } else { j as f64 - self.dim as f64 };
        2.0 * PI * signed / self.extent
    }

    /// Axis values of every grid point in the given representation.
    pub fn axis(&self, rep: Representation) -> Vec<f64> {
        match rep {
            Representation::Coordinate => (0..self.dim).map(|i| self.coordinate(i)).collect(),
            Representation::Conjugate => (0..self.dim).map(|j| self.wavenumber(j)).collect(),
        }
    }

    /// Index range `[lo, hi)` whose coordinates lie inside the guarded
    /// central fraction of the extent.
    pub fn guarded_range(&self) -> (usize, usize) {
        let half = 0.5 * GUARD_FRACTION * self.extent;
        let lo = (0..self.dim).find(|&i| self.coordinate(i) >= -half).unwrap_or(0);
        let hi = (0..self.dim).rev().find(|&i| self.coordinate(i) <= half).map_or(0, |i| i + 1);
        (lo, hi)
    }
}

/// Shorthand for [`GridSpace::new`].
pub fn make_grid(dim: usize, extent: f64) -> Result<GridSpace> {
    GridSpace::new(dim, extent)
}

/// Complex amplitudes over a [`GridSpace`], tagged with their basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: GridSpace,
    amplitudes: Vec<Complex64>,
    representation: Representation,
}

impl StateVector {
    pub fn new(
        space: GridSpace,
        amplitudes: Vec<Complex64>,
        representation: Representation,
    ) -> Result<Self> {
        if amplitudes.len() != space.dim {
            return Err(crate::error::invalid(
                "amplitudes",
                format!("length {} does not match grid dimension {}", amplitudes.len(), space.dim),
            ));
        }
        Ok(Self { space, amplitudes, representation })
    }

    /// Coordinate-representation state with amplitudes `f(coordinate)`.
    pub fn from_fn(space: GridSpace, f: impl Fn(f64) -> Complex64) -> Self {
        let amplitudes = (0..space.dim).map(|i| f(space.coordinate(i))).collect();
        Self { space, amplitudes, representation: Representation::Coordinate }
    }

    pub fn zeros(space: GridSpace, representation: Representation) -> Self {
        Self { space, amplitudes: vec![Complex64::new(0.0, 0.0); space.dim], representation }
    }

    pub fn space(&self) -> &GridSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Rescales to unit norm. A zero vector cannot be normalised.
    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(crate::error::invalid("state", format!("cannot normalise a state of norm {n}")));
        }
        let inv = 1.0 / n;
        self.amplitudes.iter_mut().for_each(|a| *a *= inv);
        Ok(n)
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn scaled(mut self, c: Complex64) -> Self {
        self.amplitudes.iter_mut().for_each(|a| *a *= c);
        self
    }

    /// Returns the state in the requested representation.
    pub fn in_representation(&self, rep: Representation) -> StateVector {
        if self.representation == rep {
            self.clone()
        } else {
            conjugate_transform(self)
        }
    }

    pub fn to_coordinate(&self) -> StateVector {
        self.in_representation(Representation::Coordinate)
    }

    fn check_compatible(&self, other: &StateVector) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }

    /// `<self|other>`, transforming `other` into this state's basis if needed.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        self.check_compatible(other)?;
        let other = other.in_representation(self.representation);
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum())
    }

    /// `self + c * other` in this state's representation.
    pub fn add_scaled(&self, c: Complex64, other: &StateVector) -> Result<StateVector> {
        self.check_compatible(other)?;
        let other = other.in_representation(self.representation);
        let amplitudes =
            self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a + c * b).collect();
        Ok(StateVector { space: self.space, amplitudes, representation: self.representation })
    }

    /// Euclidean distance `|| self - other ||`.
    pub fn distance(&self, other: &StateVector) -> Result<f64> {
        Ok(self.add_scaled(Complex64::new(-1.0, 0.0), other)?.norm())
    }

    /// `|psi_i|^2` in the current representation.
    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Largest componentwise difference `max_i |a_i - b_i|` in this basis.
    pub fn max_abs_diff(&self, other: &StateVector) -> Result<f64> {
        self.check_compatible(other)?;
        let other = other.in_representation(self.representation);
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Fraction of coordinate-space probability outside the guarded region.
    pub fn boundary_mass(&self) -> f64 {
        let s = self.to_coordinate();
        let (lo, hi) = s.space.guarded_range();
        let total = s.norm_sqr();
        if total == 0.0 {
            return 0.0;
        }
        let outside: f64 = s
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| *i < lo || *i >= hi)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        outside / total
    }

    /// Fails with [`Error::BoundaryMass`] if too much mass sits near the edges.
    pub fn check_boundary(&self) -> Result<()> {
        let mass = self.boundary_mass();
        if mass > GUARD_MASS_LIMIT {
            return Err(Error::BoundaryMass { mass, limit: GUARD_MASS_LIMIT, step: None });
        }
        Ok(())
    }
}

/// Normalised Gaussian `exp[-(w - center)^2 / (2 width^2)]` in the coordinate
/// representation.
pub fn gaussian_state(space: &GridSpace, center: f64, width: f64) -> Result<StateVector> {
    let required = 2.0 * space.spacing;
    if !(width.is_finite() && width >= required) {
        return Err(Error::Unresolved { width, spacing: space.spacing, required });
    }
    let half_extent = 0.5 * space.extent;
    if center.abs() + 4.0 * width >= half_extent {
        return Err(Error::BoundaryViolation { center, width, half_extent });
    }
    let inv = 1.0 / (2.0 * width * width);
    StateVector::from_fn(*space, |w| Complex64::new((-(w - center).powi(2) * inv).exp(), 0.0))
        .normalized()
}

/// Unit amplitude on a single grid point.
pub fn delta_state(space: &GridSpace, index: usize) -> StateVector {
    let mut s = StateVector::zeros(*space, Representation::Coordinate);
    s.amplitudes[index % space.dim] = Complex64::new(1.0, 0.0);
    s
}

/// Unitary change of basis between the coordinate and conjugate
/// representations. The output is in the other representation, so applying
/// it twice is the identity.
pub fn conjugate_transform(s: &StateVector) -> StateVector {
    let dim = s.space.dim;
    let mut buf = s.amplitudes.clone();
    let forward = s.representation == Representation::Coordinate;
    plan(dim, forward).process(&mut buf);
    let scale = 1.0 / (dim as f64).sqrt();
    buf.iter_mut().for_each(|a| *a *= scale);
    StateVector { space: s.space, amplitudes: buf, representation: s.representation.other() }
}

/// Multiplies amplitude `i` by `exp(i * phase_fn(axis_i))`, where the axis is
/// the coordinate or wavenumber according to `rep`.
pub fn apply_diagonal_phase(
    s: &StateVector,
    rep: Representation,
    phase_fn: impl Fn(f64) -> f64,
) -> Result<StateVector> {
    if s.representation != rep {
        return Err(Error::RepresentationMismatch { expected: rep, found: s.representation });
    }
    let axis = s.space.axis(rep);
    let amplitudes = s
        .amplitudes
        .iter()
        .zip(axis)
        .map(|(a, x)| a * Complex64::from_polar(1.0, phase_fn(x)))
        .collect();
    Ok(StateVector { space: s.space, amplitudes, representation: rep })
}

/// Overlap probability `|<a|b>|^2`, computed on normalised copies so the
/// result is always in `[0, 1]`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    let ip = a.inner(b)?;
    let denom = a.norm_sqr() * b.norm_sqr();
    if denom == 0.0 {
        return Err(crate::error::invalid("state", "fidelity of a zero vector"));
    }
    Ok((ip.norm_sqr() / denom).clamp(0.0, 1.0))
}

/// Mean and variance of `|psi|^2` along the axis of the state's basis.
pub fn density_moments(s: &StateVector) -> (f64, f64) {
    let axis = s.space.axis(s.representation);
    moments(&s.density(), &axis)
}

/// Mass-weighted mean and variance of a non-negative weight sequence.
pub fn moments(weights: &[f64], axis: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return (0.0, 0.0);
    }
    let mean = weights.iter().zip(axis).map(|(w, x)| w * x).sum::<f64>() / total;
    let var = weights.iter().zip(axis).map(|(w, x)| w * (x - mean).powi(2)).sum::<f64>() / total;
    (mean, var)
}
