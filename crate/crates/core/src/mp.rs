//! Extended-precision complex arithmetic over MPFR floats.
//!
//! Path sums in the T-violating regime cancel to norms far below `1e-16`
//! (around `1e-70` at N = 256), so both the walk and the q-binomial
//! recurrence carry a working precision chosen from the expected loss.

use num_complex::Complex64;
use rug::ops::NegAssign;
use rug::{Assign, Float};

/// Complex number as a pair of MPFR floats.
#[derive(Debug, Clone)]
pub struct MpComplex {
    pub re: Float,
    pub im: Float,
}

impl MpComplex {
    pub fn zero(prec: u32) -> Self {
        Self { re: Float::new(prec), im: Float::new(prec) }
    }

    pub fn from_f64(prec: u32, z: Complex64) -> Self {
        Self { re: Float::with_val(prec, z.re), im: Float::with_val(prec, z.im) }
    }

    /// `exp(i angle)` evaluated at full precision.
    pub fn unit(prec: u32, angle: &Float) -> Self {
        let mut s = Float::with_val(prec, angle);
        let mut c = Float::new(prec);
        s.sin_cos_mut(&mut c);
        Self { re: c, im: s }
    }

    pub fn prec(&self) -> u32 {
        self.re.prec()
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    /// `self = a * b`.
    pub fn assign_mul(&mut self, a: &MpComplex, b: &MpComplex) {
        self.re.assign(&a.re * &b.re - &a.im * &b.im);
        self.im.assign(&a.re * &b.im + &a.im * &b.re);
    }

    /// `self = a + b`.
    pub fn assign_add(&mut self, a: &MpComplex, b: &MpComplex) {
        self.re.assign(&a.re + &b.re);
        self.im.assign(&a.im + &b.im);
    }

    /// `self += a * b`.
    pub fn add_mul(&mut self, a: &MpComplex, b: &MpComplex, scratch: &mut MpComplex) {
        scratch.assign_mul(a, b);
        self.re += &scratch.re;
        self.im += &scratch.im;
    }

    pub fn conj_in_place(&mut self) {
        self.im.neg_assign();
    }

    /// Multiplies by `2^exp` exactly.
    pub fn scale_pow2(&mut self, exp: i32) {
        self.re <<= exp;
        self.im <<= exp;
    }

    pub fn norm_sqr(&self) -> Float {
        Float::with_val(self.prec(), &self.re * &self.re + &self.im * &self.im)
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }
}

/// Working precision (bits) for a computation that loses about
/// `loss_digits` decimal digits to cancellation and must keep `keep_digits`.
pub fn precision_for(loss_digits: f64, keep_digits: f64) -> u32 {
    const LOG2_10: f64 = std::f64::consts::LOG2_10;
    let bits = ((loss_digits.max(0.0) + keep_digits) * LOG2_10).ceil() as u32 + 64;
    bits.max(128)
}
