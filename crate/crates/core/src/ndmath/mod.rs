//! Dense matrices, activations, the portable RNG and a finite-difference
//! gradient oracle.

mod matrix;
mod rng;

use alloc::vec::Vec;

pub use matrix::{affine, dot, Matrix};
pub use rng::{sample_standard_normal, RngStream};

use crate::error::{Error, Result};

/// Logistic function in the `exp(-|x|)` form. Saturates to exactly 0 or 1
/// once `exp(-|x|)` leaves the `f64` range; never NaN for finite input.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    let e = libm::exp(-libm::fabs(x));
    if x >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    }
}

/// `log σ(x) = -softplus(-x)`, finite wherever `x` is.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(sigmoid_scalar)
}

pub fn tanh(x: &Matrix) -> Matrix {
    x.map(libm::tanh)
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Invalid(alloc::format!("finite difference step must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        if !plus.is_finite() {
            return Err(Error::NonFiniteOracle { coordinate: i, value: plus });
        }
        probe[i] = x[i] - h;
        let minus = f(&probe);
        if !minus.is_finite() {
            return Err(Error::NonFiniteOracle { coordinate: i, value: minus });
        }
        probe[i] = x[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}
