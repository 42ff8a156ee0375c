//! Entropic regularizer on the simplex and its Legendre conjugate.
//!
//! ```text
//! F(x) = β⁻¹ Σ x_a ln x_a                 on Δⁿ
//! G(y) = β⁻¹ ln Σ exp(β y_a)              on ℝⁿ
//! ∇G(y) = softmax(β y)
//! ∇²G(y) = β (diag(x) − x xᵀ),  x = ∇G(y)
//! ```
//!
//! `F` and `G` are convex conjugates of each other, so `F(x) + G(y) ≥ xᵀy` with
//! equality exactly when `x = ∇G(y)`. The same pair is used with `n = d` for
//! full-information and bandit feedback and with `n = k` (number of arms) for
//! linear bandits.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input tolerance on `Σ x_a = 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A probability vector on Δⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    /// Validates that `values` is a probability vector.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("simplex point must be non-empty".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!(
                "simplex entries must be finite and non-negative, found {bad}"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!(
                "simplex entries must sum to 1, sum is {sum}"
            )));
        }
        Ok(SimplexPoint(values))
    }

    /// Uniform distribution on `n` points.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution needs n > 0");
        SimplexPoint(vec![1.0 / n as f64; n])
    }

    /// The vertex `e_i` of Δⁿ.
    pub fn vertex(n: usize, i: usize) -> Self {
        assert!(i < n, "vertex index {i} out of range for n = {n}");
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        SimplexPoint(v)
    }

    /// Wraps a vector the caller has already normalized.
    pub(crate) fn from_normalized(values: Vec<f64>) -> Self {
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        SimplexPoint(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A point of the dual space ℝⁿ (cumulative reward or its estimate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DualVector(Vec<f64>);

impl DualVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "dual vector entries must be finite, found {bad}"
            )));
        }
        Ok(DualVector(values))
    }

    pub fn zeros(n: usize) -> Self {
        DualVector(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Inverse temperature β > 0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_finite() && beta > 0.0 {
            Ok(Temperature(beta))
        } else {
            Err(Error::Domain(format!("beta must be positive, got {beta}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `β⁻¹ Σ x_a ln x_a` with `0·ln 0 = 0`.
pub fn regularizer(x: &SimplexPoint, beta: Temperature) -> f64 {
    neg_entropy(x.as_slice()) / beta.get()
}

fn neg_entropy(x: &[f64]) -> f64 {
    x.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum()
}

/// `β⁻¹ ln Σ exp(β y_a)`, evaluated with max-subtraction.
pub fn conjugate(y: &DualVector, beta: Temperature) -> f64 {
    log_sum_exp(y.as_slice(), beta.get())
}

/// Slice kernel behind [`conjugate`].
pub fn log_sum_exp(y: &[f64], beta: f64) -> f64 {
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail: f64 = y.iter().map(|&v| (beta * (v - max)).exp()).sum();
    max + tail.ln() / beta
}

/// `∇G(y) = softmax(β y)`.
pub fn grad_conjugate(y: &DualVector, beta: Temperature) -> SimplexPoint {
    let mut out = vec![0.0; y.len()];
    softmax_into(y.as_slice(), beta.get(), &mut out);
    SimplexPoint::from_normalized(out)
}

/// Writes `softmax(β y)` into `out`. Panics if the lengths differ.
pub fn softmax_into(y: &[f64], beta: f64, out: &mut [f64]) {
    assert_eq!(y.len(), out.len());
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(y) {
        *o = (beta * (v - max)).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `∇²G(y) = β (diag(x) − x xᵀ)` with `x = ∇G(y)`.
pub fn hess_conjugate(y: &DualVector, beta: Temperature) -> DMatrix<f64> {
    let x = grad_conjugate(y, beta);
    hess_at(x.as_slice(), beta.get())
}

/// The Hessian of `G` expressed through the point `x = ∇G(y)` it is evaluated at.
pub fn hess_at(x: &[f64], beta: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut h = DMatrix::from_fn(n, n, |a, b| -beta * (x[a] * x[b]));
    // x_a(1 − x_a) written as x_a Σ_{b≠a} x_b: no cancellation when x_a ≈ 1,
    // and each row sums to zero up to rounding.
    for a in 0..n {
        let rest: f64 = (0..n).filter(|&b| b != a).map(|b| x[b]).sum();
        h[(a, a)] = beta * x[a] * rest;
    }
    h
}

/// `F(x) + G(y) − xᵀy`, non-negative by the Fenchel–Young inequality.
pub fn fenchel_gap(x: &SimplexPoint, y: &DualVector, beta: Temperature) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    let inner: f64 = x
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    Ok(regularizer(x, beta) + conjugate(y, beta) - inner)
}

/// The regularized leader `argmax_x xᵀs − F(x)`, which is `∇G(s)`.
pub fn ftrl_argmax(s: &DualVector, beta: Temperature) -> SimplexPoint {
    grad_conjugate(s, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn beta(b: f64) -> Temperature {
        Temperature::new(b).unwrap()
    }

    fn dual(v: &[f64]) -> DualVector {
        DualVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn regularizer_values() {
        let u = SimplexPoint::uniform(4);
        assert_relative_eq!(regularizer(&u, beta(1.0)), -(4f64).ln(), epsilon = 1e-15);
        let v = SimplexPoint::vertex(3, 0);
        assert_eq!(regularizer(&v, beta(7.0)), 0.0);
        // 0.5·(0.5 ln 0.5 + 2·0.25 ln 0.25), also checked with mpmath at 50 digits
        let x = SimplexPoint::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert_relative_eq!(
            regularizer(&x, beta(2.0)),
            -0.519_860_385_419_958_6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn simplex_validation() {
        assert!(SimplexPoint::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexPoint::new(vec![1.5, -0.5]).is_err());
        assert!(SimplexPoint::new(vec![]).is_err());
        assert!(SimplexPoint::new(vec![0.5, 0.5 + 5e-13]).is_ok());
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
        assert!(DualVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn conjugate_values() {
        assert_relative_eq!(
            conjugate(&DualVector::zeros(4), beta(1.0)),
            (4f64).ln(),
            epsilon = 1e-15
        );
        let c = 3.25;
        assert_relative_eq!(
            conjugate(&dual(&[c, c, c]), beta(2.0)),
            c + (3f64).ln() / 2.0,
            epsilon = 1e-14
        );
        assert_eq!(conjugate(&dual(&[100.0, 0.0]), beta(1.0)), 100.0);
        let big = conjugate(&dual(&[1e6, 0.0, -1e6]), beta(1.0));
        assert_eq!(big, 1e6);
    }

    #[test]
    fn gradient_values() {
        let g = grad_conjugate(&DualVector::zeros(5), beta(1.0));
        for &v in g.as_slice() {
            assert_relative_eq!(v, 0.2, epsilon = 1e-16);
        }
        let g = grad_conjugate(&dual(&[1.0, 0.0]), beta(1.0));
        let e = std::f64::consts::E;
        assert_relative_eq!(g.as_slice()[0], e / (e + 1.0), epsilon = 1e-15);
        assert_relative_eq!(g.as_slice()[1], 1.0 / (e + 1.0), epsilon = 1e-15);
        assert_relative_eq!(g.as_slice()[0], 0.731_058_578_630_004_9, epsilon = 1e-15);
    }

    #[test]
    fn hessian_at_origin() {
        let h = hess_conjugate(&DualVector::zeros(2), beta(1.0));
        let expected = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert_relative_eq!(h, expected, epsilon = 1e-16);
    }

    #[test]
    fn fenchel_gap_at_vertex() {
        let gap = fenchel_gap(
            &SimplexPoint::vertex(3, 0),
            &DualVector::zeros(3),
            beta(1.0),
        )
        .unwrap();
        assert_relative_eq!(gap, (3f64).ln(), epsilon = 1e-15);
        assert!(fenchel_gap(&SimplexPoint::uniform(2), &DualVector::zeros(3), beta(1.0)).is_err());
    }

    #[test]
    fn leader_concentrates_for_large_beta() {
        let s = dual(&[0.3, 0.4, 0.2, 0.3]);
        let x = ftrl_argmax(&s, beta(1e3));
        assert!(x.as_slice()[1] > 1.0 - 1e-6);
        assert_eq!(
            ftrl_argmax(&DualVector::zeros(3), beta(5.0)),
            SimplexPoint::uniform(3)
        );
    }
}
