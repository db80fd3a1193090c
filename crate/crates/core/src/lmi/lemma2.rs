use nalgebra::{DMatrix, DVector};

use super::LmiError;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma2Report {
    /// `d_m ∫_{t−d_m}^{t} Żᵀ R Ż ds` by the trapezoid rule.
    pub lhs: f64,
    /// `ζᵀ [[−R, 0, R], [0, −R, R], [R, R, −2R]] ζ`,
    /// `ζ = (Z(t), Z(t−d_m), Z(t−d))`.
    pub rhs: f64,
    /// `−lhs ≤ rhs + 1e−8`.
    pub holds: bool,
}

/// Evaluates the integral bound along a smooth path given by its value and
/// derivative, using `intervals` trapezoid panels.
pub fn lemma2_numeric_check(
    r1: &DMatrix<f64>,
    z: impl Fn(f64) -> DVector<f64>,
    z_dot: impl Fn(f64) -> DVector<f64>,
    t: f64,
    d_m: f64,
    d_of_t: f64,
    intervals: usize,
) -> Result<Lemma2Report, LmiError> {
    if !(d_m >= 0.0 && (0.0..=d_m).contains(&d_of_t)) {
        return Err(LmiError::PathCheck("need 0 <= d(t) <= d_m"));
    }
    if intervals == 0 {
        return Err(LmiError::PathCheck("need at least one quadrature interval"));
    }
    if !linalg::is_symmetric(r1, 1e-12) || !(linalg::lambda_min(r1) > 0.0) {
        return Err(LmiError::PathCheck("R1 must be symmetric positive definite"));
    }
    let h = d_m / intervals as f64;
    let integrand = |s: f64| {
        let v = z_dot(s);
        v.dot(&(r1 * &v))
    };
    let mut integral = 0.5 * (integrand(t - d_m) + integrand(t));
    for k in 1..intervals {
        integral += integrand(t - d_m + k as f64 * h);
    }
    let lhs = d_m * integral * h;
    let a = z(t);
    let b = z(t - d_m);
    let c = z(t - d_of_t);
    let quad = |u: &DVector<f64>| u.dot(&(r1 * u));
    // expanded form of the 3×3 block quadratic
    let rhs = -quad(&(&a - &c)) - quad(&(&b - &c));
    Ok(Lemma2Report { lhs, rhs, holds: -lhs <= rhs + 1e-8 })
}
