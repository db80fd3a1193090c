//! Local strongly convex costs and the centralized optimum.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("Hessian must be a nonempty square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("Hessian is not symmetric")]
    NotSymmetric,
    #[error("Hessian is not positive definite (min eigenvalue {min_eig})")]
    NotStronglyConvex { min_eig: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("cost set is empty")]
    Empty,
}

/// Interface a local objective exposes to the protocol and the analysis.
pub trait CostFunction {
    fn dim(&self) -> usize;
    fn value(&self, theta: &DVector<f64>) -> f64;
    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64>;
    /// Global Lipschitz constant of the gradient.
    fn lipschitz_constant(&self) -> f64;
}

/// `f(θ) = ½θᵀHθ + gᵀθ + c` with `H` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    h: DMatrix<f64>,
    g: DVector<f64>,
    c: f64,
    lipschitz: f64,
}

impl QuadraticCost {
    pub fn new(h: DMatrix<f64>, g: DVector<f64>, c: f64) -> Result<Self, ObjectiveError> {
        let (rows, cols) = h.shape();
        if rows != cols || rows == 0 {
            return Err(ObjectiveError::NotSquare { rows, cols });
        }
        if g.len() != rows {
            return Err(ObjectiveError::Dimension { expected: rows, got: g.len() });
        }
        if !linalg::is_symmetric(&h, 1e-12) {
            return Err(ObjectiveError::NotSymmetric);
        }
        let eig = linalg::sym_eigenvalues(&h);
        if !(eig[0] > 0.0) {
            return Err(ObjectiveError::NotStronglyConvex { min_eig: eig[0] });
        }
        let lipschitz = *eig.last().unwrap();
        Ok(Self { h, g, c, lipschitz })
    }

    /// Scalar cost `½hθ² + gθ + c`.
    pub fn scalar(h: f64, g: f64, c: f64) -> Result<Self, ObjectiveError> {
        Self::new(DMatrix::from_element(1, 1, h), DVector::from_element(1, g), c)
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.h
    }
    pub fn linear(&self) -> &DVector<f64> {
        &self.g
    }
    pub fn offset(&self) -> f64 {
        self.c
    }

    pub fn evaluate_with_gradient(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>), ObjectiveError> {
        if theta.len() != self.dim() {
            return Err(ObjectiveError::Dimension { expected: self.dim(), got: theta.len() });
        }
        Ok((self.value(theta), self.gradient(theta)))
    }
}

impl CostFunction for QuadraticCost {
    fn dim(&self) -> usize {
        self.g.len()
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        0.5 * theta.dot(&(&self.h * theta)) + self.g.dot(theta) + self.c
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.h * theta + &self.g
    }

    fn lipschitz_constant(&self) -> f64 {
        self.lipschitz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSet {
    costs: Vec<QuadraticCost>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub theta: DVector<f64>,
    pub value: f64,
}

impl CostSet {
    pub fn new(costs: Vec<QuadraticCost>) -> Result<Self, ObjectiveError> {
        let q = costs.first().ok_or(ObjectiveError::Empty)?.dim();
        if let Some(bad) = costs.iter().find(|f| f.dim() != q) {
            return Err(ObjectiveError::Dimension { expected: q, got: bad.dim() });
        }
        Ok(Self { costs })
    }

    pub fn costs(&self) -> &[QuadraticCost] {
        &self.costs
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.costs[0].dim()
    }

    /// `l_max = max_i λ_max(H_i)`.
    pub fn lipschitz_max(&self) -> f64 {
        self.costs.iter().map(|f| f.lipschitz_constant()).fold(0.0, f64::max)
    }

    /// `F(θ) = Σ_i f_i(θ)`.
    pub fn total(&self, theta: &DVector<f64>) -> f64 {
        self.costs.iter().map(|f| f.value(theta)).sum()
    }

    pub fn total_gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.costs
            .iter()
            .fold(DVector::zeros(self.dim()), |acc, f| acc + f.gradient(theta))
    }

    /// `θ* = (Σ H_i)⁻¹(-Σ g_i)` and `F(θ*)`.
    pub fn global_optimum(&self) -> Optimum {
        let q = self.dim();
        let (h, g) = self.costs.iter().fold(
            (DMatrix::zeros(q, q), DVector::zeros(q)),
            |(h, g), f| (h + &f.h, g + &f.g),
        );
        let theta = h
            .cholesky()
            .expect("sum of positive definite Hessians is positive definite")
            .solve(&(-g));
        let value = self.total(&theta);
        Optimum { theta, value }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;

    fn s(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn evaluate_examples() {
        let f2 = QuadraticCost::scalar(2.0, -8.0, 16.0).unwrap();
        assert_eq!(f2.evaluate_with_gradient(&s(4.0)).unwrap(), (0.0, s(0.0)));

        let f1 = QuadraticCost::scalar(1.0, 0.0, -1.0).unwrap();
        let (v, g) = f1.evaluate_with_gradient(&s(2.8)).unwrap();
        assert!((v - 2.92).abs() < 1e-12);
        assert!((g[0] - 2.8).abs() < 1e-15);

        let total = demo::costs().total(&s(2.8));
        assert!((total - 4.4).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = QuadraticCost::scalar(1.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            f.evaluate_with_gradient(&DVector::zeros(2)),
            Err(ObjectiveError::Dimension { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn rejects_non_convex() {
        assert!(matches!(QuadraticCost::scalar(0.0, 1.0, 0.0), Err(ObjectiveError::NotStronglyConvex { .. })));
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert_eq!(QuadraticCost::new(h, DVector::zeros(2), 0.0), Err(ObjectiveError::NotSymmetric));
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(demo::costs().lipschitz_max(), 2.0);
        let single = CostSet::new(vec![QuadraticCost::scalar(1.0, 0.0, 0.0).unwrap()]).unwrap();
        assert_eq!(single.lipschitz_max(), 1.0);
        let h5 = DMatrix::identity(2, 2) * 5.0;
        let twin = QuadraticCost::new(h5, DVector::zeros(2), 0.0).unwrap();
        let set = CostSet::new(vec![twin.clone(), twin]).unwrap();
        assert!((set.lipschitz_max() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn optimum_examples() {
        let opt = demo::costs().global_optimum();
        assert!((opt.theta[0] - 2.8).abs() < 1e-12);
        assert!((opt.value - 4.4).abs() < 1e-12);

        // ½(θ-a)ᵀ(θ-a): H = I, g = -a, c = ½aᵀa
        let a = DVector::from_vec(vec![1.5, -2.0]);
        let f = QuadraticCost::new(DMatrix::identity(2, 2), -a.clone(), 0.5 * a.norm_squared()).unwrap();
        let opt = CostSet::new(vec![f]).unwrap().global_optimum();
        assert!((opt.theta - a).amax() < 1e-14);

        // (θ-1)² + (θ-3)²
        let set = CostSet::new(vec![
            QuadraticCost::scalar(2.0, -2.0, 1.0).unwrap(),
            QuadraticCost::scalar(2.0, -6.0, 9.0).unwrap(),
        ])
        .unwrap();
        let opt = set.global_optimum();
        assert!((opt.theta[0] - 2.0).abs() < 1e-14);
        assert!((opt.value - 2.0).abs() < 1e-14);
    }
}
