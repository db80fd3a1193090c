//! Heterogeneous LTI agents `ẋ = Ax + Bu, y = Cx`, the regulator-equation
//! solvability test, the regulator equations themselves and Hurwitz checks.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;

/// Residual tolerance for accepting user-supplied `(U, W, X)`.
pub const GAIN_RESIDUAL_TOL: f64 = 1e-8;
/// Residual tolerance for solved `(U, W, X)`.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("{name} has shape {got:?}, expected {expected:?}")]
    Dimension { name: &'static str, expected: (usize, usize), got: (usize, usize) },
    #[error("regulator equations have no solution (residual {residual:e}); check the rank condition")]
    NoRegulatorSolution { residual: f64 },
    #[error("gain residual {residual:e} exceeds {tol:e}")]
    GainResidual { residual: f64, tol: f64 },
    #[error("A - BK is not Hurwitz (max real part {margin})")]
    NotHurwitz { margin: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl AgentModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self, PlantError> {
        let n = a.nrows();
        if !a.is_square() || n == 0 {
            return Err(PlantError::Dimension { name: "A", expected: (n, n), got: a.shape() });
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(PlantError::Dimension { name: "B", expected: (n, b.ncols().max(1)), got: b.shape() });
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(PlantError::Dimension { name: "C", expected: (c.nrows().max(1), n), got: c.shape() });
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    /// State dimension `n_i`.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension `p_i`.
    pub fn p(&self) -> usize {
        self.b.ncols()
    }
    /// Output dimension `q`.
    pub fn q(&self) -> usize {
        self.c.nrows()
    }

    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }

    /// `A - BK`.
    pub fn closed_loop(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a - &self.b * k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    pub required: usize,
    pub satisfied: bool,
}

/// `rank [[CB, 0], [-AB, B]] = n + q`, with rank from singular values at
/// relative tolerance 1e-9.
pub fn check_rank_condition(m: &AgentModel) -> RankReport {
    let (n, p, q) = (m.n(), m.p(), m.q());
    let mut blk = DMatrix::zeros(q + n, 2 * p);
    blk.view_mut((0, 0), (q, p)).copy_from(&(&m.c * &m.b));
    blk.view_mut((q, 0), (n, p)).copy_from(&(-(&m.a * &m.b)));
    blk.view_mut((q, p), (n, p)).copy_from(&m.b);
    let rank = linalg::rank(&blk, 1e-9);
    RankReport { rank, required: n + q, satisfied: rank == n + q }
}

/// Frobenius residuals of `BU = AX`, `BW = X`, `CX = I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegulatorResiduals {
    pub bu_ax: f64,
    pub bw_x: f64,
    pub cx_i: f64,
}

impl RegulatorResiduals {
    pub fn max(&self) -> f64 {
        self.bu_ax.max(self.bw_x).max(self.cx_i)
    }
}

pub fn regulator_residuals(
    m: &AgentModel,
    u: &DMatrix<f64>,
    w: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<RegulatorResiduals, PlantError> {
    let (n, p, q) = (m.n(), m.p(), m.q());
    for (name, mat, expected) in [("U", u, (p, q)), ("W", w, (p, q)), ("X", x, (n, q))] {
        if mat.shape() != expected {
            return Err(PlantError::Dimension { name, expected, got: mat.shape() });
        }
    }
    Ok(RegulatorResiduals {
        bu_ax: (&m.b * u - &m.a * x).norm(),
        bw_x: (&m.b * w - x).norm(),
        cx_i: (&m.c * x - DMatrix::identity(q, q)).norm(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorSolution {
    pub u: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub residuals: RegulatorResiduals,
}

/// Minimum-norm solution of the stacked regulator equations in
/// `(vec U, vec W, vec X)`.
pub fn solve_regulator(m: &AgentModel) -> Result<RegulatorSolution, PlantError> {
    let (n, p, q) = (m.n(), m.p(), m.q());
    let iq = DMatrix::<f64>::identity(q, q);
    let in_ = DMatrix::<f64>::identity(n, n);
    let (cu, cw, cx) = (0, p * q, 2 * p * q);
    let unknowns = 2 * p * q + n * q;
    let equations = 2 * n * q + q * q;
    let mut sys = DMatrix::zeros(equations, unknowns);
    let mut rhs = DVector::zeros(equations);
    // (I ⊗ B) vec U - (I ⊗ A) vec X = 0
    sys.view_mut((0, cu), (n * q, p * q)).copy_from(&linalg::kron(&iq, &m.b));
    sys.view_mut((0, cx), (n * q, n * q)).copy_from(&(-linalg::kron(&iq, &m.a)));
    // (I ⊗ B) vec W - vec X = 0
    sys.view_mut((n * q, cw), (n * q, p * q)).copy_from(&linalg::kron(&iq, &m.b));
    sys.view_mut((n * q, cx), (n * q, n * q)).copy_from(&(-linalg::kron(&iq, &in_)));
    // (I ⊗ C) vec X = vec I
    sys.view_mut((2 * n * q, cx), (q * q, n * q)).copy_from(&linalg::kron(&iq, &m.c));
    rhs.rows_mut(2 * n * q, q * q).copy_from(&linalg::vec_of(&iq));

    let sol = linalg::min_norm_solve(&sys, &rhs);
    let u = linalg::unvec(&sol.as_slice()[cu..cu + p * q], p, q);
    let w = linalg::unvec(&sol.as_slice()[cw..cw + p * q], p, q);
    let x = linalg::unvec(&sol.as_slice()[cx..cx + n * q], n, q);
    let residuals = regulator_residuals(m, &u, &w, &x)?;
    if residuals.max() > SOLVE_RESIDUAL_TOL {
        return Err(PlantError::NoRegulatorSolution { residual: residuals.max() });
    }
    Ok(RegulatorSolution { u, w, x, residuals })
}

/// Largest real part among the eigenvalues of a square matrix.
pub fn hurwitz_margin(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Feedback and feedforward gains `(K, U, W, X)` of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub k: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

impl GainSet {
    /// Validates regulator residuals (≤ 1e-8) and that `A - BK` is Hurwitz.
    pub fn new(
        m: &AgentModel,
        k: DMatrix<f64>,
        u: DMatrix<f64>,
        w: DMatrix<f64>,
        x: DMatrix<f64>,
    ) -> Result<Self, PlantError> {
        if k.shape() != (m.p(), m.n()) {
            return Err(PlantError::Dimension { name: "K", expected: (m.p(), m.n()), got: k.shape() });
        }
        let residual = regulator_residuals(m, &u, &w, &x)?.max();
        if residual > GAIN_RESIDUAL_TOL {
            return Err(PlantError::GainResidual { residual, tol: GAIN_RESIDUAL_TOL });
        }
        let margin = hurwitz_margin(&m.closed_loop(&k));
        if !(margin < 0.0) {
            return Err(PlantError::NotHurwitz { margin });
        }
        Ok(Self { k, u, w, x })
    }

    /// Validates `K` and fills `(U, W, X)` from [`solve_regulator`].
    pub fn solved(m: &AgentModel, k: DMatrix<f64>) -> Result<Self, PlantError> {
        let sol = solve_regulator(m)?;
        Self::new(m, k, sol.u, sol.w, sol.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;

    #[test]
    fn rank_condition_on_demo_agents() {
        let agents = demo::agents();
        for (i, m) in agents.iter().enumerate() {
            let r = check_rank_condition(m);
            assert_eq!(r.rank, m.n() + m.q(), "agent {}", i + 1);
            assert!(r.satisfied);
        }
        let agent2 = &agents[1];
        let zero_b = AgentModel::new(agent2.a().clone(), DMatrix::zeros(2, 2), agent2.c().clone()).unwrap();
        let r = check_rank_condition(&zero_b);
        assert!(r.rank <= zero_b.q());
        assert!(!r.satisfied);
    }

    #[test]
    fn identity_plant_regulator() {
        let m = AgentModel::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let sol = solve_regulator(&m).unwrap();
        assert!(sol.u.amax() < 1e-14);
        assert!((sol.w.clone() - DMatrix::identity(2, 2)).amax() < 1e-14);
        assert!((sol.x.clone() - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn reference_gains_have_zero_residual() {
        for (m, g) in demo::agents().iter().zip(demo::reference_gains()) {
            let r = regulator_residuals(m, &g.u, &g.w, &g.x).unwrap();
            assert_eq!(r.max(), 0.0);
        }
    }

    #[test]
    fn solved_gains_meet_tolerance() {
        for m in demo::agents() {
            let sol = solve_regulator(&m).unwrap();
            assert!(sol.residuals.max() <= SOLVE_RESIDUAL_TOL);
        }
    }

    #[test]
    fn unsolvable_regulator_reports_error() {
        // B = 0 forces X = 0, contradicting CX = I.
        let m = AgentModel::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), DMatrix::from_row_slice(1, 2, &[1.0, 0.0]))
            .unwrap();
        assert!(matches!(solve_regulator(&m), Err(PlantError::NoRegulatorSolution { .. })));
    }

    #[test]
    fn hurwitz_margins() {
        let agents = demo::agents();
        let gains = demo::reference_gains();
        let a1 = agents[0].closed_loop(&gains[0].k);
        assert!((a1 - DMatrix::from_diagonal(&DVector::from_vec(vec![-4.0, -5.0]))).amax() < 1e-12);
        assert!((hurwitz_margin(&agents[0].closed_loop(&gains[0].k)) + 4.0).abs() < 1e-12);
        assert!((hurwitz_margin(&agents[1].closed_loop(&gains[1].k)) + 3.0).abs() < 1e-12);
        assert!(hurwitz_margin(&agents[2].closed_loop(&gains[2].k)) < 0.0);
        assert_eq!(hurwitz_margin(&DMatrix::zeros(2, 2)), 0.0);
    }

    #[test]
    fn gain_set_rejects_unstable_feedback() {
        let m = &demo::agents()[0];
        let g = &demo::reference_gains()[0];
        let err = GainSet::new(m, DMatrix::zeros(2, 2), g.u.clone(), g.w.clone(), g.x.clone()).unwrap_err();
        assert!(matches!(err, PlantError::NotHurwitz { .. }));
    }
}
