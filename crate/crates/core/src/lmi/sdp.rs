//! Phase-I barrier method for strict feasibility of affine LMIs.
//!
//! Given blocks `G_j(x) = F_j0 + Σ_k x_k F_jk`, minimizes `t` subject to
//! `G_j(x) ≼ tI` by following the central path of
//! `c·t − Σ_j log det(tI − G_j(x))`. Any iterate with `t < 0` is strictly
//! feasible. At a central point the optimum is at least `t − ν/c` with
//! `ν = Σ_j dim G_j`, so `t − ν/c > 0` proves infeasibility.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// One affine symmetric block.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBlock {
    pub constant: DMatrix<f64>,
    /// `(variable index, coefficient matrix)`, coefficients symmetric.
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl AffineBlock {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut g = self.constant.clone();
        for (k, f) in &self.terms {
            g += f * x[*k];
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub n_vars: usize,
    pub blocks: Vec<AffineBlock>,
}

impl LmiProblem {
    /// `max_j λ_max(G_j(x))`.
    pub fn max_eigenvalue(&self, x: &DVector<f64>) -> f64 {
        self.blocks
            .iter()
            .map(|b| crate::linalg::lambda_max(&b.eval(x)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn barrier_order(&self) -> f64 {
        self.blocks.iter().map(|b| b.dim()).sum::<usize>() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    /// Maximum number of Newton steps over the whole run.
    pub max_newton: usize,
    /// Barrier weight growth per outer iteration.
    pub growth: f64,
    /// Newton decrement (squared, halved) below which a point counts as central.
    pub centering_tol: f64,
    /// Target for `ν/c`; below it the run stops undecided if `t` is still
    /// within this distance of zero.
    pub gap_tol: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { max_newton: 4000, growth: 8.0, centering_tol: 1e-9, gap_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SdpOutcome {
    /// `x` with `max_j λ_max(G_j(x)) = t < 0`.
    Feasible { x: DVector<f64>, t: f64, newton_steps: usize },
    /// The optimal `t` is at least `lower_bound > 0`.
    Infeasible { x: DVector<f64>, t: f64, lower_bound: f64, newton_steps: usize },
    /// Neither decided before the step budget or the gap tolerance.
    Undecided { x: DVector<f64>, t: f64, lower_bound: f64, newton_steps: usize },
}

impl SdpOutcome {
    pub fn best_t(&self) -> f64 {
        match self {
            SdpOutcome::Feasible { t, .. } | SdpOutcome::Infeasible { t, .. } | SdpOutcome::Undecided { t, .. } => *t,
        }
    }
}

struct Barrier<'a> {
    problem: &'a LmiProblem,
}

impl Barrier<'_> {
    /// Cholesky factors of `tI − G_j(x)`, or `None` outside the domain.
    fn factors(&self, x: &DVector<f64>, t: f64) -> Option<Vec<Cholesky<f64, Dyn>>> {
        self.problem
            .blocks
            .iter()
            .map(|b| {
                let mut s = -b.eval(x);
                for i in 0..s.nrows() {
                    s[(i, i)] += t;
                }
                Cholesky::new(s)
            })
            .collect()
    }

    fn value(&self, x: &DVector<f64>, t: f64, c: f64) -> Option<f64> {
        let chols = self.factors(x, t)?;
        let logdet: f64 = chols
            .iter()
            .map(|ch| 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
            .sum();
        Some(c * t - logdet)
    }

    /// Gradient and Hessian in `(x, t)`, `t` last.
    fn derivatives(&self, chols: &[Cholesky<f64, Dyn>], c: f64) -> (DVector<f64>, DMatrix<f64>) {
        let nv = self.problem.n_vars;
        let mut grad = DVector::zeros(nv + 1);
        let mut hess = DMatrix::zeros(nv + 1, nv + 1);
        grad[nv] = c;
        for (block, ch) in self.problem.blocks.iter().zip(chols) {
            // S = tI − G, ∂S/∂x_k = −F_k, ∂S/∂t = I; M = L⁻¹ (∂S) L⁻ᵀ
            let l = ch.l();
            let whiten = |a: &DMatrix<f64>| -> DMatrix<f64> {
                let y = l.solve_lower_triangular(a).expect("nonsingular factor");
                l.solve_lower_triangular(&y.transpose()).expect("nonsingular factor").transpose()
            };
            let n = block.dim();
            let mut mats: Vec<(usize, DMatrix<f64>)> =
                block.terms.iter().map(|(k, f)| (*k, -whiten(f))).collect();
            mats.push((nv, whiten(&DMatrix::identity(n, n))));
            for (a, (ka, ma)) in mats.iter().enumerate() {
                grad[*ka] -= ma.trace();
                for (kb, mb) in &mats[a..] {
                    let v = ma.dot(mb);
                    hess[(*ka, *kb)] += v;
                    if ka != kb {
                        hess[(*kb, *ka)] += v;
                    }
                }
            }
        }
        (grad, hess)
    }
}

/// Searches for `x` with every block negative definite, starting from `x0`.
pub fn find_strictly_feasible(problem: &LmiProblem, x0: &DVector<f64>, opts: &SdpOptions) -> SdpOutcome {
    let barrier = Barrier { problem };
    let nu = problem.barrier_order();
    let mut x = x0.clone();
    let mut t = problem.max_eigenvalue(&x).max(0.0) + 1.0;
    let mut c = 1.0;
    let mut steps = 0;
    let mut lower_bound = f64::NEG_INFINITY;
    loop {
        // centering
        loop {
            let t_now = problem.max_eigenvalue(&x);
            if t_now < 0.0 {
                return SdpOutcome::Feasible { x, t: t_now, newton_steps: steps };
            }
            if steps >= opts.max_newton {
                return SdpOutcome::Undecided { t: t_now, x, lower_bound, newton_steps: steps };
            }
            let chols = barrier.factors(&x, t).expect("iterates stay in the domain");
            let (grad, hess) = barrier.derivatives(&chols, c);
            let dir = match hess.clone().cholesky() {
                Some(h) => -h.solve(&grad),
                None => -hess.lu().solve(&grad).unwrap_or_else(|| grad.clone()),
            };
            let decrement = -grad.dot(&dir);
            steps += 1;
            if decrement / 2.0 <= opts.centering_tol {
                break;
            }
            let f0 = barrier.value(&x, t, c).expect("current point in domain");
            let dx = dir.rows(0, problem.n_vars).into_owned();
            let dt = dir[problem.n_vars];
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-12 {
                let xn = &x + &dx * step;
                let tn = t + dt * step;
                if let Some(f1) = barrier.value(&xn, tn, c) {
                    if f1 <= f0 - 0.25 * step * decrement {
                        x = xn;
                        t = tn;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        // central point: optimum ≥ t − ν/c
        let bound = t - nu / c;
        lower_bound = lower_bound.max(bound);
        let t_now = problem.max_eigenvalue(&x);
        if lower_bound > 0.0 {
            return SdpOutcome::Infeasible { x, t: t_now, lower_bound, newton_steps: steps };
        }
        if nu / c < opts.gap_tol {
            return SdpOutcome::Undecided { x, t: t_now, lower_bound, newton_steps: steps };
        }
        c *= opts.growth;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Lyapunov LMI in a 2×2 symmetric `P`: `I − P ≺ 0`, `AᵀP + PA ≺ 0`, `P ≼ 100 I`.
    fn lyapunov_problem(a: &DMatrix<f64>) -> LmiProblem {
        let basis = [
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
        ];
        let pos = AffineBlock {
            constant: DMatrix::identity(2, 2),
            terms: basis.iter().enumerate().map(|(k, e)| (k, -e)).collect(),
        };
        let lyap = AffineBlock {
            constant: DMatrix::zeros(2, 2),
            terms: basis.iter().enumerate().map(|(k, e)| (k, a.transpose() * e + e * a)).collect(),
        };
        let cap = AffineBlock {
            constant: -DMatrix::identity(2, 2) * 100.0,
            terms: basis.iter().cloned().enumerate().collect(),
        };
        LmiProblem { n_vars: 3, blocks: vec![pos, lyap, cap] }
    }

    #[test]
    fn stable_matrix_is_certified() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 3.0, 0.0, -2.0]);
        let prob = lyapunov_problem(&a);
        match find_strictly_feasible(&prob, &DVector::zeros(3), &SdpOptions::default()) {
            SdpOutcome::Feasible { x, t, .. } => {
                assert!(t < 0.0);
                assert!(prob.max_eigenvalue(&x) < 0.0);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn unstable_matrix_is_refuted() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, -2.0]);
        let prob = lyapunov_problem(&a);
        match find_strictly_feasible(&prob, &DVector::zeros(3), &SdpOptions::default()) {
            SdpOutcome::Infeasible { lower_bound, .. } => assert!(lower_bound > 0.0),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn scalar_interval() {
        // x − 1 ≺ 0 and −x − 2 ≺ 0 is feasible; x − 1 ≺ 0 and 2 − x ≺ 0 is not.
        let blk = |c: f64, a: f64| AffineBlock {
            constant: DMatrix::from_element(1, 1, c),
            terms: vec![(0, DMatrix::from_element(1, 1, a))],
        };
        let ok = LmiProblem { n_vars: 1, blocks: vec![blk(-1.0, 1.0), blk(-2.0, -1.0)] };
        assert!(matches!(
            find_strictly_feasible(&ok, &DVector::from_element(1, 5.0), &SdpOptions::default()),
            SdpOutcome::Feasible { .. }
        ));
        let bad = LmiProblem { n_vars: 1, blocks: vec![blk(-1.0, 1.0), blk(2.0, -1.0)] };
        match find_strictly_feasible(&bad, &DVector::zeros(1), &SdpOptions::default()) {
            // optimum t = 0.5 at x = 1.5
            SdpOutcome::Infeasible { lower_bound, .. } => assert!(lower_bound > 0.0 && lower_bound <= 0.5 + 1e-9),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }
}
