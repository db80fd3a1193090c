use nalgebra::{DMatrix, DVector};

use super::LmiError;
use crate::graph;
use crate::linalg;
use crate::plant;
use crate::sim::Scenario;

/// Number of block rows in the full matrix: `ξ` plus seven `Nq` blocks.
pub const BLOCK_COUNT: usize = 8;

/// Which form of the test to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Slowly varying delays, `ḋ ≤ ϖ < 1`.
    Theorem1,
    /// Delays varying at any speed: `P3 = Q2 = 0`.
    Theorem2,
    /// No delay: only `P1` enters.
    DelayFree,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Theorem1, Variant::Theorem2, Variant::DelayFree];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Theorem1 => "theorem1",
            Variant::Theorem2 => "theorem2",
            Variant::DelayFree => "delay-free",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Decision matrices that are free in this variant; the rest are zero.
    pub fn active(self) -> &'static [MatrixName] {
        use MatrixName::*;
        match self {
            Variant::Theorem1 => &[P1, P2, P3, P4, Q1, Q2, Q3],
            Variant::Theorem2 => &[P1, P2, P4, Q1, Q3],
            Variant::DelayFree => &[P1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatrixName {
    P1,
    P2,
    P3,
    P4,
    Q1,
    Q2,
    Q3,
}

impl MatrixName {
    pub const ALL: [MatrixName; 7] = [
        MatrixName::P1,
        MatrixName::P2,
        MatrixName::P3,
        MatrixName::P4,
        MatrixName::Q1,
        MatrixName::Q2,
        MatrixName::Q3,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        ["P1", "P2", "P3", "P4", "Q1", "Q2", "Q3"][self.index()]
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label() == s)
    }
}

/// Fixed problem data for one delay bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiData {
    pub a_tilde: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub x: DMatrix<f64>,
    /// Mode Laplacians `L_p` (`N×N`, before the `⊗ I_q` lift).
    pub laplacians: Vec<DMatrix<f64>>,
    pub q: usize,
    pub alpha: f64,
    pub beta: f64,
    pub dbar: f64,
    pub varpi: f64,
    pub l_max: f64,
    /// Positive weights with `πᵀ L_p = 0`.
    pub pi: DVector<f64>,
    pub p_a: DMatrix<f64>,
    pub eps1: f64,
}

/// `P_a` from `P_a Ã + Ãᵀ P_a = −I`, hence `ε₁ = λ_min(I) = 1`.
pub fn fix_pa(a_tilde: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64), LmiError> {
    if !a_tilde.is_square() {
        return Err(LmiError::Dimension { what: "Ã", expected: (a_tilde.nrows(), a_tilde.nrows()), got: a_tilde.shape() });
    }
    let margin = plant::hurwitz_margin(a_tilde);
    if !(margin < 0.0) {
        return Err(LmiError::NotHurwitz { margin });
    }
    let n = a_tilde.nrows();
    let id = DMatrix::identity(n, n);
    let p = linalg::solve_lyapunov(a_tilde, &id).ok_or(LmiError::Lyapunov { residual: f64::INFINITY })?;
    let residual = (&p * a_tilde + a_tilde.transpose() * &p + &id).amax();
    if residual > 1e-9 {
        return Err(LmiError::Lyapunov { residual });
    }
    Ok((p, 1.0))
}

impl LmiData {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a_tilde: DMatrix<f64>,
        c: DMatrix<f64>,
        x: DMatrix<f64>,
        laplacians: Vec<DMatrix<f64>>,
        q: usize,
        alpha: f64,
        beta: f64,
        dbar: f64,
        varpi: f64,
        l_max: f64,
        pi: DVector<f64>,
    ) -> Result<Self, LmiError> {
        let nx = a_tilde.nrows();
        let n_agents = pi.len();
        let m = n_agents * q;
        if c.shape() != (m, nx) {
            return Err(LmiError::Dimension { what: "C", expected: (m, nx), got: c.shape() });
        }
        if x.shape() != (nx, m) {
            return Err(LmiError::Dimension { what: "X", expected: (nx, m), got: x.shape() });
        }
        if laplacians.is_empty() {
            return Err(LmiError::Dimension { what: "mode list", expected: (1, 0), got: (0, 0) });
        }
        for l in &laplacians {
            if l.shape() != (n_agents, n_agents) {
                return Err(LmiError::Dimension { what: "Laplacian", expected: (n_agents, n_agents), got: l.shape() });
            }
        }
        for (name, value) in [("alpha", alpha), ("beta", beta), ("l_max", l_max)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(LmiError::BadParameter { name, value });
            }
        }
        if pi.iter().any(|&p| !(p > 0.0)) {
            return Err(LmiError::BadParameter { name: "pi", value: pi.min() });
        }
        if !(dbar >= 0.0 && dbar.is_finite()) {
            return Err(LmiError::BadDelay(dbar));
        }
        if !(varpi >= 0.0 && varpi.is_finite()) {
            return Err(LmiError::BadRate(varpi));
        }
        let residual = (&c * &x - DMatrix::identity(m, m)).amax();
        if residual > 1e-8 {
            return Err(LmiError::OutputMap { residual });
        }
        let (p_a, eps1) = fix_pa(&a_tilde)?;
        Ok(Self { a_tilde, c, x, laplacians, q, alpha, beta, dbar, varpi, l_max, pi, p_a, eps1 })
    }

    /// Data of a validated scenario, with `π` the left null vector of the
    /// union Laplacian.
    pub fn from_scenario(sc: &Scenario, dbar: f64, varpi: f64) -> Result<Self, LmiError> {
        let c = linalg::block_diag(&sc.agents.iter().map(|m| m.c().clone()).collect::<Vec<_>>());
        let x = linalg::block_diag(&sc.gains.iter().map(|g| g.x.clone()).collect::<Vec<_>>());
        let pi = graph::stationary_weights(&sc.topology)?;
        Self::new(
            sc.a_tilde(),
            c,
            x,
            sc.topology.laplacians(),
            sc.q(),
            sc.params.alpha(),
            sc.params.beta(),
            dbar,
            varpi,
            sc.costs.lipschitz_max(),
            pi,
        )
    }

    pub fn with_dbar(&self, dbar: f64) -> Self {
        Self { dbar, ..self.clone() }
    }

    pub fn n_modes(&self) -> usize {
        self.laplacians.len()
    }

    pub fn n_agents(&self) -> usize {
        self.pi.len()
    }

    /// Size `Nq` of every block after the first.
    pub fn block(&self) -> usize {
        self.n_agents() * self.q
    }

    pub fn nx(&self) -> usize {
        self.a_tilde.nrows()
    }

    pub fn dim(&self, variant: Variant) -> usize {
        match variant {
            Variant::DelayFree => self.nx() + 3 * self.block(),
            _ => self.nx() + 7 * self.block(),
        }
    }

    fn lifted(&self, p: usize) -> DMatrix<f64> {
        linalg::kron(&self.laplacians[p], &DMatrix::identity(self.q, self.q))
    }

    fn pi_lifted(&self) -> DMatrix<f64> {
        linalg::kron(&DMatrix::from_diagonal(&self.pi), &DMatrix::identity(self.q, self.q))
    }
}

/// `P1 … P4, Q1 … Q3`, each `Nq×Nq` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVars {
    mats: [DMatrix<f64>; 7],
}

impl DecisionVars {
    pub fn zeros(m: usize) -> Self {
        Self { mats: std::array::from_fn(|_| DMatrix::zeros(m, m)) }
    }

    pub fn identity(m: usize) -> Self {
        Self { mats: std::array::from_fn(|_| DMatrix::identity(m, m)) }
    }

    pub fn size(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn get(&self, name: MatrixName) -> &DMatrix<f64> {
        &self.mats[name.index()]
    }

    pub fn set(&mut self, name: MatrixName, value: DMatrix<f64>) {
        self.mats[name.index()] = value;
    }

    /// Copy with the matrices outside `variant` zeroed.
    pub fn restricted(&self, variant: Variant) -> Self {
        let mut out = Self::zeros(self.size());
        for &name in variant.active() {
            out.set(name, self.get(name).clone());
        }
        out
    }
}

/// `Variant::Theorem1` matrix for mode `p` over the state
/// `[ξ; w(t); w(t−d̄); w(t−d); ỹ(t); ỹ(t−d̄); ỹ(t−d); F]`.
pub fn assemble_pi(data: &LmiData, vars: &DecisionVars, p: usize) -> Result<DMatrix<f64>, LmiError> {
    if p >= data.n_modes() {
        return Err(LmiError::NoSuchMode { mode: p, modes: data.n_modes() });
    }
    let m = data.block();
    if vars.size() != m {
        return Err(LmiError::Dimension { what: "decision matrix", expected: (m, m), got: (vars.size(), vars.size()) });
    }
    let nx = data.nx();
    let id = DMatrix::<f64>::identity(m, m);
    let [p1, p2, p3, p4, q1, q2, q3] = &vars.mats;
    let at = &data.a_tilde;
    let d2 = data.dbar * data.dbar;
    let w = data.varpi;
    let lt = data.lifted(p);
    let bl = &lt * data.beta;
    let abl = &lt * (data.alpha * data.beta);
    let pd = data.pi_lifted();
    let ca = &data.c * at;
    let cat_q3 = ca.transpose() * q3;
    let norm_a = linalg::spectral_norm(at);
    let pd_c = linalg::spectral_norm(&(&pd * &data.c));

    let mut blocks: Vec<Vec<Option<DMatrix<f64>>>> = vec![vec![None; BLOCK_COUNT]; BLOCK_COUNT];
    blocks[0][0] = Some(
        &data.p_a * at
            + at.transpose() * &data.p_a
            + DMatrix::identity(nx, nx) * (norm_a * norm_a / (4.0 * data.eps1))
            + &cat_q3 * &ca * d2,
    );
    blocks[0][3] = Some(-(&cat_q3 * &bl) * d2);
    blocks[0][6] = Some(-(&cat_q3 * &abl) * d2);
    blocks[0][7] = Some(-&cat_q3 * d2);
    blocks[1][1] = Some(p1 + p2 - p3);
    blocks[1][3] = Some(-(p1 * &bl) + p3);
    blocks[1][7] = Some(-p1);
    blocks[2][2] = Some(-p1 - p3);
    blocks[2][3] = Some(p3.clone());
    blocks[3][3] = Some(
        -p3 * (1.0 - w) + bl.transpose() * p4 * &bl * d2 - p4 * 2.0 + bl.transpose() * q3 * &bl * d2,
    );
    blocks[3][4] = Some(&pd * (-&bl) * 0.5);
    blocks[3][6] = Some((-&bl).transpose() * q3 * &abl * d2);
    blocks[3][7] = Some(bl.transpose() * p4 * d2 + bl.transpose() * q3 * d2);
    blocks[4][4] = Some(q1 + q2 + &id * data.l_max - q3 + &id * (data.eps1 * pd_c * pd_c));
    blocks[4][6] = Some(q3 + &pd * (-&abl));
    blocks[4][7] = Some(-&pd);
    blocks[5][5] = Some(-q3 - q1);
    blocks[5][6] = Some(q3.clone());
    blocks[6][6] = Some(-q2 * (1.0 - w) - q3 * 2.0 + abl.transpose() * q3 * &abl * d2);
    blocks[6][7] = Some(abl.transpose() * q3 * (0.5 * d2));
    blocks[7][7] = Some(-&id + p4 * d2 + q3 * d2);

    let sizes: Vec<usize> = std::iter::once(nx).chain(std::iter::repeat_n(m, 7)).collect();
    let offsets: Vec<usize> = sizes.iter().scan(0, |acc, s| Some(std::mem::replace(acc, *acc + s))).collect();
    let dim = nx + 7 * m;
    let mut out = DMatrix::zeros(dim, dim);
    for i in 0..BLOCK_COUNT {
        for j in i..BLOCK_COUNT {
            if let Some(b) = &blocks[i][j] {
                out.view_mut((offsets[i], offsets[j]), (sizes[i], sizes[j])).copy_from(b);
                if i != j {
                    out.view_mut((offsets[j], offsets[i]), (sizes[j], sizes[i])).copy_from(&b.transpose());
                }
            }
        }
    }
    Ok(linalg::sym(&out))
}

/// Variant matrix for mode `p`. `Theorem2` zeroes `P3` and `Q2`; the
/// delay-free form compresses the zero-delay matrix onto `[ξ; w; ỹ; F]`.
pub fn assemble_variant(
    data: &LmiData,
    vars: &DecisionVars,
    p: usize,
    variant: Variant,
) -> Result<DMatrix<f64>, LmiError> {
    match variant {
        Variant::Theorem1 => assemble_pi(data, vars, p),
        Variant::Theorem2 => assemble_pi(data, &vars.restricted(variant), p),
        Variant::DelayFree => {
            let full = assemble_pi(&data.with_dbar(0.0), &vars.restricted(variant), p)?;
            let e = delay_free_embedding(data.nx(), data.block());
            Ok(linalg::sym(&(e.transpose() * full * e)))
        }
    }
}

/// Maps `[ξ; w; ỹ; F]` to `[ξ; w; w; w; ỹ; ỹ; ỹ; F]`.
fn delay_free_embedding(nx: usize, m: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(nx + 7 * m, nx + 3 * m);
    e.view_mut((0, 0), (nx, nx)).fill_with_identity();
    let targets = [(1, 1), (2, 1), (3, 1), (4, 2), (5, 2), (6, 2), (7, 3)];
    for (row_blk, col_blk) in targets {
        e.view_mut((nx + (row_blk - 1) * m, nx + (col_blk - 1) * m), (m, m)).fill_with_identity();
    }
    e
}

/// Unit direction with every `ỹ` block equal to the consensus vector and
/// all other blocks zero, together with a lower bound on `uᵀΠ_p u` that
/// holds for every choice of decision matrices and every mode.
///
/// Along this direction the Laplacian terms vanish, the `Q1` and `Q3`
/// contributions cancel and `Q2` enters with weight `ϖ ≥ 0`, leaving
/// `l_max + ε₁‖(diag π ⊗ I)C‖²` per unit of the repeated block.
pub fn consensus_witness(data: &LmiData, variant: Variant) -> (DVector<f64>, f64) {
    let (nx, m) = (data.nx(), data.block());
    let copies: &[usize] = match variant {
        Variant::DelayFree => &[2],
        _ => &[4, 5, 6],
    };
    let mut u: DVector<f64> = DVector::zeros(data.dim(variant));
    let v = DVector::from_fn(m, |r, _| if r % data.q == 0 { 1.0 } else { 0.0 });
    for &blk in copies {
        u.rows_mut(nx + (blk - 1) * m, m).copy_from(&v);
    }
    let scale = u.norm_squared();
    u /= scale.sqrt();
    let pd_c = linalg::spectral_norm(&(data.pi_lifted() * &data.c));
    let per_block = (data.l_max + data.eps1 * pd_c * pd_c) * v.norm_squared();
    (u, per_block / scale)
}
