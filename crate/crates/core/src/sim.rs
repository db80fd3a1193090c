//! Fixed-step RK4 integration of the delayed closed loop with a
//! Markov-switched topology.
//!
//! The stacked state is `[x₁ … x_N, η₁ … η_N, z₁ … z_N]`. Delayed values are
//! read from a history of accepted steps by cubic Hermite interpolation, at
//! every stage time, so the scheme keeps fourth order when the delays are
//! smooth. The mode is held at its value at the start of each step.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::graph::SwitchingTopology;
use crate::linalg;
use crate::markov::{self, GeneratorMatrix, MarkovError, ModePath};
use crate::objective::{CostFunction, CostSet};
use crate::plant::{self, AgentModel, GainSet, PlantError};
use crate::protocol::{self, AgentState, DelayedSample, ProtocolError, ProtocolParams};

/// States with a larger Euclidean norm count as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{what}: expected {expected}, got {got}")]
    Count { what: &'static str, expected: usize, got: usize },
    #[error("agent {agent}: {what} has dimension {got}, expected {expected}")]
    Dimension { agent: usize, what: &'static str, expected: usize, got: usize },
    #[error("agent {agent}: {source}")]
    Agent { agent: usize, source: PlantError },
    #[error("agent {agent}: rank condition fails (rank {rank}, need {required})")]
    RankCondition { agent: usize, rank: usize, required: usize },
    #[error("agent {agent}: delay bound {dbar} must be finite and nonnegative")]
    BadDelay { agent: usize, dbar: f64 },
    #[error("sinusoidal delay frequency must be finite and nonnegative, got {0}")]
    BadFrequency(f64),
    #[error("step {dt} and horizon {horizon} must be positive and finite")]
    BadGrid { dt: f64, horizon: f64 },
    #[error("step {dt} exceeds one tenth of the smallest nonzero delay bound ({limit})")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("history underflow at lookback time {time}")]
    HistoryUnderflow { time: f64 },
    #[error("state diverged at t = {time}")]
    Divergence { time: f64 },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayKind {
    Constant,
    /// `dᵢ(t) = (d̄ᵢ/2)(1 + sin ωt)`.
    Sinusoidal { omega: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelaySpec {
    pub kind: DelayKind,
    pub dbar: Vec<f64>,
}

impl DelaySpec {
    pub fn constant(dbar: Vec<f64>) -> Self {
        Self { kind: DelayKind::Constant, dbar }
    }

    pub fn sinusoidal(dbar: Vec<f64>, omega: f64) -> Self {
        Self { kind: DelayKind::Sinusoidal { omega }, dbar }
    }

    /// Delay of agent `i`'s received data at time `t`.
    pub fn delay(&self, i: usize, t: f64) -> f64 {
        match self.kind {
            DelayKind::Constant => self.dbar[i],
            DelayKind::Sinusoidal { omega } => 0.5 * self.dbar[i] * (1.0 + (omega * t).sin()),
        }
    }

    pub fn dbar_max(&self) -> f64 {
        self.dbar.iter().cloned().fold(0.0, f64::max)
    }

    /// Bound `ϖ` on `ḋᵢ(t)` over all agents.
    pub fn rate_bound(&self) -> f64 {
        match self.kind {
            DelayKind::Constant => 0.0,
            DelayKind::Sinusoidal { omega } => 0.5 * omega * self.dbar_max(),
        }
    }

    fn validate(&self, n_agents: usize) -> Result<(), SimError> {
        if self.dbar.len() != n_agents {
            return Err(SimError::Count { what: "delay bounds", expected: n_agents, got: self.dbar.len() });
        }
        for (agent, &dbar) in self.dbar.iter().enumerate() {
            if !(dbar >= 0.0 && dbar.is_finite()) {
                return Err(SimError::BadDelay { agent, dbar });
            }
        }
        if let DelayKind::Sinusoidal { omega } = self.kind {
            if !(omega >= 0.0 && omega.is_finite()) {
                return Err(SimError::BadFrequency(omega));
            }
        }
        Ok(())
    }
}

/// Everything needed for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub agents: Vec<AgentModel>,
    pub gains: Vec<GainSet>,
    pub costs: CostSet,
    pub topology: SwitchingTopology,
    pub generator: GeneratorMatrix,
    pub initial_distribution: Vec<f64>,
    pub params: ProtocolParams,
    pub delay: DelaySpec,
    pub x0: Vec<DVector<f64>>,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Shared output dimension.
    pub fn q(&self) -> usize {
        self.agents[0].q()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.agents.len();
        if n == 0 {
            return Err(SimError::Count { what: "agents", expected: 1, got: 0 });
        }
        let counts = [
            ("gain sets", self.gains.len()),
            ("costs", self.costs.len()),
            ("topology agents", self.topology.n_agents()),
            ("initial states", self.x0.len()),
        ];
        for (what, got) in counts {
            if got != n {
                return Err(SimError::Count { what, expected: n, got });
            }
        }
        let modes = self.topology.n_modes();
        if self.generator.n_states() != modes {
            return Err(SimError::Count { what: "generator states", expected: modes, got: self.generator.n_states() });
        }
        if self.initial_distribution.len() != modes {
            return Err(SimError::Count {
                what: "initial distribution entries",
                expected: modes,
                got: self.initial_distribution.len(),
            });
        }
        markov::normalize_distribution(&self.initial_distribution)?;
        let q = self.q();
        for (agent, m) in self.agents.iter().enumerate() {
            if m.q() != q {
                return Err(SimError::Dimension { agent, what: "output", expected: q, got: m.q() });
            }
            if self.costs.costs()[agent].dim() != q {
                return Err(SimError::Dimension { agent, what: "cost", expected: q, got: self.costs.costs()[agent].dim() });
            }
            if self.x0[agent].len() != m.n() {
                return Err(SimError::Dimension { agent, what: "initial state", expected: m.n(), got: self.x0[agent].len() });
            }
            let rank = plant::check_rank_condition(m);
            if !rank.satisfied {
                return Err(SimError::RankCondition { agent, rank: rank.rank, required: rank.required });
            }
            let g = &self.gains[agent];
            GainSet::new(m, g.k.clone(), g.u.clone(), g.w.clone(), g.x.clone())
                .map_err(|source| SimError::Agent { agent, source })?;
        }
        self.delay.validate(n)?;
        if !(self.dt > 0.0 && self.dt.is_finite() && self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::BadGrid { dt: self.dt, horizon: self.horizon });
        }
        let dmin = self.delay.dbar.iter().cloned().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);
        if dmin.is_finite() && self.dt > dmin / 10.0 * (1.0 + 1e-12) {
            return Err(SimError::StepTooLarge { dt: self.dt, limit: dmin / 10.0 });
        }
        Ok(())
    }

    /// Block-diagonal `Ã = diag(Aᵢ − BᵢKᵢ)`.
    pub fn a_tilde(&self) -> DMatrix<f64> {
        let blocks: Vec<_> = self.agents.iter().zip(&self.gains).map(|(m, g)| m.closed_loop(&g.k)).collect();
        linalg::block_diag(&blocks)
    }
}

/// Offsets into the stacked state and the per-agent output maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    x_off: Vec<usize>,
    n: Vec<usize>,
    p: Vec<usize>,
    q: usize,
    c: Vec<DMatrix<f64>>,
    x_map: Vec<DMatrix<f64>>,
}

impl Layout {
    fn new(sc: &Scenario) -> Self {
        let n: Vec<usize> = sc.agents.iter().map(|m| m.n()).collect();
        let mut x_off = vec![0];
        for ni in &n {
            x_off.push(x_off.last().unwrap() + ni);
        }
        Self {
            x_off,
            n,
            p: sc.agents.iter().map(|m| m.p()).collect(),
            q: sc.q(),
            c: sc.agents.iter().map(|m| m.c().clone()).collect(),
            x_map: sc.gains.iter().map(|g| g.x.clone()).collect(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n.len()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    fn total_n(&self) -> usize {
        *self.x_off.last().unwrap()
    }

    pub fn state_len(&self) -> usize {
        self.total_n() + 2 * self.n_agents() * self.q
    }

    fn x<'a>(&self, s: &'a DVector<f64>, i: usize) -> nalgebra::DVectorView<'a, f64> {
        s.rows(self.x_off[i], self.n[i])
    }

    fn eta<'a>(&self, s: &'a DVector<f64>, i: usize) -> nalgebra::DVectorView<'a, f64> {
        s.rows(self.total_n() + i * self.q, self.q)
    }

    fn z<'a>(&self, s: &'a DVector<f64>, i: usize) -> nalgebra::DVectorView<'a, f64> {
        s.rows(self.total_n() + (self.n_agents() + i) * self.q, self.q)
    }

    fn y(&self, s: &DVector<f64>, i: usize) -> DVector<f64> {
        &self.c[i] * self.x(s, i)
    }

    fn xi(&self, s: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.total_n());
        for i in 0..self.n_agents() {
            let xi = self.x(s, i) - &self.x_map[i] * self.eta(s, i);
            out.rows_mut(self.x_off[i], self.n[i]).copy_from(&xi);
        }
        out
    }

    fn agent_state(&self, s: &DVector<f64>, i: usize) -> AgentState {
        AgentState { x: self.x(s, i).into_owned(), eta: self.eta(s, i).into_owned(), z: self.z(s, i).into_owned() }
    }

    fn sample(&self, s: &DVector<f64>, i: usize) -> DelayedSample {
        DelayedSample { eta: self.eta(s, i).into_owned(), z: self.z(s, i).into_owned(), y: self.y(s, i) }
    }

    fn input_len(&self) -> usize {
        self.p.iter().sum::<usize>() + self.n_agents() * self.q
    }
}

/// Past accepted steps `(tₖ, sₖ, ṡₖ)` covering at least `[t − d̄, t]`.
/// Before time zero the history is the constant initial state.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    initial: DVector<f64>,
    times: VecDeque<f64>,
    states: VecDeque<DVector<f64>>,
    derivs: VecDeque<Option<DVector<f64>>>,
    span: f64,
}

impl HistoryBuffer {
    pub fn new(initial: DVector<f64>, span: f64) -> Self {
        Self { initial, times: VecDeque::new(), states: VecDeque::new(), derivs: VecDeque::new(), span }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Appends the state at `t`; its derivative is attached later.
    pub fn push_state(&mut self, t: f64, s: DVector<f64>) {
        self.times.push_back(t);
        self.states.push_back(s);
        self.derivs.push_back(None);
        while self.times.len() > 2 && self.times[1] < t - self.span {
            self.times.pop_front();
            self.states.pop_front();
            self.derivs.pop_front();
        }
    }

    pub fn set_last_derivative(&mut self, f: DVector<f64>) {
        if let Some(last) = self.derivs.back_mut() {
            *last = Some(f);
        }
    }

    /// State at `tau`; beyond the newest sample, extrapolates along its slope.
    pub fn lookup(&self, tau: f64) -> Result<DVector<f64>, SimError> {
        if tau <= 0.0 {
            return Ok(self.initial.clone());
        }
        let first = *self.times.front().ok_or(SimError::HistoryUnderflow { time: tau })?;
        if tau < first {
            return Err(SimError::HistoryUnderflow { time: tau });
        }
        let k = self.times.partition_point(|&t| t <= tau) - 1;
        let (t0, s0) = (self.times[k], &self.states[k]);
        if k + 1 == self.times.len() {
            return Ok(match &self.derivs[k] {
                Some(f0) => s0 + f0 * (tau - t0),
                None => s0.clone(),
            });
        }
        let (t1, s1) = (self.times[k + 1], &self.states[k + 1]);
        let h = t1 - t0;
        let th = (tau - t0) / h;
        Ok(match (&self.derivs[k], &self.derivs[k + 1]) {
            (Some(f0), Some(f1)) => {
                let th2 = th * th;
                let th3 = th2 * th;
                s0 * (2.0 * th3 - 3.0 * th2 + 1.0)
                    + f0 * (h * (th3 - 2.0 * th2 + th))
                    + s1 * (-2.0 * th3 + 3.0 * th2)
                    + f1 * (h * (th3 - th2))
            }
            // newest interval before its end slope is known
            (Some(f0), None) => s0 + f0 * (h * th) + (s1 - s0 - f0 * h) * (th * th),
            _ => s0 * (1.0 - th) + s1 * th,
        })
    }
}

/// Recorded run on the uniform grid `tₖ = k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    /// 0-based mode active on `[tₖ, tₖ₊₁)`.
    pub modes: Vec<usize>,
    pub states: Vec<DVector<f64>>,
    /// `[u₁ … u_N, v₁ … v_N]` at each grid point.
    pub inputs: Vec<DVector<f64>>,
    pub mode_path: ModePath,
    layout: Layout,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.layout.n_agents()
    }

    pub fn q(&self) -> usize {
        self.layout.q
    }

    pub fn x(&self, k: usize, i: usize) -> DVector<f64> {
        self.layout.x(&self.states[k], i).into_owned()
    }

    pub fn eta(&self, k: usize, i: usize) -> DVector<f64> {
        self.layout.eta(&self.states[k], i).into_owned()
    }

    pub fn z(&self, k: usize, i: usize) -> DVector<f64> {
        self.layout.z(&self.states[k], i).into_owned()
    }

    pub fn y(&self, k: usize, i: usize) -> DVector<f64> {
        self.layout.y(&self.states[k], i)
    }

    pub fn u(&self, k: usize, i: usize) -> DVector<f64> {
        let off: usize = self.layout.p[..i].iter().sum();
        self.inputs[k].rows(off, self.layout.p[i]).into_owned()
    }

    pub fn v(&self, k: usize, i: usize) -> DVector<f64> {
        let off = self.layout.p.iter().sum::<usize>() + i * self.layout.q;
        self.inputs[k].rows(off, self.layout.q).into_owned()
    }

    /// Stacked residual `ξ = x − Xη`.
    pub fn xi(&self, k: usize) -> DVector<f64> {
        self.layout.xi(&self.states[k])
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("nonempty trajectory")
    }
}

struct Engine<'a> {
    sc: &'a Scenario,
    layout: Layout,
    laplace_rows: Vec<Vec<Vec<f64>>>,
}

impl Engine<'_> {
    /// Stacked derivative at stage time `t`, plus `[u, v]` when requested.
    fn derivative(
        &self,
        t: f64,
        s: &DVector<f64>,
        mode: usize,
        hist: &HistoryBuffer,
        inputs: Option<&mut DVector<f64>>,
    ) -> Result<DVector<f64>, SimError> {
        let lay = &self.layout;
        let n_agents = lay.n_agents();
        let q = lay.q;
        let mut out = DVector::zeros(s.len());
        let mut uv = inputs.map(|v| {
            v.fill(0.0);
            v
        });
        let mut cached: Vec<(f64, Vec<Option<DelayedSample>>)> = Vec::new();
        let mut u_off = 0;
        for i in 0..n_agents {
            let d = self.sc.delay.delay(i, t);
            let pos = match cached.iter().position(|(dd, _)| *dd == d) {
                Some(pos) => pos,
                None => {
                    let past = if d == 0.0 { s.clone() } else { hist.lookup(t - d)? };
                    cached.push((d, (0..n_agents).map(|j| Some(lay.sample(&past, j))).collect()));
                    cached.len() - 1
                }
            };
            let row = &self.laplace_rows[mode][i];
            let errors = protocol::consensus_errors(i, row, &cached[pos].1, q)?;
            let st = lay.agent_state(s, i);
            let d_i = protocol::agent_derivatives(
                &self.sc.agents[i],
                &self.sc.gains[i],
                &self.sc.costs.costs()[i],
                &st,
                &errors,
                &self.sc.params,
            );
            out.rows_mut(lay.x_off[i], lay.n[i]).copy_from(&d_i.xdot);
            out.rows_mut(lay.total_n() + i * q, q).copy_from(&d_i.etadot);
            out.rows_mut(lay.total_n() + (n_agents + i) * q, q).copy_from(&d_i.zdot);
            if let Some(uv) = uv.as_deref_mut() {
                let p = lay.p[i];
                uv.rows_mut(u_off, p).copy_from(&d_i.u);
                let v_off = lay.p.iter().sum::<usize>() + i * q;
                uv.rows_mut(v_off, q).copy_from(&d_i.v);
            }
            u_off += lay.p[i];
        }
        Ok(out)
    }
}

fn stacked_initial(sc: &Scenario, lay: &Layout) -> DVector<f64> {
    let mut s = DVector::zeros(lay.state_len());
    for (i, x0) in sc.x0.iter().enumerate() {
        s.rows_mut(lay.x_off[i], lay.n[i]).copy_from(x0);
    }
    s
}

/// Runs the scenario from the constant initial history.
pub fn integrate(sc: &Scenario) -> Result<Trajectory, SimError> {
    sc.validate()?;
    let layout = Layout::new(sc);
    let mode_path = markov::sample_mode_path(&sc.generator, &sc.initial_distribution, sc.horizon, sc.seed)?;
    let laplace_rows = sc
        .topology
        .modes()
        .iter()
        .map(|g| (0..g.n_agents()).map(|i| g.row(i)).collect())
        .collect();
    let engine = Engine { sc, layout: layout.clone(), laplace_rows };

    let steps = (sc.horizon / sc.dt).round().max(1.0) as usize;
    let dt = sc.dt;
    let mut s = stacked_initial(sc, &layout);
    let mut hist = HistoryBuffer::new(s.clone(), sc.delay.dbar_max() + 2.0 * dt);
    let mut times = Vec::with_capacity(steps + 1);
    let mut modes = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps + 1);

    for k in 0..=steps {
        let t = k as f64 * dt;
        let mode = mode_path.mode_at(t);
        hist.push_state(t, s.clone());
        let mut uv = DVector::zeros(layout.input_len());
        let k1 = engine.derivative(t, &s, mode, &hist, Some(&mut uv))?;
        hist.set_last_derivative(k1.clone());
        times.push(t);
        modes.push(mode);
        states.push(s.clone());
        inputs.push(uv);
        if k == steps {
            break;
        }
        let k2 = engine.derivative(t + 0.5 * dt, &(&s + &k1 * (0.5 * dt)), mode, &hist, None)?;
        let k3 = engine.derivative(t + 0.5 * dt, &(&s + &k2 * (0.5 * dt)), mode, &hist, None)?;
        let k4 = engine.derivative(t + dt, &(&s + &k3 * dt), mode, &hist, None)?;
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let norm = s.norm();
        if !norm.is_finite() || norm > DIVERGENCE_BOUND {
            return Err(SimError::Divergence { time: t + dt });
        }
    }
    Ok(Trajectory { dt, times, modes, states, inputs, mode_path, layout })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// First grid time after which every output stays within `tol` of `θ*`.
    pub convergence_time: Option<f64>,
    pub final_error: f64,
    /// `‖yᵢ(tₖ) − θ*‖`, indexed `[agent][k]`.
    pub per_agent_error: Vec<Vec<f64>>,
}

pub fn metrics(tr: &Trajectory, theta_star: &DVector<f64>, tol: f64) -> Result<Metrics, SimError> {
    if tr.is_empty() {
        return Err(SimError::EmptyTrajectory);
    }
    let per_agent_error: Vec<Vec<f64>> = (0..tr.n_agents())
        .map(|i| (0..tr.len()).map(|k| (tr.y(k, i) - theta_star).norm()).collect())
        .collect();
    let worst = |k: usize| per_agent_error.iter().map(|e| e[k]).fold(0.0, f64::max);
    let final_error = worst(tr.len() - 1);
    let mut convergence_time = None;
    for k in (0..tr.len()).rev() {
        if worst(k) > tol {
            break;
        }
        convergence_time = Some(tr.times[k]);
    }
    Ok(Metrics { convergence_time, final_error, per_agent_error })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `max ‖(ξₖ₊₁ − ξₖ₋₁)/2dt − Ãξₖ‖` over interior grid points.
    pub max_defect: f64,
    /// `10·dt²·‖Ã‖³·max‖ξ‖`, the central-difference truncation scale.
    pub threshold: f64,
    pub within_threshold: bool,
}

pub fn residual_invariant_report(tr: &Trajectory, a_tilde: &DMatrix<f64>) -> Result<ResidualReport, SimError> {
    if tr.len() < 3 {
        return Err(SimError::EmptyTrajectory);
    }
    let xis: Vec<DVector<f64>> = (0..tr.len()).map(|k| tr.xi(k)).collect();
    let mut max_defect: f64 = 0.0;
    for k in 1..xis.len() - 1 {
        let fd = (&xis[k + 1] - &xis[k - 1]) / (2.0 * tr.dt);
        max_defect = max_defect.max((fd - a_tilde * &xis[k]).norm());
    }
    let xi_max = xis.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let threshold = 10.0 * tr.dt * tr.dt * linalg::spectral_norm(a_tilde).powi(3) * xi_max;
    Ok(ResidualReport { max_defect, threshold, within_threshold: max_defect <= threshold })
}

/// Largest relative gap between `‖ξ(tₖ)‖` and `‖e^{Ãtₖ}ξ(0)‖` on the grid.
///
/// Once the reference has decayed below `√ε·‖ξ(0)‖` the stored `ξ = x − Xη`
/// is dominated by cancellation, so the gap is measured against that floor.
pub fn xi_tracking_error(tr: &Trajectory, a_tilde: &DMatrix<f64>) -> Result<f64, SimError> {
    if tr.is_empty() {
        return Err(SimError::EmptyTrajectory);
    }
    let step = (a_tilde * tr.dt).exp();
    let mut exact = tr.xi(0);
    let floor = f64::EPSILON.sqrt() * exact.norm();
    let mut worst: f64 = 0.0;
    for k in 0..tr.len() {
        if k > 0 {
            exact = &step * exact;
        }
        let reference = exact.norm().max(floor);
        if reference > 0.0 {
            worst = worst.max((tr.xi(k).norm() - exact.norm()).abs() / reference);
        }
    }
    Ok(worst)
}
