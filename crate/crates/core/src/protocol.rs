//! Per-agent control law: delayed consensus errors, the intermediate
//! variable `v`, the input `u` and the state derivatives.

use nalgebra::DVector;
use thiserror::Error;

use crate::objective::{CostFunction, QuadraticCost};
use crate::plant::{AgentModel, GainSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("gains must be positive, got alpha={alpha}, beta={beta}")]
    BadGains { alpha: f64, beta: f64 },
    #[error("history underflow: no delayed sample for agent {agent}")]
    HistoryUnderflow { agent: usize },
    #[error("agent {agent} sample has dimension {got}, expected {expected}")]
    Dimension { agent: usize, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub x: DVector<f64>,
    pub eta: DVector<f64>,
    pub z: DVector<f64>,
}

impl AgentState {
    pub fn new(x: DVector<f64>, q: usize) -> Self {
        Self { x, eta: DVector::zeros(q), z: DVector::zeros(q) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    alpha: f64,
    beta: f64,
}

impl ProtocolParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ProtocolError> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(ProtocolError::BadGains { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// `(η, z, y)` of one agent at some past time.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayedSample {
    pub eta: DVector<f64>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
}

/// Samples of every agent seen by one receiver at `t − dᵢ(t)`.
/// `None` marks an agent whose history is unavailable.
pub type DelayedView = [Option<DelayedSample>];

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusErrors {
    pub e_etaz: DVector<f64>,
    pub e_y: DVector<f64>,
}

/// `e_ηz = Σⱼ aᵢⱼ[(ηᵢ−ηⱼ)+(zᵢ−zⱼ)]` and `e_y = Σⱼ aᵢⱼ(yᵢ−yⱼ)`, every term
/// taken from the delayed view (the receiver's own sample included).
pub fn consensus_errors(
    i: usize,
    adjacency_row: &[f64],
    view: &DelayedView,
    q: usize,
) -> Result<ConsensusErrors, ProtocolError> {
    let mut e_etaz = DVector::zeros(q);
    let mut e_y = DVector::zeros(q);
    if adjacency_row.iter().all(|&a| a == 0.0) {
        return Ok(ConsensusErrors { e_etaz, e_y });
    }
    let own = sample(view, i, q)?;
    for (j, &a) in adjacency_row.iter().enumerate() {
        if a == 0.0 || j == i {
            continue;
        }
        let other = sample(view, j, q)?;
        e_etaz += a * ((&own.eta - &other.eta) + (&own.z - &other.z));
        e_y += a * (&own.y - &other.y);
    }
    Ok(ConsensusErrors { e_etaz, e_y })
}

fn sample(view: &DelayedView, j: usize, q: usize) -> Result<&DelayedSample, ProtocolError> {
    let s = view
        .get(j)
        .and_then(Option::as_ref)
        .ok_or(ProtocolError::HistoryUnderflow { agent: j })?;
    for got in [s.eta.len(), s.z.len(), s.y.len()] {
        if got != q {
            return Err(ProtocolError::Dimension { agent: j, expected: q, got });
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentDerivatives {
    pub xdot: DVector<f64>,
    pub etadot: DVector<f64>,
    pub zdot: DVector<f64>,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

/// `v = −∇f(y) − β e_ηz − αβ e_y`, `u = −Kx − (U − KX)η + Wv`,
/// `ẋ = Ax + Bu`, `η̇ = v`, `ż = αβ e_y`.
pub fn agent_derivatives(
    m: &AgentModel,
    gains: &GainSet,
    f: &QuadraticCost,
    s: &AgentState,
    errors: &ConsensusErrors,
    params: &ProtocolParams,
) -> AgentDerivatives {
    let (alpha, beta) = (params.alpha, params.beta);
    let y = m.output(&s.x);
    let v = -f.gradient(&y) - beta * &errors.e_etaz - (alpha * beta) * &errors.e_y;
    let ff = &gains.u - &gains.k * &gains.x;
    let u = -(&gains.k * &s.x) - ff * &s.eta + &gains.w * &v;
    let xdot = m.a() * &s.x + m.b() * &u;
    let zdot = (alpha * beta) * &errors.e_y;
    AgentDerivatives { xdot, etadot: v.clone(), zdot, u, v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use nalgebra::DMatrix;

    fn s1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn smp(eta: f64, z: f64, y: f64) -> Option<DelayedSample> {
        Some(DelayedSample { eta: s1(eta), z: s1(z), y: s1(y) })
    }

    #[test]
    fn identical_samples_give_zero_errors() {
        let view = vec![smp(1.0, 2.0, 3.0); 3];
        let e = consensus_errors(0, &[0.0, 1.0, 1.0], &view, 1).unwrap();
        assert_eq!(e.e_etaz[0], 0.0);
        assert_eq!(e.e_y[0], 0.0);
    }

    #[test]
    fn single_term_sum() {
        let view = vec![smp(0.0, 0.0, 1.0), smp(0.0, 0.0, 0.0)];
        let e = consensus_errors(0, &[0.0, 1.0], &view, 1).unwrap();
        assert_eq!(e.e_y[0], 1.0);
        assert_eq!(e.e_etaz[0], 0.0);
    }

    #[test]
    fn no_in_neighbours_gives_zero_even_without_history() {
        let view = vec![None, None];
        let e = consensus_errors(0, &[0.0, 0.0], &view, 1).unwrap();
        assert_eq!(e.e_y[0], 0.0);
    }

    #[test]
    fn missing_neighbour_is_underflow() {
        let view = vec![smp(0.0, 0.0, 0.0), None];
        assert_eq!(
            consensus_errors(0, &[0.0, 1.0], &view, 1),
            Err(ProtocolError::HistoryUnderflow { agent: 1 })
        );
    }

    #[test]
    fn rejects_nonpositive_gains() {
        assert!(ProtocolParams::new(0.0, 1.0).is_err());
        assert!(ProtocolParams::new(1.0, -0.1).is_err());
    }

    #[test]
    fn residual_identity_holds_for_any_state() {
        let agents = demo::agents();
        let gains = demo::gains();
        let costs = demo::costs();
        let params = demo::params();
        for i in 0..3 {
            let m = &agents[i];
            let g = &gains[i];
            let x = DVector::from_fn(m.n(), |r, _| 0.3 * r as f64 - 1.1 + i as f64);
            let s = AgentState { x, eta: s1(0.7 - i as f64), z: s1(-0.4) };
            let errors = ConsensusErrors { e_etaz: s1(1.3), e_y: s1(-2.1) };
            let d = agent_derivatives(m, g, &costs.costs()[i], &s, &errors, &params);
            let xi = &s.x - &g.x * &s.eta;
            let xi_dot = &d.xdot - &g.x * &d.etadot;
            let at = m.closed_loop(&g.k);
            assert!((xi_dot - at * xi).amax() < 1e-12, "agent {}", i + 1);
        }
    }

    #[test]
    fn lone_agent_follows_gradient_flow() {
        let m = AgentModel::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let g = GainSet::solved(&m, DMatrix::identity(1, 1)).unwrap();
        let f = QuadraticCost::scalar(1.0, -3.0, 4.5).unwrap();
        let s = AgentState { x: s1(1.0), eta: s1(1.0), z: s1(0.0) };
        let zero = ConsensusErrors { e_etaz: s1(0.0), e_y: s1(0.0) };
        let d = agent_derivatives(&m, &g, &f, &s, &zero, &ProtocolParams::new(1.0, 1.0).unwrap());
        assert!((d.etadot[0] - 2.0).abs() < 1e-14);
        assert_eq!(d.zdot[0], 0.0);
    }
}
