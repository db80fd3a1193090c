//! The three-agent study: heterogeneous plants, fixed gains, quadratic
//! costs, mode generator and the topology used by the bundled scenario.

use nalgebra::{DMatrix, DVector};

use crate::graph::{ModeDigraph, SwitchingTopology};
use crate::markov::GeneratorMatrix;
use crate::objective::{CostSet, QuadraticCost};
use crate::plant::{AgentModel, GainSet};
use crate::protocol::ProtocolParams;
use crate::sim::{DelaySpec, Scenario};

pub const ALPHA: f64 = 1.0;
pub const BETA: f64 = 0.75;
pub const THETA_STAR: f64 = 2.8;
pub const F_MIN: f64 = 4.4;
pub const DT: f64 = 1e-3;
pub const HORIZON: f64 = 10.0;
pub const SEED: u64 = 1;

/// Unnormalized initial mode weights as listed with the example.
pub const INITIAL_MODE_WEIGHTS: [f64; 3] = [0.4772, 0.2612, 0.3235];

fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, v)
}

pub fn agents() -> Vec<AgentModel> {
    vec![
        AgentModel::new(m(2, 2, &[0.0, 1.0, 0.0, 0.0]), m(2, 2, &[0.0, 1.0, 1.0, -2.0]), m(1, 2, &[1.0, 1.0])),
        AgentModel::new(m(2, 2, &[0.0, -1.0, 1.0, -2.0]), m(2, 2, &[1.0, 0.0, 3.0, -1.0]), m(1, 2, &[-1.0, 1.0])),
        AgentModel::new(
            m(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.5, 1.0, -2.0]),
            m(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]),
            m(1, 3, &[1.0, -1.0, 1.0]),
        ),
    ]
    .into_iter()
    .map(|r| r.expect("demo agent dimensions"))
    .collect()
}

pub fn feedback_gains() -> Vec<DMatrix<f64>> {
    vec![
        m(2, 2, &[8.0, 7.0, 4.0, 1.0]),
        m(2, 2, &[3.0, -1.0, 8.0, -5.0]),
        m(2, 3, &[6.3333, 1.0, -1.3333, 0.0, 2.0, 1.0]),
    ]
}

/// Reference `(K, U, W, X)`, unvalidated.
pub fn reference_gains() -> Vec<GainSet> {
    let uwx = [
        ([1.0, 0.5], [1.5, 0.5], vec![0.5, 0.5]),
        ([-0.5, 0.0], [-0.5, -2.0], vec![-0.5, 0.5]),
        ([-1.0, 0.0], [0.0, -1.0], vec![0.0, -1.0, 0.0]),
    ];
    feedback_gains()
        .into_iter()
        .zip(uwx)
        .map(|(k, (u, w, x))| GainSet {
            k,
            u: m(2, 1, &u),
            w: m(2, 1, &w),
            x: m(x.len(), 1, &x),
        })
        .collect()
}

/// Reference gains after validation (residuals and Hurwitz).
pub fn gains() -> Vec<GainSet> {
    agents()
        .iter()
        .zip(reference_gains())
        .map(|(a, g)| GainSet::new(a, g.k, g.u, g.w, g.x).expect("reference demo gains are valid"))
        .collect()
}

/// `f₁ = ½θ² − 1`, `f₂ = (θ − 4)²`, `f₃ = (θ − 3)²`.
pub fn costs() -> CostSet {
    CostSet::new(vec![
        QuadraticCost::scalar(1.0, 0.0, -1.0).unwrap(),
        QuadraticCost::scalar(2.0, -8.0, 16.0).unwrap(),
        QuadraticCost::scalar(2.0, -6.0, 9.0).unwrap(),
    ])
    .unwrap()
}

pub fn generator() -> GeneratorMatrix {
    GeneratorMatrix::new(m(3, 3, &[-0.2, 0.1, 0.1, 0.2, -0.6, 0.4, 0.02, 0.08, -0.1])).unwrap()
}

/// Every mode is the complete bidirectional graph on three agents.
pub fn topology() -> SwitchingTopology {
    let full = ModeDigraph::from_edges(3, &[(0, 1), (1, 0), (1, 2), (2, 1), (2, 0), (0, 2)]).unwrap();
    SwitchingTopology::new(vec![full.clone(), full.clone(), full]).unwrap()
}

/// Single-edge modes 1→2, 2→3, 3→1 whose union is a directed cycle.
pub fn single_edge_cycle() -> SwitchingTopology {
    SwitchingTopology::new(vec![
        ModeDigraph::from_edges(3, &[(0, 1)]).unwrap(),
        ModeDigraph::from_edges(3, &[(1, 2)]).unwrap(),
        ModeDigraph::from_edges(3, &[(2, 0)]).unwrap(),
    ])
    .unwrap()
}

pub fn initial_states() -> Vec<DVector<f64>> {
    vec![
        DVector::from_vec(vec![1.0, -1.0]),
        DVector::from_vec(vec![2.0, 0.0]),
        DVector::from_vec(vec![-1.0, 1.0, 0.5]),
    ]
}

pub fn params() -> ProtocolParams {
    ProtocolParams::new(ALPHA, BETA).unwrap()
}

/// Demo scenario with a constant delay `d` on every link.
pub fn scenario(delay: f64) -> Scenario {
    Scenario {
        agents: agents(),
        gains: gains(),
        costs: costs(),
        topology: topology(),
        generator: generator(),
        initial_distribution: INITIAL_MODE_WEIGHTS.to_vec(),
        params: params(),
        delay: DelaySpec::constant(vec![delay; 3]),
        x0: initial_states(),
        dt: DT,
        horizon: HORIZON,
        seed: SEED,
    }
}
