//! Delayed distributed optimization for heterogeneous linear multi-agent
//! systems over Markov-switched digraphs.
//!
//! Each agent `ẋᵢ = Aᵢxᵢ + Bᵢuᵢ, yᵢ = Cᵢxᵢ` runs a feedforward/feedback
//! controller driven by delayed consensus errors so that all outputs reach
//! the minimizer of `Σ fᵢ`. The crate covers the plant checks, the protocol,
//! a fixed-step delay integrator, and the delay-dependent LMI test.

pub mod demo;
pub mod graph;
pub mod linalg;
pub mod lmi;
pub mod markov;
pub mod objective;
pub mod plant;
pub mod protocol;
pub mod sim;

pub use graph::{GraphError, ModeDigraph, SwitchingTopology};
pub use lmi::{DecisionVars, FeasibilityCertificate, LmiData, LmiError, Variant};
pub use markov::{GeneratorMatrix, MarkovError, ModePath};
pub use objective::{CostFunction, CostSet, ObjectiveError, QuadraticCost};
pub use plant::{AgentModel, GainSet, PlantError};
pub use protocol::{AgentState, ProtocolParams};
pub use sim::{DelaySpec, Scenario, SimError, Trajectory};

pub use nalgebra::{DMatrix, DVector};

/// Any error produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Lmi(#[from] LmiError),
}
