//! Delay-dependent LMI test: block assembly, a barrier-method feasibility
//! search, independent certificate checking, delay-margin bisection and the
//! integral-inequality spot check.

mod blocks;
mod certificate;
mod lemma2;
mod margin;
pub mod sdp;
mod solve;

use thiserror::Error;

pub use blocks::{
    assemble_pi, assemble_variant, consensus_witness, fix_pa, DecisionVars, LmiData, MatrixName, Variant,
    BLOCK_COUNT,
};
pub use certificate::{check_certificate, parse_certificate, write_certificate, CertificateCheck, FeasibilityCertificate};
pub use lemma2::{lemma2_numeric_check, Lemma2Report};
pub use margin::{bisect_margin, delay_margin, log_is_monotone, MarginReport, ProbeOutcome};
pub use solve::{solve_feasibility, Feasibility, SearchReport, SolveOptions};

use crate::graph::GraphError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmiError {
    #[error("closed-loop matrix is not Hurwitz (max real part {margin})")]
    NotHurwitz { margin: f64 },
    #[error("Lyapunov solve failed (residual {residual:e})")]
    Lyapunov { residual: f64 },
    #[error("{what}: expected {expected:?}, got {got:?}")]
    Dimension { what: &'static str, expected: (usize, usize), got: (usize, usize) },
    #[error("delay bound must be finite and nonnegative, got {0}")]
    BadDelay(f64),
    #[error("delay-rate bound must lie in [0, 1), got {0}")]
    BadRate(f64),
    #[error("scalar parameter {name} = {value} is invalid")]
    BadParameter { name: &'static str, value: f64 },
    #[error("C·X differs from identity by {residual:e}")]
    OutputMap { residual: f64 },
    #[error("mode {mode} out of range (have {modes})")]
    NoSuchMode { mode: usize, modes: usize },
    #[error("not feasible at zero delay; no margin to bisect")]
    BaseInfeasible,
    #[error("path check precondition: {0}")]
    PathCheck(&'static str),
    #[error("certificate line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}
