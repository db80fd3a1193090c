use std::fmt;

use delayopt::lmi::LmiError;
use delayopt::markov::MarkovError;
use delayopt::plant::PlantError;
use delayopt::sim::SimError;
use delayopt::{GraphError, ObjectiveError};

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    /// Bad arguments, unreadable or malformed input.
    Usage = 1,
    /// Scenario fails validation, or the LMI is infeasible.
    Validation = 2,
    /// Divergence or an undecided solver.
    Numerical = 3,
}

/// A diagnostic rendered as one line: `error[CODE]: message`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: &'static str,
    pub class: ExitClass,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, class: ExitClass, message: impl Into<String>) -> Self {
        let message: String = message.into();
        // keep the diagnostic on one line
        let message = message.split_whitespace().collect::<Vec<_>>().join(" ");
        Self { code, class, message }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("E_USAGE", ExitClass::Usage, message)
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Self::new("E_IO", ExitClass::Usage, format!("{}: {err}", path.display()))
    }

    pub fn invalid(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(code, ExitClass::Validation, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.class as i32
    }

    /// Prefixes the message with a location such as `agent 2`.
    pub fn at(mut self, location: impl fmt::Display) -> Self {
        self.message = format!("{location}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<PlantError> for CliError {
    fn from(e: PlantError) -> Self {
        let code = match e {
            PlantError::Dimension { .. } => "E_DIM",
            PlantError::NoRegulatorSolution { .. } => "E_REGULATOR",
            PlantError::GainResidual { .. } => "E_GAIN_RESIDUAL",
            PlantError::NotHurwitz { .. } => "E_HURWITZ",
        };
        Self::invalid(code, e.to_string())
    }
}

impl From<MarkovError> for CliError {
    fn from(e: MarkovError) -> Self {
        // rows and columns are reported 1-based
        let message = match &e {
            MarkovError::RowSum { row, sum } => format!("generator row {} sums to {sum:e}, expected 0", row + 1),
            MarkovError::NegativeRate { row, col, value } => {
                format!("generator row {}: rate at column {} is {value} (must be >= 0)", row + 1, col + 1)
            }
            other => other.to_string(),
        };
        let code = match e {
            MarkovError::BadDistribution { .. } => "E_DISTRIBUTION",
            MarkovError::BadHorizon(_) => "E_STEP",
            _ => "E_GENERATOR",
        };
        Self::invalid(code, message)
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        Self::invalid("E_GRAPH", e.to_string())
    }
}

impl From<ObjectiveError> for CliError {
    fn from(e: ObjectiveError) -> Self {
        Self::invalid("E_COST", e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Agent { agent, source } => CliError::from(source).at(format!("agent {}", agent + 1)),
            SimError::Dimension { agent, what, expected, got } => {
                Self::invalid("E_DIM", format!("agent {}: {what} has dimension {got}, expected {expected}", agent + 1))
            }
            SimError::RankCondition { agent, rank, required } => Self::invalid(
                "E_RANK",
                format!("agent {}: rank condition fails (rank {rank}, need {required})", agent + 1),
            ),
            SimError::BadDelay { agent, dbar } => {
                Self::invalid("E_DELAY", format!("agent {}: delay bound {dbar} must be finite and nonnegative", agent + 1))
            }
            SimError::Count { .. } => Self::invalid("E_DIM", e.to_string()),
            SimError::BadFrequency(_) => Self::invalid("E_DELAY", e.to_string()),
            SimError::BadGrid { .. } | SimError::StepTooLarge { .. } => Self::invalid("E_STEP", e.to_string()),
            SimError::Markov(m) => m.into(),
            SimError::Protocol(_) => Self::invalid("E_PARAM", e.to_string()),
            SimError::Divergence { .. } => Self::new("E_DIVERGED", ExitClass::Numerical, e.to_string()),
            SimError::HistoryUnderflow { .. } | SimError::EmptyTrajectory => {
                Self::new("E_NUMERIC", ExitClass::Numerical, e.to_string())
            }
        }
    }
}

impl From<LmiError> for CliError {
    fn from(e: LmiError) -> Self {
        match e {
            LmiError::BaseInfeasible => Self::invalid("E_INFEASIBLE", e.to_string()),
            LmiError::BadRate(_) | LmiError::BadDelay(_) | LmiError::BadParameter { .. } => {
                Self::invalid("E_PARAM", e.to_string())
            }
            LmiError::Lyapunov { .. } => Self::new("E_NUMERIC", ExitClass::Numerical, e.to_string()),
            LmiError::Parse { .. } => Self::new("E_PARSE", ExitClass::Usage, e.to_string()),
            LmiError::Graph(g) => g.into(),
            _ => Self::invalid("E_LMI", e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_single_line() {
        let e = CliError::invalid("E_DIM", "C has\nshape (1, 3)").at("agent 2");
        assert_eq!(e.to_string(), "error[E_DIM]: agent 2: C has shape (1, 3)");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn generator_rows_are_one_based() {
        let e: CliError = MarkovError::RowSum { row: 0, sum: 0.1 }.into();
        assert!(e.message.starts_with("generator row 1 "));
        assert_eq!(e.code, "E_GENERATOR");
    }
}
