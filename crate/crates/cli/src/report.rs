use std::path::Path;

use delayopt::lmi::Feasibility;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub theta_star: Vec<f64>,
    pub tol: f64,
    /// `max_i ‖yᵢ(T) − θ*‖`.
    pub final_error: f64,
    pub convergence_time: Option<f64>,
    pub residual_max_defect: f64,
    pub residual_threshold: f64,
    pub residual_within_threshold: bool,
    pub xi_tracking_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiVerdict {
    pub variant: String,
    pub dbar: f64,
    pub varpi: f64,
    /// `feasible`, `infeasible` or `undecided`.
    pub verdict: String,
    pub best_slack: Option<f64>,
    pub lower_bound: Option<f64>,
}

impl LmiVerdict {
    pub fn new(variant: &str, dbar: f64, varpi: f64, res: &Feasibility) -> Self {
        let (best_slack, lower_bound) = match res {
            Feasibility::Feasible(cert) => (cert.lambda_max.iter().cloned().reduce(f64::max), None),
            Feasibility::Infeasible(r) | Feasibility::Undecided(r) => {
                (Some(r.best_slack), r.lower_bound.is_finite().then_some(r.lower_bound))
            }
        };
        Self { variant: variant.to_string(), dbar, varpi, verdict: res.label().to_string(), best_slack, lower_bound }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub delay: f64,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub metrics: MetricsSummary,
    pub lmi: Vec<LmiVerdict>,
    pub certificate_path: Option<String>,
    pub trajectory_path: String,
    pub scenario_path: Option<String>,
}

impl RunReport {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("report serializes") + "\n";
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    /// Paths named by the report that do not exist.
    pub fn missing_paths(&self) -> Vec<String> {
        [Some(&self.trajectory_path), self.certificate_path.as_ref(), self.scenario_path.as_ref()]
            .into_iter()
            .flatten()
            .filter(|p| !Path::new(p).exists())
            .cloned()
            .collect()
    }
}
