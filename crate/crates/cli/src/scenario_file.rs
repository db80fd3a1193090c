//! JSON scenario format. Matrices are row-major nested arrays; agents,
//! modes and generator rows are numbered from 1 in diagnostics.

use std::path::Path;

use delayopt::graph::{ModeDigraph, SwitchingTopology};
use delayopt::lmi::Variant;
use delayopt::markov::GeneratorMatrix;
use delayopt::objective::{CostFunction, CostSet, QuadraticCost};
use delayopt::plant::{AgentModel, GainSet};
use delayopt::protocol::ProtocolParams;
use delayopt::sim::{DelayKind, DelaySpec, Scenario};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, ExitClass};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainEntry {
    #[serde(rename = "K")]
    pub k: Rows,
    #[serde(rename = "U", default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Rows>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Rows>,
    #[serde(rename = "X", default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Rows>,
}

/// `f(θ) = ½θᵀHθ + gᵀθ + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostEntry {
    #[serde(rename = "H")]
    pub h: Rows,
    pub g: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolEntry {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayKindEntry {
    Constant,
    Sinusoidal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayEntry {
    pub kind: DelayKindEntry,
    /// Per-agent bound.
    pub dbar: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimEntry {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub x0: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisEntry {
    #[serde(default)]
    pub varpi: f64,
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default = "default_dmax")]
    pub d_max: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_variant() -> String {
    Variant::Theorem1.name().to_string()
}

fn default_dmax() -> f64 {
    1.0
}

fn default_tol() -> f64 {
    0.01
}

impl Default for AnalysisEntry {
    fn default() -> Self {
        Self { varpi: 0.0, variant: default_variant(), d_max: default_dmax(), tol: default_tol() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub agents: Vec<AgentEntry>,
    pub gains: Vec<GainEntry>,
    pub costs: Vec<CostEntry>,
    /// One adjacency matrix per mode; entry `[i][j] > 0` means agent `i+1`
    /// receives from agent `j+1`.
    pub topology: Vec<Rows>,
    pub generator: Rows,
    pub initial_distribution: Vec<f64>,
    pub protocol: ProtocolEntry,
    pub delay: DelayEntry,
    pub sim: SimEntry,
    #[serde(default)]
    pub analysis: AnalysisEntry,
}

/// Validated scenario plus the analysis settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub analysis: Analysis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analysis {
    pub varpi: f64,
    pub variant: Variant,
    pub d_max: f64,
    pub tol: f64,
}

fn matrix(rows: &Rows, what: &str) -> Result<DMatrix<f64>, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(CliError::invalid("E_DIM", format!("{what} is empty")));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return Err(CliError::invalid(
            "E_DIM",
            format!("{what} row {} has {} entries, expected {c}", i + 1, row.len()),
        ));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::invalid("E_DIM", format!("{what} has a non-finite entry")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn count(what: &str, expected: usize, got: usize) -> Result<(), CliError> {
    if expected != got {
        return Err(CliError::invalid("E_DIM", format!("{what}: expected {expected} entries, got {got}")));
    }
    Ok(())
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let code = if msg.contains("missing field") { "E_MISSING" } else { "E_PARSE" };
            CliError::new(code, ExitClass::Usage, msg)
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes") + "\n"
    }

    /// Builds and validates the core scenario.
    pub fn load(&self) -> Result<LoadedScenario, CliError> {
        let n = self.agents.len();
        if n == 0 {
            return Err(CliError::invalid("E_DIM", "scenario has no agents"));
        }
        count("gains", n, self.gains.len())?;
        count("costs", n, self.costs.len())?;
        count("sim.x0", n, self.sim.x0.len())?;

        let mut agents = Vec::with_capacity(n);
        let mut gains = Vec::with_capacity(n);
        let mut costs = Vec::with_capacity(n);
        for i in 0..n {
            let at = |e: CliError| e.at(format!("agent {}", i + 1));
            let entry = &self.agents[i];
            let m = AgentModel::new(matrix(&entry.a, "A").map_err(at)?, matrix(&entry.b, "B").map_err(at)?, matrix(&entry.c, "C").map_err(at)?)
                .map_err(|e| at(e.into()))?;
            let g = &self.gains[i];
            let k = matrix(&g.k, "K").map_err(at)?;
            let gs = match (&g.u, &g.w, &g.x) {
                (None, None, None) => GainSet::solved(&m, k),
                (Some(u), Some(w), Some(x)) => GainSet::new(
                    &m,
                    k,
                    matrix(u, "U").map_err(at)?,
                    matrix(w, "W").map_err(at)?,
                    matrix(x, "X").map_err(at)?,
                ),
                _ => return Err(at(CliError::invalid("E_MISSING", "give all of U, W, X or none"))),
            }
            .map_err(|e| at(e.into()))?;
            let c = &self.costs[i];
            let cost = QuadraticCost::new(matrix(&c.h, "H").map_err(at)?, DVector::from_vec(c.g.clone()), c.c)
                .map_err(|e| at(e.into()))?;
            if cost.dim() != m.q() {
                return Err(at(CliError::invalid(
                    "E_DIM",
                    format!("cost dimension {} differs from output dimension {}", cost.dim(), m.q()),
                )));
            }
            agents.push(m);
            gains.push(gs);
            costs.push(cost);
        }
        let q = agents[0].q();
        if let Some(i) = agents.iter().position(|m| m.q() != q) {
            return Err(CliError::invalid(
                "E_DIM",
                format!("agent {}: output dimension {} differs from agent 1 ({q})", i + 1, agents[i].q()),
            ));
        }

        let mut modes = Vec::with_capacity(self.topology.len());
        for (p, adj) in self.topology.iter().enumerate() {
            let at = |e: CliError| e.at(format!("mode {}", p + 1));
            let a = matrix(adj, "adjacency").map_err(at)?;
            modes.push(ModeDigraph::new(a).map_err(|e| at(e.into()))?);
        }
        let topology = SwitchingTopology::new(modes)?;
        let generator = GeneratorMatrix::new(matrix(&self.generator, "generator")?)?;
        let params = ProtocolParams::new(self.protocol.alpha, self.protocol.beta)
            .map_err(|e| CliError::invalid("E_PARAM", e.to_string()))?;
        let kind = match (self.delay.kind, self.delay.omega) {
            (DelayKindEntry::Constant, _) => DelayKind::Constant,
            (DelayKindEntry::Sinusoidal, Some(omega)) => DelayKind::Sinusoidal { omega },
            (DelayKindEntry::Sinusoidal, None) => {
                return Err(CliError::new("E_MISSING", ExitClass::Usage, "delay.omega is required for sinusoidal delays"))
            }
        };
        let scenario = Scenario {
            agents,
            gains,
            costs: CostSet::new(costs)?,
            topology,
            generator,
            initial_distribution: self.initial_distribution.clone(),
            params,
            delay: DelaySpec { kind, dbar: self.delay.dbar.clone() },
            x0: self.sim.x0.iter().map(|x| DVector::from_vec(x.clone())).collect(),
            dt: self.sim.dt,
            horizon: self.sim.horizon,
            seed: self.sim.seed,
        };
        scenario.validate()?;

        let variant = Variant::parse(&self.analysis.variant).ok_or_else(|| {
            CliError::invalid("E_PARAM", format!("unknown variant {:?}", self.analysis.variant))
        })?;
        let a = &self.analysis;
        if !(a.varpi >= 0.0 && a.varpi < 1.0) {
            return Err(CliError::invalid("E_PARAM", format!("analysis.varpi = {} must lie in [0, 1)", a.varpi)));
        }
        if !(a.d_max >= 0.0 && a.d_max.is_finite() && a.tol > 0.0) {
            return Err(CliError::invalid("E_PARAM", "analysis.d_max must be >= 0 and analysis.tol > 0"));
        }
        Ok(LoadedScenario { scenario, analysis: Analysis { varpi: a.varpi, variant, d_max: a.d_max, tol: a.tol } })
    }

    /// File form of a scenario, with explicit `(U, W, X)`.
    pub fn from_scenario(sc: &Scenario, analysis: &Analysis) -> Self {
        let (kind, omega) = match sc.delay.kind {
            DelayKind::Constant => (DelayKindEntry::Constant, None),
            DelayKind::Sinusoidal { omega } => (DelayKindEntry::Sinusoidal, Some(omega)),
        };
        Self {
            agents: sc
                .agents
                .iter()
                .map(|m| AgentEntry { a: rows_of(m.a()), b: rows_of(m.b()), c: rows_of(m.c()) })
                .collect(),
            gains: sc
                .gains
                .iter()
                .map(|g| GainEntry { k: rows_of(&g.k), u: Some(rows_of(&g.u)), w: Some(rows_of(&g.w)), x: Some(rows_of(&g.x)) })
                .collect(),
            costs: sc
                .costs
                .costs()
                .iter()
                .map(|f| CostEntry { h: rows_of(f.hessian()), g: f.linear().iter().copied().collect(), c: f.offset() })
                .collect(),
            topology: sc.topology.modes().iter().map(|g| rows_of(g.adjacency())).collect(),
            generator: rows_of(sc.generator.rates()),
            initial_distribution: sc.initial_distribution.clone(),
            protocol: ProtocolEntry { alpha: sc.params.alpha(), beta: sc.params.beta() },
            delay: DelayEntry { kind, dbar: sc.delay.dbar.clone(), omega },
            sim: SimEntry {
                dt: sc.dt,
                horizon: sc.horizon,
                seed: sc.seed,
                x0: sc.x0.iter().map(|x| x.iter().copied().collect()).collect(),
            },
            analysis: AnalysisEntry {
                varpi: analysis.varpi,
                variant: analysis.variant.name().to_string(),
                d_max: analysis.d_max,
                tol: analysis.tol,
            },
        }
    }
}

impl Default for Analysis {
    fn default() -> Self {
        Self { varpi: 0.0, variant: Variant::Theorem1, d_max: 1.0, tol: 0.01 }
    }
}

/// Reads, parses and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<LoadedScenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ScenarioFile::from_json(&text)?.load()
}

#[cfg(test)]
mod tests {
    use super::*;
    use delayopt::demo;

    fn demo_file() -> ScenarioFile {
        ScenarioFile::from_scenario(&demo::scenario(0.1), &Analysis::default())
    }

    #[test]
    fn demo_round_trips() {
        let file = demo_file();
        let back = ScenarioFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
        let loaded = back.load().unwrap();
        assert_eq!(loaded.scenario, demo::scenario(0.1));
    }

    #[test]
    fn wrong_output_width_names_agent() {
        let mut file = demo_file();
        file.agents[1].c = vec![vec![-1.0, 1.0, 0.0]];
        let err = file.load().unwrap_err();
        assert_eq!(err.code, "E_DIM");
        assert!(err.message.starts_with("agent 2:"), "{err}");
    }

    #[test]
    fn bad_generator_row_is_named() {
        let mut file = demo_file();
        file.generator[0] = vec![-0.2, 0.2, 0.1];
        let err = file.load().unwrap_err();
        assert_eq!(err.code, "E_GENERATOR");
        assert!(err.message.contains("row 1"), "{err}");
    }

    #[test]
    fn unstable_gain_is_rejected() {
        let mut file = demo_file();
        file.gains[2].k = vec![vec![0.0; 3]; 2];
        let err = file.load().unwrap_err();
        assert_eq!(err.code, "E_HURWITZ");
        assert!(err.message.starts_with("agent 3:"));
    }

    #[test]
    fn missing_field_is_distinct() {
        let text = demo_file().to_json().replace("\"generator\"", "\"generatr\"");
        let err = ScenarioFile::from_json(&text).unwrap_err();
        assert!(err.code == "E_MISSING" || err.code == "E_PARSE");
        let mut v: serde_json::Value = serde_json::from_str(&demo_file().to_json()).unwrap();
        v.as_object_mut().unwrap().remove("protocol");
        let err = ScenarioFile::from_json(&v.to_string()).unwrap_err();
        assert_eq!(err.code, "E_MISSING");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn absent_feedforward_gains_are_solved() {
        let mut file = demo_file();
        for g in &mut file.gains {
            g.u = None;
            g.w = None;
            g.x = None;
        }
        let loaded = file.load().unwrap();
        for (m, g) in loaded.scenario.agents.iter().zip(&loaded.scenario.gains) {
            let r = delayopt::plant::regulator_residuals(m, &g.u, &g.w, &g.x).unwrap();
            assert!(r.max() <= 1e-10);
        }
    }
}
