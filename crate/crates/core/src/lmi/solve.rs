use nalgebra::{DMatrix, DVector};

use super::blocks::{assemble_variant, DecisionVars, LmiData, MatrixName, Variant};
use super::certificate::{check_certificate, FeasibilityCertificate};
use super::sdp::{self, AffineBlock, LmiProblem, SdpOptions, SdpOutcome};
use super::LmiError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Required margin: `Π_p ≼ −μI` and every decision matrix `≽ μI`.
    pub mu: f64,
    /// Upper bound `R` on every decision matrix, keeping the search compact.
    pub bound: f64,
    pub sdp: SdpOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { mu: 1e-6, bound: 1e4, sdp: SdpOptions::default() }
    }
}

/// What the search found when no certificate was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    /// Smallest `max(λ_max(Π_p) + μ, μ − λ_min(P), …)` reached.
    pub best_slack: f64,
    /// Proven lower bound on that quantity (positive means infeasible).
    pub lower_bound: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(FeasibilityCertificate),
    Infeasible(SearchReport),
    Undecided(SearchReport),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            Feasibility::Feasible(_) => "feasible",
            Feasibility::Infeasible(_) => "infeasible",
            Feasibility::Undecided(_) => "undecided",
        }
    }
}

/// Coordinates of the active decision matrices: one variable per
/// upper-triangular entry.
struct Coordinates {
    m: usize,
    entries: Vec<(MatrixName, usize, usize)>,
}

impl Coordinates {
    fn new(m: usize, variant: Variant) -> Self {
        let mut entries = Vec::new();
        for &name in variant.active() {
            for a in 0..m {
                for b in a..m {
                    entries.push((name, a, b));
                }
            }
        }
        Self { m, entries }
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    fn vars(&self, x: &DVector<f64>) -> DecisionVars {
        let mut out = DecisionVars::zeros(self.m);
        let mut mats: Vec<DMatrix<f64>> = MatrixName::ALL.iter().map(|_| DMatrix::zeros(self.m, self.m)).collect();
        for (k, &(name, a, b)) in self.entries.iter().enumerate() {
            mats[name.index()][(a, b)] = x[k];
            mats[name.index()][(b, a)] = x[k];
        }
        for (name, mat) in MatrixName::ALL.into_iter().zip(mats) {
            out.set(name, mat);
        }
        out
    }

    fn unit(&self, k: usize) -> DecisionVars {
        let mut x = DVector::zeros(self.len());
        x[k] = 1.0;
        self.vars(&x)
    }

    fn of(&self, vars: &DecisionVars) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.entries.iter().map(|&(name, a, b)| vars.get(name)[(a, b)]))
    }
}

fn affine_block(
    coords: &Coordinates,
    eval: impl Fn(&DecisionVars) -> Result<DMatrix<f64>, LmiError>,
) -> Result<AffineBlock, LmiError> {
    let constant = eval(&DecisionVars::zeros(coords.m))?;
    let mut terms = Vec::new();
    for k in 0..coords.len() {
        let f = eval(&coords.unit(k))? - &constant;
        if f.amax() > 0.0 {
            terms.push((k, f));
        }
    }
    Ok(AffineBlock { constant, terms })
}

fn build_problem(data: &LmiData, variant: Variant, opts: &SolveOptions) -> Result<(Coordinates, LmiProblem), LmiError> {
    let m = data.block();
    let coords = Coordinates::new(m, variant);
    let mut blocks = Vec::new();
    for p in 0..data.n_modes() {
        let dim = data.dim(variant);
        blocks.push(affine_block(&coords, |v| {
            Ok(assemble_variant(data, v, p, variant)? + DMatrix::identity(dim, dim) * opts.mu)
        })?);
    }
    let id = DMatrix::<f64>::identity(m, m);
    for &name in variant.active() {
        blocks.push(affine_block(&coords, |v| Ok(&id * opts.mu - v.get(name)))?);
        blocks.push(affine_block(&coords, |v| Ok(v.get(name) - &id * opts.bound))?);
    }
    let n_vars = coords.len();
    Ok((coords, LmiProblem { n_vars, blocks }))
}

/// Searches for common decision matrices making every mode's matrix
/// `≼ −μI`. A returned certificate has already passed [`check_certificate`].
pub fn solve_feasibility(
    data: &LmiData,
    variant: Variant,
    opts: &SolveOptions,
    warm_start: Option<&DecisionVars>,
) -> Result<Feasibility, LmiError> {
    if variant == Variant::Theorem1 && !(data.varpi < 1.0) {
        return Err(LmiError::BadRate(data.varpi));
    }
    let (coords, problem) = build_problem(data, variant, opts)?;
    let x0 = match warm_start {
        Some(v) => coords.of(v),
        None => coords.of(&DecisionVars::identity(data.block())),
    };
    let outcome = sdp::find_strictly_feasible(&problem, &x0, &opts.sdp);
    log::debug!("{} at dbar={}: {:?}", variant.name(), data.dbar, outcome.best_t());
    Ok(match outcome {
        SdpOutcome::Feasible { x, newton_steps, t } => {
            let vars = coords.vars(&x).restricted(variant);
            let cert = FeasibilityCertificate::new(data, vars, variant, opts.mu);
            if check_certificate(data, &cert).passes {
                Feasibility::Feasible(cert)
            } else {
                Feasibility::Undecided(SearchReport { best_slack: t, lower_bound: f64::NEG_INFINITY, newton_steps })
            }
        }
        SdpOutcome::Infeasible { t, lower_bound, newton_steps, .. } => {
            Feasibility::Infeasible(SearchReport { best_slack: t, lower_bound, newton_steps })
        }
        SdpOutcome::Undecided { t, lower_bound, newton_steps, .. } => {
            Feasibility::Undecided(SearchReport { best_slack: t, lower_bound, newton_steps })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use crate::lmi::consensus_witness;

    #[test]
    fn demo_is_refuted_at_every_delay() {
        for dbar in [0.1, 0.7] {
            let data = LmiData::from_scenario(&demo::scenario(dbar), dbar, 0.0).unwrap();
            for variant in Variant::ALL {
                let res = solve_feasibility(&data, variant, &SolveOptions::default(), None).unwrap();
                let Feasibility::Infeasible(report) = res else { panic!("{variant:?} at {dbar}: {res:?}") };
                let (_, bound) = consensus_witness(&data, variant);
                // the solver's slack cannot beat the analytic obstruction
                assert!(report.best_slack >= bound + 1e-6 - 1e-9);
            }
        }
    }

    #[test]
    fn coordinates_round_trip() {
        let coords = Coordinates::new(3, Variant::Theorem2);
        let x = DVector::from_fn(coords.len(), |i, _| i as f64 * 0.5 - 3.0);
        assert_eq!(coords.of(&coords.vars(&x)), x);
        assert_eq!(coords.vars(&x).get(MatrixName::P3).amax(), 0.0);
    }
}
