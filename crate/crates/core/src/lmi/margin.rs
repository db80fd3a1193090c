use super::blocks::{LmiData, Variant};
use super::solve::{solve_feasibility, Feasibility, SolveOptions};
use super::LmiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeOutcome {
    Feasible,
    Infeasible,
    Undecided,
}

impl From<&Feasibility> for ProbeOutcome {
    fn from(f: &Feasibility) -> Self {
        match f {
            Feasibility::Feasible(_) => ProbeOutcome::Feasible,
            Feasibility::Infeasible(_) => ProbeOutcome::Infeasible,
            Feasibility::Undecided(_) => ProbeOutcome::Undecided,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    /// Largest certified delay bound.
    pub d_star: f64,
    /// Smallest delay bound that was not certified, if any was probed.
    pub d_fail: Option<f64>,
    /// Every probe in the order it ran.
    pub log: Vec<(f64, ProbeOutcome)>,
}

/// True when every certified delay lies below every uncertified one.
pub fn log_is_monotone(log: &[(f64, ProbeOutcome)]) -> bool {
    let max_ok = log
        .iter()
        .filter(|(_, o)| *o == ProbeOutcome::Feasible)
        .map(|(d, _)| *d)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_bad = log
        .iter()
        .filter(|(_, o)| *o != ProbeOutcome::Feasible)
        .map(|(d, _)| *d)
        .fold(f64::INFINITY, f64::min);
    max_ok < min_bad
}

/// Bisection on `[0, d_max]` to bracket width `tol`, treating undecided
/// probes as failures.
pub fn bisect_margin(
    d_max: f64,
    tol: f64,
    mut probe: impl FnMut(f64) -> Result<ProbeOutcome, LmiError>,
) -> Result<MarginReport, LmiError> {
    if !(d_max >= 0.0 && d_max.is_finite()) {
        return Err(LmiError::BadDelay(d_max));
    }
    if !(tol > 0.0) {
        return Err(LmiError::BadParameter { name: "tol", value: tol });
    }
    let mut log = Vec::new();
    let mut run = |d: f64, log: &mut Vec<(f64, ProbeOutcome)>| -> Result<bool, LmiError> {
        let out = probe(d)?;
        log.push((d, out));
        Ok(out == ProbeOutcome::Feasible)
    };
    if !run(0.0, &mut log)? {
        return Err(LmiError::BaseInfeasible);
    }
    if d_max == 0.0 || run(d_max, &mut log)? {
        return Ok(MarginReport { d_star: d_max, d_fail: None, log });
    }
    let (mut lo, mut hi) = (0.0, d_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if run(mid, &mut log)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MarginReport { d_star: lo, d_fail: Some(hi), log })
}

/// Largest delay bound the chosen variant certifies on `[0, d_max]`.
pub fn delay_margin(
    data: &LmiData,
    variant: Variant,
    d_max: f64,
    tol: f64,
    opts: &SolveOptions,
) -> Result<MarginReport, LmiError> {
    let mut warm = None;
    bisect_margin(d_max, tol, |d| {
        let res = solve_feasibility(&data.with_dbar(d), variant, opts, warm.as_ref())?;
        if let Feasibility::Feasible(cert) = &res {
            warm = Some(cert.vars.clone());
        }
        Ok(ProbeOutcome::from(&res))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;

    #[test]
    fn zero_range_returns_zero() {
        let r = bisect_margin(0.0, 0.01, |_| Ok(ProbeOutcome::Feasible)).unwrap();
        assert_eq!(r.d_star, 0.0);
        assert_eq!(r.d_fail, None);
    }

    #[test]
    fn brackets_threshold() {
        let r = bisect_margin(1.0, 1e-3, |d| {
            Ok(if d < 0.37 { ProbeOutcome::Feasible } else { ProbeOutcome::Infeasible })
        })
        .unwrap();
        assert!(r.d_star < 0.37 && r.d_fail.unwrap() >= 0.37);
        assert!(r.d_fail.unwrap() - r.d_star <= 1e-3);
        assert!(log_is_monotone(&r.log));
    }

    #[test]
    fn infeasible_base_is_an_error() {
        let r = bisect_margin(1.0, 0.1, |_| Ok(ProbeOutcome::Undecided));
        assert_eq!(r, Err(LmiError::BaseInfeasible));
    }

    #[test]
    fn demo_has_no_margin() {
        let data = LmiData::from_scenario(&demo::scenario(0.1), 0.0, 0.0).unwrap();
        let r = delay_margin(&data, Variant::Theorem1, 1.0, 0.01, &SolveOptions::default());
        assert_eq!(r, Err(LmiError::BaseInfeasible));
    }
}
