use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use delayopt::lmi::{self, Feasibility, LmiData, ProbeOutcome, SolveOptions, Variant};
use delayopt::plant::{self, RegulatorResiduals};
use delayopt::sim::{self, Scenario, Trajectory};
use delayopt::demo;

use crate::csv::{emit_trajectory_csv, fmt_g12};
use crate::error::{CliError, ExitClass};
use crate::report::{LmiVerdict, MetricsSummary, RunReport};
use crate::scenario_file::{parse_scenario, Analysis, ScenarioFile};

/// Tolerance used for the convergence time in summaries and reports.
pub const CONVERGENCE_TOL: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "delayopt", version, about = "Delayed distributed optimization over Markov-switched digraphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a scenario file.
    Validate { file: PathBuf },
    /// Solve the regulator equations and print residuals.
    Gains { file: PathBuf },
    /// Integrate the closed loop and write the trajectory CSV.
    Simulate {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace every agent's delay bound.
        #[arg(long)]
        delay: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Test the delay-dependent LMI at one delay bound.
    Analyze {
        file: PathBuf,
        #[arg(long)]
        dbar: f64,
        #[arg(long)]
        varpi: Option<f64>,
        #[arg(long)]
        variant: Option<String>,
        /// Where to write the certificate when one is found.
        #[arg(long)]
        cert: Option<PathBuf>,
    },
    /// Bisect for the largest certified delay bound.
    Margin {
        file: PathBuf,
        #[arg(long)]
        dmax: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        variant: Option<String>,
    },
    /// Run the built-in three-agent study at one delay.
    Demo {
        #[arg(long)]
        delay: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { file } => validate(&file, out),
        Command::Gains { file } => gains(&file, out),
        Command::Simulate { file, out: csv, delay, horizon, seed } => {
            let mut sc = parse_scenario(&file)?.scenario;
            apply_overrides(&mut sc, delay, horizon, seed)?;
            let tr = sim::integrate(&sc)?;
            let theta = sc.costs.global_optimum().theta;
            emit_trajectory_csv(&tr, &theta, &csv)?;
            let m = summarize(&sc, &tr)?;
            print_summary(out, &m)
        }
        Command::Analyze { file, dbar, varpi, variant, cert } => {
            let loaded = parse_scenario(&file)?;
            let varpi = varpi.unwrap_or(loaded.analysis.varpi);
            let variant = parse_variant(variant.as_deref(), loaded.analysis.variant)?;
            analyze(&loaded.scenario, dbar, varpi, variant, cert.as_deref(), out)
        }
        Command::Margin { file, dmax, tol, variant } => {
            let loaded = parse_scenario(&file)?;
            let a = loaded.analysis;
            let variant = parse_variant(variant.as_deref(), a.variant)?;
            margin(&loaded.scenario, dmax.unwrap_or(a.d_max), tol.unwrap_or(a.tol), a.varpi, variant, out)
        }
        Command::Demo { delay, out: dir, horizon, seed } => demo_run(delay, &dir, horizon, seed, out).map(|_| ()),
    }
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::new("E_IO", ExitClass::Usage, format!("stdout: {e}"))
}

fn parse_variant(name: Option<&str>, default: Variant) -> Result<Variant, CliError> {
    match name {
        None => Ok(default),
        Some(s) => Variant::parse(s).ok_or_else(|| {
            CliError::usage(format!("unknown variant {s:?} (expected theorem1, theorem2 or delay-free)"))
        }),
    }
}

fn validate(file: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let sc = parse_scenario(file)?.scenario;
    writeln!(
        out,
        "ok: {} agents, {} modes, output dimension {}, dt {}, horizon {}",
        sc.n_agents(),
        sc.topology.n_modes(),
        sc.q(),
        fmt_g12(sc.dt),
        fmt_g12(sc.horizon)
    )
    .map_err(stdout_err)
}

fn residual_line(r: &RegulatorResiduals) -> String {
    format!(
        "|BU-AX|={:.3e} |BW-X|={:.3e} |CX-I|={:.3e} max={:.3e}",
        r.bu_ax,
        r.bw_x,
        r.cx_i,
        r.max()
    )
}

fn gains(file: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(file).map_err(|e| CliError::io(file, e))?;
    let raw = ScenarioFile::from_json(&text)?;
    let sc = raw.load()?.scenario;
    for (i, (m, g)) in sc.agents.iter().zip(&sc.gains).enumerate() {
        let at = |e: plant::PlantError| CliError::from(e).at(format!("agent {}", i + 1));
        let solved = plant::solve_regulator(m).map_err(at)?;
        writeln!(out, "agent {} solved {}", i + 1, residual_line(&solved.residuals)).map_err(stdout_err)?;
        if raw.gains[i].u.is_some() {
            let r = plant::regulator_residuals(m, &g.u, &g.w, &g.x).map_err(at)?;
            writeln!(out, "agent {} supplied {}", i + 1, residual_line(&r)).map_err(stdout_err)?;
        }
        writeln!(out, "agent {} max Re(eig(A-BK))={:.6}", i + 1, plant::hurwitz_margin(&m.closed_loop(&g.k)))
            .map_err(stdout_err)?;
    }
    Ok(())
}

fn apply_overrides(sc: &mut Scenario, delay: Option<f64>, horizon: Option<f64>, seed: Option<u64>) -> Result<(), CliError> {
    if let Some(d) = delay {
        sc.delay.dbar = vec![d; sc.n_agents()];
    }
    if let Some(t) = horizon {
        sc.horizon = t;
    }
    if let Some(s) = seed {
        sc.seed = s;
    }
    sc.validate()?;
    Ok(())
}

/// Convergence and residual figures for a finished run.
pub fn summarize(sc: &Scenario, tr: &Trajectory) -> Result<MetricsSummary, CliError> {
    let theta = sc.costs.global_optimum().theta;
    let m = sim::metrics(tr, &theta, CONVERGENCE_TOL)?;
    let a_tilde = sc.a_tilde();
    let res = sim::residual_invariant_report(tr, &a_tilde)?;
    Ok(MetricsSummary {
        theta_star: theta.iter().copied().collect(),
        tol: CONVERGENCE_TOL,
        final_error: m.final_error,
        convergence_time: m.convergence_time,
        residual_max_defect: res.max_defect,
        residual_threshold: res.threshold,
        residual_within_threshold: res.within_threshold,
        xi_tracking_error: sim::xi_tracking_error(tr, &a_tilde)?,
    })
}

fn print_summary(out: &mut dyn Write, m: &MetricsSummary) -> Result<(), CliError> {
    let conv = m.convergence_time.map_or("none".to_string(), fmt_g12);
    writeln!(out, "final_error {}", fmt_g12(m.final_error)).map_err(stdout_err)?;
    writeln!(out, "convergence_time {conv} (tol {})", fmt_g12(m.tol)).map_err(stdout_err)?;
    writeln!(
        out,
        "residual_defect {} threshold {} xi_tracking {}",
        fmt_g12(m.residual_max_defect),
        fmt_g12(m.residual_threshold),
        fmt_g12(m.xi_tracking_error)
    )
    .map_err(stdout_err)
}

fn verdict_error(res: &Feasibility, variant: Variant, dbar: f64) -> Option<CliError> {
    let what = format!("{} LMI at dbar={}", variant.name(), fmt_g12(dbar));
    match res {
        Feasibility::Feasible(_) => None,
        Feasibility::Infeasible(r) => Some(CliError::invalid(
            "E_INFEASIBLE",
            format!("{what} is infeasible (slack lower bound {:.3e})", r.lower_bound),
        )),
        Feasibility::Undecided(r) => Some(CliError::new(
            "E_UNDECIDED",
            ExitClass::Numerical,
            format!("{what} undecided after {} Newton steps (best slack {:.3e})", r.newton_steps, r.best_slack),
        )),
    }
}

fn analyze(
    sc: &Scenario,
    dbar: f64,
    varpi: f64,
    variant: Variant,
    cert_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let data = LmiData::from_scenario(sc, dbar, varpi)?;
    let res = lmi::solve_feasibility(&data, variant, &SolveOptions::default(), None)?;
    let v = LmiVerdict::new(variant.name(), dbar, varpi, &res);
    writeln!(
        out,
        "{} dbar={} varpi={} {} best_slack={}",
        v.variant,
        fmt_g12(dbar),
        fmt_g12(varpi),
        v.verdict,
        v.best_slack.map_or("-".into(), |s| format!("{s:.3e}"))
    )
    .map_err(stdout_err)?;
    if let (Feasibility::Feasible(cert), Some(path)) = (&res, cert_path) {
        std::fs::write(path, lmi::write_certificate(cert)).map_err(|e| CliError::io(path, e))?;
        writeln!(out, "certificate {}", path.display()).map_err(stdout_err)?;
    }
    verdict_error(&res, variant, dbar).map_or(Ok(()), Err)
}

fn margin(sc: &Scenario, d_max: f64, tol: f64, varpi: f64, variant: Variant, out: &mut dyn Write) -> Result<(), CliError> {
    if !(d_max >= 0.0 && d_max.is_finite() && tol > 0.0) {
        return Err(CliError::usage("--dmax must be >= 0 and --tol > 0"));
    }
    let data = LmiData::from_scenario(sc, 0.0, varpi)?;
    let report = lmi::delay_margin(&data, variant, d_max, tol, &SolveOptions::default())?;
    for (d, outcome) in &report.log {
        let label = match outcome {
            ProbeOutcome::Feasible => "feasible",
            ProbeOutcome::Infeasible => "infeasible",
            ProbeOutcome::Undecided => "undecided",
        };
        writeln!(out, "probe dbar={} {label}", fmt_g12(*d)).map_err(stdout_err)?;
    }
    let fail = report.d_fail.map_or("none".into(), fmt_g12);
    writeln!(out, "{} d_star={} d_fail={fail}", variant.name(), fmt_g12(report.d_star)).map_err(stdout_err)
}

/// Runs the built-in study at one delay and writes `scenario.json`,
/// `trajectory.csv`, `report.json` and any certificates into `dir`.
pub fn demo_run(
    delay: f64,
    dir: &Path,
    horizon: Option<f64>,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> Result<RunReport, CliError> {
    if !(delay >= 0.0 && delay.is_finite()) {
        return Err(CliError::usage(format!("--delay must be finite and >= 0, got {delay}")));
    }
    let mut sc = demo::scenario(delay);
    apply_overrides(&mut sc, None, horizon, seed)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;

    let scenario_path = dir.join("scenario.json");
    let analysis = Analysis { d_max: 1.0, ..Analysis::default() };
    let file = ScenarioFile::from_scenario(&sc, &analysis);
    std::fs::write(&scenario_path, file.to_json()).map_err(|e| CliError::io(&scenario_path, e))?;

    let tr = sim::integrate(&sc)?;
    let trajectory_path = dir.join("trajectory.csv");
    emit_trajectory_csv(&tr, &sc.costs.global_optimum().theta, &trajectory_path)?;
    let metrics = summarize(&sc, &tr)?;
    print_summary(out, &metrics)?;

    let data = LmiData::from_scenario(&sc, delay, 0.0)?;
    let mut verdicts = Vec::new();
    let mut certificate_path = None;
    for variant in Variant::ALL {
        let res = lmi::solve_feasibility(&data, variant, &SolveOptions::default(), None)?;
        let v = LmiVerdict::new(variant.name(), delay, 0.0, &res);
        writeln!(out, "lmi {} dbar={} {}", v.variant, fmt_g12(delay), v.verdict).map_err(stdout_err)?;
        if let Feasibility::Feasible(cert) = &res {
            if certificate_path.is_none() {
                let path = dir.join(format!("certificate-{}.txt", variant.name()));
                std::fs::write(&path, lmi::write_certificate(cert)).map_err(|e| CliError::io(&path, e))?;
                certificate_path = Some(path.display().to_string());
            }
        }
        verdicts.push(v);
    }

    let report = RunReport {
        delay,
        dt: sc.dt,
        horizon: sc.horizon,
        seed: sc.seed,
        metrics,
        lmi: verdicts,
        certificate_path,
        trajectory_path: trajectory_path.display().to_string(),
        scenario_path: Some(scenario_path.display().to_string()),
    };
    let report_path = dir.join("report.json");
    report.write(&report_path)?;
    writeln!(out, "report {}", report_path.display()).map_err(stdout_err)?;
    Ok(report)
}
