//! Acceptance run: one PASS/FAIL line per criterion. Exits nonzero when a
//! gated criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use delayopt::graph;
use delayopt::lmi::{self, Feasibility, LmiData, LmiError, ProbeOutcome, SolveOptions, Variant};
use delayopt::markov;
use delayopt::objective::{CostFunction, QuadraticCost};
use delayopt::{demo, linalg, sim};
use delayopt_cli::report::RunReport;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
    /// Reported only; does not decide the exit status.
    gated: bool,
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_delayopt")
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn run_demo(dir: &Path, delay: f64, horizon: Option<f64>) -> (RunReport, Duration) {
    let sub = dir.join(format!("d{delay}-{}", horizon.unwrap_or(demo::HORIZON)));
    let mut cmd = Command::new(bin());
    cmd.args(["demo", "--delay", &delay.to_string(), "--out"]).arg(&sub);
    if let Some(t) = horizon {
        cmd.args(["--horizon", &t.to_string()]);
    }
    let (out, elapsed) = timed(|| cmd.output().expect("binary runs"));
    assert!(out.status.success(), "demo {delay}: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(sub.join("report.json")).expect("report written");
    (serde_json::from_str(&text).expect("report parses"), elapsed)
}

fn regulator(out: &mut Vec<Outcome>) {
    let (res, elapsed) = timed(|| Command::new(bin()).arg("gains").arg(scenario_path("demo.json")).output().unwrap());
    let text = String::from_utf8_lossy(&res.stdout).to_string();
    let max_of = |kind: &str| -> Vec<f64> {
        text.lines()
            .filter(|l| l.contains(kind))
            .map(|l| l.rsplit("max=").next().unwrap().trim().parse().unwrap())
            .collect()
    };
    let solved = max_of(" solved ");
    let supplied = max_of(" supplied ");
    let pass = res.status.success()
        && solved.len() == 3
        && supplied.len() == 3
        && solved.iter().all(|&r| r <= 1e-10)
        && supplied.iter().all(|&r| r <= 1e-12)
        && elapsed < Duration::from_secs(1);
    out.push(Outcome {
        id: "1",
        name: "regulator equations",
        pass,
        detail: format!("solved {solved:?}, supplied {supplied:?}, {elapsed:.2?}"),
        gated: true,
    });
}

fn eig2(m: &DMatrix<f64>) -> (f64, f64) {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = (tr * tr / 4.0 - det).sqrt();
    (tr / 2.0 - disc, tr / 2.0 + disc)
}

fn hurwitz(out: &mut Vec<Outcome>) {
    let agents = demo::agents();
    let gains = demo::gains();
    let closed: Vec<DMatrix<f64>> = agents.iter().zip(&gains).map(|(a, g)| a.closed_loop(&g.k)).collect();
    // worked by hand from B and K
    let hand = [
        DMatrix::from_row_slice(2, 2, &[-4.0, 0.0, 0.0, -5.0]),
        DMatrix::from_row_slice(2, 2, &[-3.0, 0.0, 0.0, -4.0]),
    ];
    let mut pass = true;
    let mut detail = String::new();
    for (i, (expected, spectrum)) in hand.iter().zip([(-5.0, -4.0), (-4.0, -3.0)]).enumerate() {
        let (lo, hi) = eig2(&closed[i]);
        pass &= (&closed[i] - expected).amax() <= 1e-9;
        pass &= (lo - spectrum.0).abs() <= 1e-9 && (hi - spectrum.1).abs() <= 1e-9;
        detail += &format!("agent {}: {{{lo}, {hi}}}; ", i + 1);
    }
    let m3 = closed[2].complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    pass &= m3 < 0.0;
    detail += &format!("agent 3 max Re {m3:.4}");
    out.push(Outcome { id: "2", name: "Hurwitz validation", pass, detail, gated: true });
}

fn optimum(out: &mut Vec<Outcome>) {
    let costs = demo::costs();
    let (opt, elapsed) = timed(|| costs.global_optimum());
    // Σ hᵢθ + gᵢ = 0 for the scalar costs
    let h: f64 = costs.costs().iter().map(|f| f.hessian()[(0, 0)]).sum();
    let g: f64 = costs.costs().iter().map(|f| f.linear()[0]).sum();
    let oracle = -g / h;
    let theta = opt.theta[0];
    let pass = (theta - 2.8).abs() <= 1e-9
        && (oracle - 2.8).abs() <= 1e-9
        && (opt.value - 4.4).abs() <= 1e-9
        && elapsed < Duration::from_millis(100);
    out.push(Outcome {
        id: "3",
        name: "centralized optimum",
        pass,
        detail: format!("theta* {theta}, F_min {}, {elapsed:.2?}", opt.value),
        gated: true,
    });
}

fn simulations(dir: &Path, out: &mut Vec<Outcome>) {
    let (r01, t01) = run_demo(dir, 0.1, None);
    let (r04, _) = run_demo(dir, 0.4, None);
    let (r04_long, _) = run_demo(dir, 0.4, Some(60.0));
    let (r07, _) = run_demo(dir, 0.7, None);

    out.push(Outcome {
        id: "4",
        name: "convergence at delay 0.1",
        pass: r01.metrics.final_error <= 0.05 && t01 < Duration::from_secs(30),
        detail: format!("final error {:.3e}, {t01:.2?}", r01.metrics.final_error),
        gated: true,
    });
    out.push(Outcome {
        id: "5",
        name: "slower convergence at delay 0.4",
        pass: r04.metrics.final_error > r01.metrics.final_error && r04_long.metrics.convergence_time.is_some(),
        detail: format!(
            "error at 10 s {:.3e} vs {:.3e}; converged at {:?} within 60 s",
            r04.metrics.final_error, r01.metrics.final_error, r04_long.metrics.convergence_time
        ),
        gated: true,
    });
    out.push(Outcome {
        id: "6",
        name: "non-convergence at delay 0.7",
        pass: r07.metrics.convergence_time.is_none() && r07.metrics.final_error >= 10.0 * r01.metrics.final_error,
        detail: format!("error at 10 s {:.3e}, ratio {:.1}", r07.metrics.final_error, r07.metrics.final_error / r01.metrics.final_error),
        gated: true,
    });
    let runs = [&r01, &r04, &r07];
    let pass = runs.iter().all(|r| {
        r.metrics.residual_within_threshold && r.metrics.xi_tracking_error <= 1e-3 && r.missing_paths().is_empty()
    });
    let detail = runs
        .iter()
        .map(|r| {
            format!(
                "d={}: defect {:.2e}/{:.2e}, tracking {:.2e}",
                r.delay, r.metrics.residual_max_defect, r.metrics.residual_threshold, r.metrics.xi_tracking_error
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    out.push(Outcome { id: "7", name: "residual invariant", pass, detail, gated: true });
}

fn markov_statistics(out: &mut Vec<Outcome>) {
    let gen = demo::generator();
    let ((path, fractions), elapsed) = timed(|| {
        let path = markov::sample_mode_path(&gen, &demo::INITIAL_MODE_WEIGHTS, 1e4, demo::SEED).unwrap();
        let f = path.occupation_fractions(3);
        (path, f)
    });
    // πᵀΥ = 0 by elimination: columns 1 and 2 give π₁, π₂ in terms of π₃
    let q = gen.rates();
    let det = q[(0, 0)] * q[(1, 1)] - q[(1, 0)] * q[(0, 1)];
    let p1 = (-q[(2, 0)] * q[(1, 1)] + q[(1, 0)] * q[(2, 1)]) / det;
    let p2 = (-q[(0, 0)] * q[(2, 1)] + q[(2, 0)] * q[(0, 1)]) / det;
    let s = p1 + p2 + 1.0;
    let oracle = [p1 / s, p2 / s, 1.0 / s];
    let target = [14.0 / 73.0, 9.0 / 73.0, 50.0 / 73.0];
    let oracle_ok = oracle.iter().zip(&target).all(|(a, b)| (a - b).abs() < 1e-12);
    let worst = fractions.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(Outcome {
        id: "8",
        name: "Markov occupation fractions",
        pass: oracle_ok && worst <= 0.02 && elapsed < Duration::from_secs(5),
        detail: format!(
            "fractions {:?}, worst gap {worst:.4}, {} switches, {elapsed:.2?}",
            fractions.iter().map(|f| (f * 1e4).round() / 1e4).collect::<Vec<_>>(),
            path.modes().len() - 1
        ),
        gated: true,
    });
}

fn lmi_grid(out: &mut Vec<Outcome>) {
    let grid = [0.1, 0.25, 0.4, 0.55, 0.7];
    let opts = SolveOptions::default();
    let mut log = Vec::new();
    let mut sound = true;
    let mut certificates = 0;
    for &d in &grid {
        let data = LmiData::from_scenario(&demo::scenario(d), d, 0.0).unwrap();
        let res = lmi::solve_feasibility(&data, Variant::Theorem1, &opts, None).unwrap();
        if let Feasibility::Feasible(cert) = &res {
            certificates += 1;
            sound &= lmi::check_certificate(&data, cert).passes;
        }
        log.push((d, ProbeOutcome::from(&res)));
    }
    let monotone = lmi::log_is_monotone(&log);
    let data = LmiData::from_scenario(&demo::scenario(0.0), 0.0, 0.0).unwrap();
    let bisection = lmi::delay_margin(&data, Variant::Theorem1, 1.0, 0.01, &opts);
    let bisection_ok = match &bisection {
        Ok(r) => lmi::log_is_monotone(&r.log),
        Err(LmiError::BaseInfeasible) => true,
        Err(_) => false,
    };
    let verdicts: Vec<String> = log.iter().map(|(d, o)| format!("{d}:{o:?}")).collect();
    out.push(Outcome {
        id: "9",
        name: "LMI soundness and monotone log",
        pass: sound && monotone && bisection_ok,
        detail: format!("{certificates} certificates checked; grid {}", verdicts.join(" ")),
        gated: true,
    });
    let at = |d: f64| log.iter().find(|(x, _)| *x == d).map(|(_, o)| *o).unwrap();
    let pattern = at(0.1) == ProbeOutcome::Feasible
        && at(0.4) == ProbeOutcome::Feasible
        && at(0.7) == ProbeOutcome::Infeasible;
    out.push(Outcome {
        id: "9b",
        name: "LMI verdict pattern feasible/feasible/infeasible",
        pass: pattern,
        detail: format!("observed 0.1:{:?} 0.4:{:?} 0.7:{:?}", at(0.1), at(0.4), at(0.7)),
        gated: false,
    });
}

fn property_suites(out: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_grad: f64 = 0.0;
    for _ in 0..100 {
        let m = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-2.0..2.0));
        let f = QuadraticCost::new(
            &m * m.transpose() + DMatrix::identity(3, 3) * 0.5,
            DVector::from_fn(3, |_, _| rng.random_range(-5.0..5.0)),
            rng.random_range(-1.0..1.0),
        )
        .unwrap();
        let th = DVector::from_fn(3, |_, _| rng.random_range(-4.0..4.0));
        let h = 1e-5;
        let fd = DVector::from_fn(3, |k, _| {
            let mut e = DVector::zeros(3);
            e[k] = h;
            (f.value(&(&th + &e)) - f.value(&(&th - &e))) / (2.0 * h)
        });
        let grad = f.gradient(&th);
        worst_grad = worst_grad.max((&fd - &grad).norm() / grad.norm().max(1.0));
    }

    let topo = demo::topology();
    let pi = graph::stationary_weights(&topo).unwrap();
    let lemma1 = (0..1000).all(|_| {
        let raw = DVector::from_fn(3, |_, _| rng.random_range(-10.0..10.0));
        let zeta = &raw - &pi * (pi.dot(&raw) / pi.norm_squared());
        graph::lemma1_check(&topo, &pi, &zeta).unwrap().holds
    });

    let lemma2 = (0..1000).all(|_| {
        let dim = rng.random_range(1..4);
        let c: Vec<DVector<f64>> = (0..4).map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0))).collect();
        let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let r1 = linalg::sym(&(&g * g.transpose() + DMatrix::identity(dim, dim) * 0.1));
        let d_m = rng.random_range(0.05..2.0);
        let d = rng.random_range(0.0..=d_m);
        let t = rng.random_range(-1.0..3.0);
        let z = |s: f64| &c[0] + &c[1] * s + &c[2] * (s * s) + &c[3] * (s * s * s);
        let dz = |s: f64| &c[1] + &c[2] * (2.0 * s) + &c[3] * (3.0 * s * s);
        lmi::lemma2_numeric_check(&r1, z, dz, t, d_m, d, 2000).unwrap().holds
    });

    let finals: Vec<DVector<f64>> = [4e-3, 2e-3, 1e-3]
        .iter()
        .map(|&dt| {
            let mut sc = demo::scenario(0.1);
            sc.horizon = 2.0;
            sc.dt = dt;
            sim::integrate(&sc).unwrap().final_state().clone()
        })
        .collect();
    let ratio = (&finals[0] - &finals[1]).norm() / (&finals[1] - &finals[2]).norm();

    out.push(Outcome {
        id: "10",
        name: "property suites",
        pass: worst_grad < 1e-6 && lemma1 && lemma2 && (12.0..=20.0).contains(&ratio),
        detail: format!("gradient rel err {worst_grad:.2e}, lemma1 {lemma1}, lemma2 {lemma2}, order ratio {ratio:.2}"),
        gated: true,
    });
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut out = Vec::new();
    regulator(&mut out);
    hurwitz(&mut out);
    optimum(&mut out);
    simulations(dir.path(), &mut out);
    markov_statistics(&mut out);
    lmi_grid(&mut out);
    property_suites(&mut out);

    let mut failed = 0;
    for o in &out {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let note = if o.gated { "" } else { " [reported, not gating]" };
        println!("criterion {:>3} {:<48} {verdict}{note}  {}", o.id, o.name, o.detail);
        if o.gated && !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
