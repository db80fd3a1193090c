//! Trajectory CSV: `t,mode,y_<i>...,err_<i>...,xi_norm`, modes 1-based.
//! Vector outputs get one column per component, `y_<i>_<k>`.

use std::fmt::Write as _;
use std::path::Path;

use delayopt::sim::Trajectory;
use nalgebra::DVector;

use crate::error::{CliError, ExitClass};

/// C's `%.12g`.
pub fn fmt_g12(v: f64) -> String {
    const P: i32 = 12;
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..P).contains(&exp) {
        trim_zeros(format!("{:.*}", (P - 1 - exp) as usize, v))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Renders the CSV text. The same trajectory always gives the same bytes.
pub fn trajectory_csv(tr: &Trajectory, theta_star: &DVector<f64>) -> Result<String, CliError> {
    if tr.is_empty() {
        return Err(CliError::new("E_EMPTY", ExitClass::Numerical, "trajectory has no grid points"));
    }
    let (n, q) = (tr.n_agents(), tr.q());
    let mut out = String::from("t,mode");
    for i in 1..=n {
        if q == 1 {
            write!(out, ",y_{i}").unwrap();
        } else {
            for k in 1..=q {
                write!(out, ",y_{i}_{k}").unwrap();
            }
        }
    }
    for i in 1..=n {
        write!(out, ",err_{i}").unwrap();
    }
    out.push_str(",xi_norm\n");
    for k in 0..tr.len() {
        write!(out, "{},{}", fmt_g12(tr.times[k]), tr.modes[k] + 1).unwrap();
        let ys: Vec<DVector<f64>> = (0..n).map(|i| tr.y(k, i)).collect();
        for y in &ys {
            for v in y.iter() {
                write!(out, ",{}", fmt_g12(*v)).unwrap();
            }
        }
        for y in &ys {
            write!(out, ",{}", fmt_g12((y - theta_star).norm())).unwrap();
        }
        writeln!(out, ",{}", fmt_g12(tr.xi(k).norm())).unwrap();
    }
    Ok(out)
}

pub fn emit_trajectory_csv(tr: &Trajectory, theta_star: &DVector<f64>, path: &Path) -> Result<(), CliError> {
    let text = trajectory_csv(tr, theta_star)?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use delayopt::demo;

    #[test]
    fn general_format() {
        let cases = [
            (1.0, "1"),
            (0.1, "0.1"),
            (2.8, "2.8"),
            (-0.0001234, "-0.0001234"),
            (0.00001234, "1.234e-05"),
            (123456789012.0, "123456789012"),
            (1234567890123.0, "1.23456789012e+12"),
            (1.0 / 3.0, "0.333333333333"),
            (0.999999999999951, "1"),
            (1e100, "1e+100"),
        ];
        for (v, s) in cases {
            assert_eq!(fmt_g12(v), s, "{v}");
        }
    }

    #[test]
    fn demo_header_and_rows() {
        let mut sc = demo::scenario(0.1);
        sc.horizon = 0.01;
        let tr = delayopt::sim::integrate(&sc).unwrap();
        let text = trajectory_csv(&tr, &DVector::from_element(1, demo::THETA_STAR)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,mode,y_1,y_2,y_3,err_1,err_2,err_3,xi_norm");
        assert_eq!(lines.count(), tr.len());
        assert!(!text.contains('\r'));
        assert_eq!(text, trajectory_csv(&tr, &DVector::from_element(1, demo::THETA_STAR)).unwrap());
    }

    #[test]
    fn empty_trajectory_is_rejected() {
        let mut sc = demo::scenario(0.1);
        sc.horizon = 0.01;
        let mut tr = delayopt::sim::integrate(&sc).unwrap();
        tr.times.clear();
        tr.modes.clear();
        tr.states.clear();
        tr.inputs.clear();
        assert_eq!(trajectory_csv(&tr, &DVector::zeros(1)).unwrap_err().code, "E_EMPTY");
    }
}
