use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::blocks::{assemble_variant, DecisionVars, LmiData, MatrixName, Variant};
use super::LmiError;
use crate::linalg;

/// Decision matrices claimed to satisfy the test, with the numbers needed to
/// re-verify them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityCertificate {
    pub vars: DecisionVars,
    pub variant: Variant,
    pub dbar: f64,
    pub varpi: f64,
    pub mu: f64,
    /// `λ_max(Π_p)` per mode at issue time.
    pub lambda_max: Vec<f64>,
}

impl FeasibilityCertificate {
    pub fn new(data: &LmiData, vars: DecisionVars, variant: Variant, mu: f64) -> Self {
        let lambda_max = (0..data.n_modes())
            .map(|p| assemble_variant(data, &vars, p, variant).map(|m| linalg::lambda_max(&m)).unwrap_or(f64::NAN))
            .collect();
        Self { vars, variant, dbar: data.dbar, varpi: data.varpi, mu, lambda_max }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateCheck {
    /// `λ_max(Π_p)` recomputed from scratch.
    pub lambda_max: Vec<f64>,
    /// `λ_min` of each active decision matrix.
    pub lambda_min: Vec<(MatrixName, f64)>,
    /// Modes whose matrix is not below `−μ/2`.
    pub failing_modes: Vec<usize>,
    /// Decision matrices not above `μ/2`.
    pub failing_matrices: Vec<MatrixName>,
    pub passes: bool,
}

/// Re-assembles every mode matrix from `data` (which may differ from the
/// issuing data) and checks all strict signs with margin `μ/2`, using a
/// symmetric eigen-decomposition rather than the solver's factorizations.
pub fn check_certificate(data: &LmiData, cert: &FeasibilityCertificate) -> CertificateCheck {
    let half = cert.mu / 2.0;
    let lambda_max: Vec<f64> = (0..data.n_modes())
        .map(|p| match assemble_variant(data, &cert.vars, p, cert.variant) {
            Ok(m) if m.iter().all(|v| v.is_finite()) => linalg::lambda_max(&m),
            _ => f64::INFINITY,
        })
        .collect();
    let lambda_min: Vec<(MatrixName, f64)> = cert
        .variant
        .active()
        .iter()
        .map(|&name| {
            let m = cert.vars.get(name);
            let v = if linalg::is_symmetric(m, 1e-12) { linalg::lambda_min(m) } else { f64::NEG_INFINITY };
            (name, v)
        })
        .collect();
    let failing_modes: Vec<usize> = lambda_max.iter().enumerate().filter(|(_, &l)| !(l <= -half)).map(|(p, _)| p).collect();
    let failing_matrices: Vec<MatrixName> = lambda_min.iter().filter(|(_, l)| !(*l >= half)).map(|(n, _)| *n).collect();
    let passes = failing_modes.is_empty() && failing_matrices.is_empty();
    CertificateCheck { lambda_max, lambda_min, failing_modes, failing_matrices, passes }
}

/// Plain-text export: header fields, every decision matrix row-major in
/// full symmetric storage, then the per-mode `λ_max` values.
pub fn write_certificate(cert: &FeasibilityCertificate) -> String {
    let mut s = String::new();
    writeln!(s, "delayopt-certificate 1").unwrap();
    writeln!(s, "variant {}", cert.variant.name()).unwrap();
    writeln!(s, "dbar {:e}", cert.dbar).unwrap();
    writeln!(s, "varpi {:e}", cert.varpi).unwrap();
    writeln!(s, "mu {:e}", cert.mu).unwrap();
    for name in MatrixName::ALL {
        let m = cert.vars.get(name);
        writeln!(s, "matrix {} {}", name.label(), m.nrows()).unwrap();
        for r in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:e}", m[(r, c)])).collect();
            writeln!(s, "{}", row.join(" ")).unwrap();
        }
    }
    let lm: Vec<String> = cert.lambda_max.iter().map(|v| format!("{v:e}")).collect();
    writeln!(s, "lambda_max {}", lm.join(" ")).unwrap();
    s
}

struct Reader<'a> {
    lines: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
}

fn perr(line: usize, message: impl Into<String>) -> LmiError {
    LmiError::Parse { line, message: message.into() }
}

fn num(line: usize, tok: &str) -> Result<f64, LmiError> {
    tok.parse::<f64>().map_err(|_| perr(line, format!("bad number {tok:?}")))
}

impl<'a> Reader<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), LmiError> {
        self.lines.next().ok_or_else(|| perr(0, format!("unexpected end, expected {what}")))
    }

    fn field(&mut self, key: &str) -> Result<(usize, &'a str), LmiError> {
        let (ln, l) = self.next(key)?;
        let rest = l
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| perr(ln, format!("expected {key}")))?;
        Ok((ln, rest))
    }

    fn number(&mut self, key: &str) -> Result<f64, LmiError> {
        let (ln, v) = self.field(key)?;
        num(ln, v)
    }
}

pub fn parse_certificate(text: &str) -> Result<FeasibilityCertificate, LmiError> {
    let mut rd = Reader {
        lines: Box::new(text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty())),
    };
    let (ln, l) = rd.next("header")?;
    if l != "delayopt-certificate 1" {
        return Err(perr(ln, "unknown header"));
    }
    let (ln, v) = rd.field("variant")?;
    let variant = Variant::parse(v).ok_or_else(|| perr(ln, "unknown variant"))?;
    let dbar = rd.number("dbar")?;
    let varpi = rd.number("varpi")?;
    let mu = rd.number("mu")?;
    let mut vars: Option<DecisionVars> = None;
    for expected in MatrixName::ALL {
        let (ln, v) = rd.field("matrix")?;
        let mut it = v.split_whitespace();
        let name = it.next().and_then(MatrixName::parse).ok_or_else(|| perr(ln, "bad matrix name"))?;
        if name != expected {
            return Err(perr(ln, format!("expected matrix {}", expected.label())));
        }
        let size: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| perr(ln, "bad matrix size"))?;
        let mut m = DMatrix::zeros(size, size);
        for r in 0..size {
            let (ln, row) = rd.next("matrix row")?;
            let vals = row.split_whitespace().map(|t| num(ln, t)).collect::<Result<Vec<_>, _>>()?;
            if vals.len() != size {
                return Err(perr(ln, "row length differs from matrix size"));
            }
            for (c, v) in vals.into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        let vs = vars.get_or_insert_with(|| DecisionVars::zeros(size));
        if vs.size() != size {
            return Err(perr(ln, "matrix sizes differ"));
        }
        vs.set(name, m);
    }
    let (ln, v) = rd.field("lambda_max")?;
    let lambda_max = v.split_whitespace().map(|t| num(ln, t)).collect::<Result<Vec<_>, _>>()?;
    Ok(FeasibilityCertificate { vars: vars.expect("seven matrices read"), variant, dbar, varpi, mu, lambda_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    /// A one-agent, one-mode instance small enough that feasibility can be
    /// arranged by hand: empty graph, tiny `l_max`.
    pub(crate) fn tiny_data(dbar: f64) -> LmiData {
        LmiData::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            vec![DMatrix::zeros(1, 1)],
            1,
            1.0,
            1.0,
            dbar,
            0.0,
            1.0,
            DVector::from_element(1, 1.0),
        )
        .unwrap()
    }

    fn sample_cert() -> FeasibilityCertificate {
        let data = tiny_data(0.2);
        let mut vars = DecisionVars::identity(1);
        vars.set(MatrixName::Q3, DMatrix::from_element(1, 1, 0.25));
        FeasibilityCertificate::new(&data, vars, Variant::Theorem1, 1e-6)
    }

    #[test]
    fn text_round_trip() {
        let cert = sample_cert();
        let text = write_certificate(&cert);
        let back = parse_certificate(&text).unwrap();
        assert_eq!(back, cert);
    }

    #[test]
    fn parse_reports_line() {
        let text = write_certificate(&sample_cert()).replace("dbar", "dbr");
        assert!(matches!(parse_certificate(&text), Err(LmiError::Parse { line: 3, .. })));
    }

    #[test]
    fn zeroed_matrix_fails_check() {
        let data = tiny_data(0.2);
        let mut cert = sample_cert();
        cert.vars.set(MatrixName::P4, DMatrix::zeros(1, 1));
        let report = check_certificate(&data, &cert);
        assert!(!report.passes);
        assert!(report.failing_matrices.contains(&MatrixName::P4));
    }
}
