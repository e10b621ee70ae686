//! Output assembly: every artifact is a UTF-8, LF-terminated, `#`-commented
//! header followed by one comma-separated header line and data records.
//! Floats carry 17 significant digits so a reader can reconstruct the exact
//! doubles; whole files are built in memory and written once.

use crate::config::RunConfig;
use crate::error::CliError;
use ngcma::strategies::TraceRecord;
use std::path::Path;

/// 17 significant digits: enough to round-trip any double exactly.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// The resolved config as `#`-prefixed comment lines.
pub fn config_comment(cfg: &RunConfig) -> Result<String, CliError> {
    let toml = cfg.to_toml()?;
    let mut out = String::from("# resolved configuration:\n");
    for line in toml.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    Ok(out)
}

/// Column header for a trace of the given dimension.
pub fn trace_header(dim: usize) -> String {
    let mut cols = vec!["iteration".to_owned(), "evaluations".to_owned()];
    cols.push("best_f".to_owned());
    for k in 0..dim {
        cols.push(format!("mean_{k}"));
    }
    cols.extend(
        ["sigma", "eig_min", "eig_max", "j_estimate"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols.join(",")
}

/// A full trace file: commented resolved config, column header, one record
/// per iteration.
pub fn trace_file(cfg: &RunConfig, trace: &[TraceRecord<f64>]) -> Result<String, CliError> {
    let dim = cfg.problem.dimension;
    let mut out = config_comment(cfg)?;
    out.push_str(&trace_header(dim));
    out.push('\n');
    for rec in trace {
        let mut fields = vec![rec.iteration.to_string(), rec.evaluations.to_string()];
        fields.push(fmt17(rec.best_f));
        for k in 0..dim {
            fields.push(fmt17(rec.mean[k]));
        }
        fields.push(fmt17(rec.sigma));
        fields.push(fmt17(rec.eig_min));
        fields.push(fmt17(rec.eig_max));
        fields.push(fmt17(rec.j_estimate));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// One validation case: an expected/actual pair under a tolerance.
#[derive(Debug, Clone)]
pub struct CaseRow {
    pub case: String,
    pub quantity: String,
    pub expected: f64,
    pub actual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CaseRow {
    /// Judges `actual` against `expected` within `tolerance` (absolute).
    pub fn check(
        case: impl Into<String>,
        quantity: impl Into<String>,
        expected: f64,
        actual: f64,
        tolerance: f64,
    ) -> Self {
        let pass = (actual - expected).abs() <= tolerance;
        Self {
            case: case.into(),
            quantity: quantity.into(),
            expected,
            actual,
            tolerance,
            pass,
        }
    }
}

pub const REPORT_HEADER: &str = "case,quantity,expected,actual,tolerance,pass";

/// A validation report: commented preamble, column header, one line per
/// case in case-id order.
pub fn report_file(comments: &[String], rows: &[CaseRow]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.case,
            r.quantity,
            fmt17(r.expected),
            fmt17(r.actual),
            fmt17(r.tolerance),
            u8::from(r.pass)
        ));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for &x in &[0.1, -1.0 / 3.0, 2.0_f64.sqrt(), 1e-300, -0.0, 123456.789] {
            let text = fmt17(x);
            let back: f64 = text.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{text}");
        }
    }

    #[test]
    fn trace_header_is_pinned() {
        assert_eq!(
            trace_header(2),
            "iteration,evaluations,best_f,mean_0,mean_1,sigma,eig_min,eig_max,j_estimate"
        );
    }

    #[test]
    fn case_rows_judge_tolerances() {
        assert!(CaseRow::check("a", "q", 1.0, 1.0 + 5e-9, 1e-8).pass);
        assert!(!CaseRow::check("a", "q", 1.0, 1.0 + 2e-8, 1e-8).pass);
    }
}
