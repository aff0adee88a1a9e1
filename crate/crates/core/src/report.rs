//! Tabular output: significant-digit formatting, study-report CSV, and the
//! single-row estimate CSV.

use crate::error::{Error, Result};
use crate::estimator::EstimateResult;
use crate::study::{StudyReport, StudyRow};
use std::io::{BufRead, BufReader, Read, Write};

/// Formats with `sig` significant digits (printf `%g` style): fixed notation
/// in a moderate exponent range, scientific outside it, trailing zeros
/// trimmed.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("exponent value");
    if exp < -4 || exp >= sig as i32 {
        let mantissa = trim_trailing_zeros(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_trailing_zeros(&format!("{:.*}", decimals, x))
    }
}

fn trim_trailing_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub const STUDY_CSV_HEADER: &str = "n,rmse,bias,sd,ci_l,ci_u,width,coverage";

/// Study report as CSV, one row per sample size, six significant digits.
pub fn write_study_csv<W: Write>(report: &StudyReport, mut w: W) -> Result<()> {
    writeln!(w, "{STUDY_CSV_HEADER}")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.n,
            fmt_sig(r.rmse, 6),
            fmt_sig(r.bias, 6),
            fmt_sig(r.sd, 6),
            fmt_sig(r.ci_l, 6),
            fmt_sig(r.ci_u, 6),
            fmt_sig(r.width, 6),
            fmt_sig(r.coverage, 6)
        )?;
    }
    Ok(())
}

pub fn study_csv_string(report: &StudyReport) -> String {
    let mut buf = Vec::new();
    write_study_csv(report, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

/// Reads rows in the study CSV schema (the `rates` command consumes
/// `simulate` output unchanged).
pub fn read_study_rows<R: Read>(reader: R) -> Result<Vec<StudyRow>> {
    let reader = BufReader::new(reader);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Csv("empty file".to_string()))?
        .map_err(Error::Io)?;
    if header.trim() != STUDY_CSV_HEADER {
        return Err(Error::Csv(format!(
            "expected header `{STUDY_CSV_HEADER}`, got `{}`",
            header.trim()
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Csv(format!(
                "row {}: expected 8 fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::Csv(format!("row {}: bad {what} `{s}`", i + 1)))
        };
        rows.push(StudyRow {
            n: fields[0]
                .trim()
                .parse()
                .map_err(|_| Error::Csv(format!("row {}: bad n `{}`", i + 1, fields[0])))?,
            rmse: parse(fields[1], "rmse")?,
            bias: parse(fields[2], "bias")?,
            sd: parse(fields[3], "sd")?,
            ci_l: parse(fields[4], "ci_l")?,
            ci_u: parse(fields[5], "ci_u")?,
            width: parse(fields[6], "width")?,
            coverage: parse(fields[7], "coverage")?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Csv("no data rows".to_string()));
    }
    Ok(rows)
}

pub const ESTIMATE_CSV_HEADER: &str =
    "theta_hat,std_error,ci_lower,ci_upper,level,band_empty,design_rank";

/// Single-row CSV serialization of an estimate.
pub fn estimate_csv_row(result: &EstimateResult) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        fmt_sig(result.theta_hat, 6),
        fmt_sig(result.std_error, 6),
        fmt_sig(result.ci_lower, 6),
        fmt_sig(result.ci_upper, 6),
        fmt_sig(result.level, 6),
        result.diagnostics.band_empty,
        result.diagnostics.design_rank
    )
}
