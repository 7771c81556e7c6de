use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{EnsembleSummary, ExperimentError};

pub const CSV_HEADER: [&str; 10] = [
    "run_id",
    "scenario",
    "controller",
    "displacement",
    "burden_displacement",
    "paths_ok",
    "floor_ok",
    "capacity_ok",
    "burden_ok",
    "classification",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

/// `%.9g`: nine significant digits, trailing zeros dropped, exponent form
/// outside `[1e-4, 1e9)`.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes `summary` to `dest`. Failed members appear in CSV with empty
/// numeric and verdict cells and classification `Error`.
pub fn emit_report<W: Write>(summary: &EnsembleSummary, format: ReportFormat, mut dest: W) -> Result<(), ExperimentError> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut dest, summary)?;
            dest.write_all(b"\n")?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut dest);
            w.write_record(CSV_HEADER)?;
            for run in &summary.runs {
                let mut row = vec![run.run_id.to_string(), run.scenario.clone(), run.controller.clone()];
                match &run.report {
                    Some(r) => {
                        let v = r.constraint_verdicts;
                        row.extend([
                            fmt_sig9(r.displacement),
                            fmt_sig9(r.burden_displacement),
                            v.paths_ok.to_string(),
                            v.floor_ok.to_string(),
                            v.capacity_ok.to_string(),
                            v.burden_ok.to_string(),
                            r.classification.as_str().to_string(),
                        ]);
                    }
                    None => {
                        row.extend(std::iter::repeat_n(String::new(), 6));
                        row.push("Error".into());
                    }
                }
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    dest.flush()?;
    Ok(())
}
