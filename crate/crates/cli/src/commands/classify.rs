use metricflow::helmholtz::{classify, Verdict};
use serde::Serialize;

use super::Outcome;
use crate::config::System;
use crate::error::{exit, CliError};
use crate::output::{json, rows};

#[derive(Serialize)]
struct PointReport {
    point: Vec<f64>,
    time: f64,
    max_abs: f64,
    residual: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Report {
    command: &'static str,
    verdict: &'static str,
    tolerance: f64,
    max_abs: f64,
    /// Maxima of the three canonical block conditions, for the canonical metric.
    canonical_blocks: Option<[f64; 3]>,
    warnings: Vec<String>,
    points: Vec<PointReport>,
}

pub fn run(sys: &System, tol: f64) -> Result<Outcome, CliError> {
    let mut points = sys.samples.points(sys.dim(), 0.0);
    points.extend(sys.queries.iter().cloned());
    let report = classify(&sys.field, &sys.metric, &points, tol)?;
    let code = match report.verdict {
        Verdict::Hamiltonian => exit::OK,
        Verdict::NonHamiltonian => exit::NON_HAMILTONIAN,
    };
    let mut warnings = sys.metric_warnings.clone();
    warnings.extend(report.warnings);
    let body = Report {
        command: "classify",
        verdict: report.verdict.as_str(),
        tolerance: report.tolerance,
        max_abs: report.max_abs,
        canonical_blocks: report.canonical_max,
        warnings,
        points: report
            .points
            .into_iter()
            .map(|p| PointReport {
                point: p.point.coords.clone(),
                time: p.point.time,
                max_abs: p.max_abs,
                residual: rows(&p.residual),
            })
            .collect(),
    };
    Ok(Outcome {
        text: json(&body),
        code,
    })
}
