use metricflow::brackets::{bracket_jacobi_residual, leibniz_defect, poisson_bracket, Observable};
use metricflow::MetricSource;
use rayon::prelude::*;
use serde::Serialize;

use super::Outcome;
use crate::config::{expression, System};
use crate::error::{exit, CliError};
use crate::output::json;

#[derive(Serialize)]
struct Leibniz {
    closed_form: f64,
    omega_one: f64,
    numerical: f64,
}

#[derive(Serialize)]
struct PointReport {
    point: Vec<f64>,
    time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    jacobi_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    leibniz: Option<Leibniz>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'static str,
    a: &'a str,
    b: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<&'a str>,
    points: Vec<PointReport>,
    warnings: Vec<String>,
}

pub fn run(sys: &System, a: &str, b: &str, c: Option<&str>) -> Result<Outcome, CliError> {
    let dim = sys.dim();
    let observable = |text: &str, field: &str| -> Result<Observable, CliError> {
        Ok(Observable::new(expression(text, &sys.chart, field)?, dim))
    };
    let oa = observable(a, "a")?;
    let ob = observable(b, "b")?;
    let oc = c.map(|c| observable(c, "c")).transpose()?;
    let metric: &dyn MetricSource = &sys.metric;

    let points = sys
        .query_points()
        .par_iter()
        .map(|x| {
            let computed = (|| -> metricflow::Result<PointReport> {
                let value = poisson_bracket(&oa, &ob, metric, x)?;
                let jacobi = match &oc {
                    Some(oc) => Some(bracket_jacobi_residual(&oa, &ob, oc, metric, x)?),
                    None => None,
                };
                let d = leibniz_defect(&oa, &ob, &sys.field, metric, x)?;
                Ok(PointReport {
                    point: x.coords.clone(),
                    time: x.time,
                    value: Some(value),
                    jacobi_residual: jacobi,
                    leibniz: Some(Leibniz {
                        closed_form: d.closed_form,
                        omega_one: d.omega_one,
                        numerical: d.numerical,
                    }),
                    error: None,
                })
            })();
            computed.unwrap_or_else(|e| PointReport {
                point: x.coords.clone(),
                time: x.time,
                value: None,
                jacobi_residual: None,
                leibniz: None,
                error: Some(e.to_string()),
            })
        })
        .collect();

    let report = Report {
        command: "bracket",
        a,
        b,
        c,
        points,
        warnings: sys.metric_warnings.clone(),
    };
    Ok(Outcome {
        text: json(&report),
        code: exit::OK,
    })
}
