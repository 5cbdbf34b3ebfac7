use metricflow::evolution::{invariance_residual, SeriesPropagator, SplitPropagator};
use metricflow::linalg::{max_abs, upper_pairs};
use metricflow::phasespace::{canonical_matrix, determinant_of, jacobi_residual};
use metricflow::{dynamics::FieldPart, MetricField, MetricSource, PhasePoint};
use nalgebra::DMatrix;
use rayon::prelude::*;

use super::Outcome;
use crate::config::{MetricKind, System};
use crate::error::{exit, CliError};
use crate::output::number;

enum Route {
    Analytic {
        metric: MetricField,
        warnings: Vec<String>,
    },
    Series(SeriesPropagator),
    Split(SplitPropagator),
    Pullback(MetricField),
}

impl Route {
    fn name(&self) -> &'static str {
        match self {
            Route::Analytic { .. } => "analytic",
            Route::Series(_) => "series",
            Route::Split(_) => "split",
            Route::Pullback(_) => "pullback",
        }
    }

    fn source(&self) -> &dyn MetricSource {
        match self {
            Route::Analytic { metric, .. } | Route::Pullback(metric) => metric,
            Route::Series(p) => p,
            Route::Split(p) => p,
        }
    }

    fn evaluate(&self, x: &PhasePoint) -> Result<(DMatrix<f64>, Vec<String>), CliError> {
        Ok(match self {
            Route::Analytic { metric, warnings } => (metric.eval(x)?, warnings.clone()),
            Route::Series(p) => {
                let r = p.propagate(&x.coords, x.time)?;
                (r.matrix, r.warning.into_iter().collect())
            }
            Route::Split(p) => {
                let r = p.propagate(&x.coords, x.time)?;
                (r.matrix, r.warnings)
            }
            Route::Pullback(metric) => (metric.eval(x)?, Vec::new()),
        })
    }
}

struct Row {
    t: f64,
    method: &'static str,
    entries: Vec<f64>,
    sqrt_g: f64,
    jacobi: f64,
    invariance: f64,
    warning: String,
}

/// Initial metric as a constant matrix, when it is one.
fn initial_constant(sys: &System) -> Option<DMatrix<f64>> {
    match (&sys.metric_kind, &sys.metric) {
        (MetricKind::FrictionAnalytic, _) => Some(canonical_matrix(sys.chart.n())),
        (_, MetricField::Constant(m)) => Some(m.clone()),
        _ => None,
    }
}

fn routes(sys: &System) -> Result<Vec<Route>, CliError> {
    let w0 = initial_constant(sys);
    let canonical_start = w0
        .as_ref()
        .is_some_and(|w| *w == canonical_matrix(sys.chart.n()));
    let mut out = Vec::new();
    if let (Some(fs), true) = (&sys.friction, canonical_start) {
        let metric = match sys.metric_kind {
            MetricKind::FrictionAnalytic => sys.metric.clone(),
            _ => metricflow::friction::analytic_metric(
                fs,
                0.0,
                metricflow::friction::ApplicabilityPolicy::Acknowledge,
            )?,
        };
        let warnings = metricflow::friction::applicability_check(fs).messages();
        out.push(Route::Analytic { metric, warnings });
    }
    if let Some(w0) = &w0 {
        out.push(Route::Series(SeriesPropagator::new(
            &sys.field,
            FieldPart::All,
            w0,
            sys.series,
        )?));
        if sys.field.has_split() {
            out.push(Route::Split(SplitPropagator::new(
                &sys.field, w0, sys.steps, sys.series,
            )?));
        }
    }
    let m0 = match &w0 {
        Some(w) => MetricField::Constant(w.clone()),
        None => sys.metric.clone(),
    };
    out.push(Route::Pullback(MetricField::transported(
        m0,
        sys.field.clone(),
        sys.integrator,
    )?));
    Ok(out)
}

fn column_name(k: usize, l: usize, dim: usize) -> String {
    if dim < 10 {
        format!("w_{}{}", k + 1, l + 1)
    } else {
        format!("w_{}_{}", k + 1, l + 1)
    }
}

pub fn run(sys: &System) -> Result<Outcome, CliError> {
    let dim = sys.dim();
    let origin = sys
        .queries
        .first()
        .map(|q| q.coords.clone())
        .unwrap_or_else(|| vec![0.0; dim]);
    let routes = routes(sys)?;
    let pairs = upper_pairs(dim);
    let jobs: Vec<(f64, &Route)> = sys
        .t_grid
        .iter()
        .flat_map(|&t| routes.iter().map(move |r| (t, r)))
        .collect();

    let rows = jobs
        .par_iter()
        .map(|&(t, route)| -> Result<Row, CliError> {
            let x = PhasePoint::new(origin.clone(), t);
            let (w, warnings) = route.evaluate(&x)?;
            let source = route.source();
            Ok(Row {
                t,
                method: route.name(),
                entries: pairs.iter().map(|&(k, l)| w[(k, l)]).collect(),
                sqrt_g: determinant_of(&w).sqrt_g,
                jacobi: jacobi_residual(source, &x)?,
                invariance: max_abs(&invariance_residual(&sys.field, source, &x)?),
                warning: warnings.join("; "),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["t".to_string(), "method".to_string()];
    header.extend(pairs.iter().map(|&(k, l)| column_name(k, l, dim)));
    header.extend(
        [
            "sqrt_g",
            "jacobi_residual",
            "invariance_residual",
            "warning",
        ]
        .map(String::from),
    );
    let csv_err = |e: csv::Error| CliError::Write {
        path: "<csv>".into(),
        source: e.into(),
    };
    writer.write_record(&header).map_err(csv_err)?;
    for row in &rows {
        let mut record = vec![number(row.t), row.method.to_string()];
        record.extend(row.entries.iter().map(|&v| number(v)));
        record.extend([row.sqrt_g, row.jacobi, row.invariance].map(number));
        record.push(row.warning.clone());
        writer.write_record(&record).map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::Write {
        path: "<csv>".into(),
        source: e.into_error(),
    })?;
    Ok(Outcome {
        text: String::from_utf8(bytes).expect("csv output is UTF-8"),
        code: exit::OK,
    })
}
