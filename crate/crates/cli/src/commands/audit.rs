use metricflow::dynamics::integrate_flow_sampled;
use metricflow::evolution::invariance_residual;
use metricflow::linalg::max_abs;
use metricflow::phasespace::{jacobi_residual, metric_determinant};
use metricflow::{MetricSource, PhasePoint};
use rayon::prelude::*;
use serde::Serialize;

use super::Outcome;
use crate::config::System;
use crate::error::{exit, CliError};
use crate::output::json;

pub const DETERMINANT_TOLERANCE: f64 = 1e-6;

#[derive(Serialize)]
struct Tolerances {
    invariance: f64,
    jacobi: f64,
    determinant: f64,
}

#[derive(Serialize)]
struct Worst {
    point: Vec<f64>,
    time: f64,
    value: f64,
}

#[derive(Serialize)]
struct Report {
    command: &'static str,
    pass: bool,
    max_invariance_residual: f64,
    max_jacobi_residual: f64,
    /// Largest `|ln √g(x(t), t) − ln √g(x₀, 0) + ∫κ|` over the trajectories.
    max_determinant_discrepancy: f64,
    worst_invariance: Worst,
    tolerances: Tolerances,
    sample_points: usize,
    trajectories: usize,
    trajectory_times: Vec<f64>,
    warnings: Vec<String>,
}

/// Like `f64::max`, but a NaN wins so that a degenerate metric cannot pass.
fn nan_max(acc: f64, v: f64) -> f64 {
    if acc.is_nan() || v.is_nan() {
        f64::NAN
    } else {
        acc.max(v)
    }
}

fn trajectory_times(sys: &System) -> Vec<f64> {
    let mut times: Vec<f64> = sys.t_grid.iter().copied().filter(|t| *t > 0.0).collect();
    if times.is_empty() {
        times = (1..=4).map(|i| sys.t_max * i as f64 / 4.0).collect();
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

pub fn run(sys: &System, tol: f64) -> Result<Outcome, CliError> {
    let dim = sys.dim();
    let metric: &dyn MetricSource = &sys.metric;
    let points = sys.samples.points_in_time(dim, 0.0, sys.t_max);

    let local = points
        .par_iter()
        .map(|x| -> Result<(f64, f64), CliError> {
            let inv = max_abs(&invariance_residual(&sys.field, metric, x)?);
            let jac = jacobi_residual(metric, x)?;
            Ok((inv, jac))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let times = trajectory_times(sys);
    let starts = sys.samples.points(dim, 0.0);
    let discrepancies = starts
        .par_iter()
        .map(|x0| -> Result<f64, CliError> {
            let base = metric_determinant(metric, x0)?.sqrt_g.ln();
            let flow = integrate_flow_sampled(&sys.field, x0, &times, &sys.integrator)?;
            let mut worst = 0.0f64;
            for s in &flow.samples {
                let here = metric_determinant(metric, &s.point)?.sqrt_g.ln();
                worst = nan_max(worst, (here - base + s.compressibility_integral).abs());
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let max_inv = local.iter().fold(0.0f64, |acc, &(i, _)| nan_max(acc, i));
    let worst_index = local
        .iter()
        .position(|&(i, _)| i == max_inv || i.is_nan())
        .unwrap_or(0);
    let max_jac = local.iter().fold(0.0f64, |acc, &(_, j)| nan_max(acc, j));
    let max_det = discrepancies.iter().fold(0.0f64, |acc, &d| nan_max(acc, d));
    let pass = max_inv < tol && max_jac < tol && max_det < DETERMINANT_TOLERANCE;

    let worst_point: &PhasePoint = &points[worst_index];
    let report = Report {
        command: "audit",
        pass,
        max_invariance_residual: max_inv,
        max_jacobi_residual: max_jac,
        max_determinant_discrepancy: max_det,
        worst_invariance: Worst {
            point: worst_point.coords.clone(),
            time: worst_point.time,
            value: max_inv,
        },
        tolerances: Tolerances {
            invariance: tol,
            jacobi: tol,
            determinant: DETERMINANT_TOLERANCE,
        },
        sample_points: points.len(),
        trajectories: starts.len(),
        trajectory_times: times,
        warnings: sys.metric_warnings.clone(),
    };
    Ok(Outcome {
        text: json(&report),
        code: if pass { exit::OK } else { exit::AUDIT_FAILED },
    })
}
