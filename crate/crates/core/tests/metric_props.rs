mod common;

use common::{chart, close, damped_system, expr, point, polynomial_text, skew, smooth_text};
use metricflow::brackets::{bracket_jacobi_residual, Observable};
use metricflow::dynamics::{IntegratorOptions, VectorFieldSpec};
use metricflow::friction::{analytic_metric, ApplicabilityPolicy, FrictionMatrix, FrictionSystem};
use metricflow::helmholtz::{canonical_helmholtz, classify};
use metricflow::linalg::skew_defect;
use metricflow::phasespace::{determinant_of, jacobi_residual, ExprMatrix};
use metricflow::{Expr, MetricField, MetricSource, PhasePoint};
use proptest::prelude::*;

fn assert_skew(m: &dyn MetricSource, x: &PhasePoint, tol: f64) -> Result<(), TestCaseError> {
    let w = m.eval(x).unwrap();
    prop_assert!(skew_defect(&w) <= tol, "value defect {}", skew_defect(&w));
    for g in m.gradient(x).unwrap() {
        prop_assert!(skew_defect(&g) <= tol);
    }
    prop_assert!(skew_defect(&m.time_derivative(x).unwrap()) <= tol);
    Ok(())
}

/// `ω = canonical + s·dθ` for a polynomial 1-form `θ`.
fn exact_metric(theta: &[String], scale: f64) -> MetricField {
    let theta: Vec<Expr> = theta.iter().map(|t| expr(t)).collect();
    let canonical = metricflow::phasespace::canonical_matrix(2);
    MetricField::from_exprs(ExprMatrix::skew_from_upper(4, |k, l| {
        let d = theta[l].d(k).sub(&theta[k].d(l));
        Expr::constant(canonical[(k, l)]).add(&Expr::constant(scale).mul(&d))
    }))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn constant_metrics_are_skew(w in skew(4), x in point(4)) {
        let m = MetricField::constant(w).unwrap();
        assert_skew(&m, &x, 0.0)?;
    }

    #[test]
    fn expression_metrics_are_skew(
        entries in prop::collection::vec(smooth_text(), 6),
        x in point(4),
    ) {
        let mut it = entries.iter();
        let upper: Vec<Vec<Expr>> = (0..4)
            .map(|k| (0..4).map(|l| if l > k { expr(it.next().unwrap()) } else { Expr::zero() }).collect())
            .collect();
        let m = MetricField::from_exprs(ExprMatrix::skew_from_upper(4, |k, l| upper[k][l].clone()))
            .unwrap();
        assert_skew(&m, &x, 0.0)?;
    }

    #[test]
    fn friction_metrics_are_skew(k in prop::collection::vec(0.0..2.0f64, 2), x in point(4)) {
        let sys = FrictionSystem::new(
            chart(),
            expr("p1^2/2 + p2^2/2 + q1^2/2 + 3*q2^2/2"),
            FrictionMatrix::diagonal_constants(&k),
        )
        .unwrap();
        let m = analytic_metric(&sys, 0.0, ApplicabilityPolicy::Require).unwrap();
        assert_skew(&m, &x, 0.0)?;
    }

    #[test]
    fn transported_metrics_are_skew_with_nonnegative_determinant(
        field in damped_system(true),
        x in point(4),
    ) {
        let m = MetricField::transported(
            MetricField::canonical(2),
            field,
            IntegratorOptions::default(),
        )
        .unwrap();
        assert_skew(&m, &x, 1e-12)?;
        prop_assert!(determinant_of(&m.eval(&x).unwrap()).g > 0.0);
    }

    #[test]
    fn skew_determinant_is_nonnegative(w in skew(4)) {
        let g = determinant_of(&w).g;
        let scale = w.abs().max().powi(4).max(1.0);
        prop_assert!(g >= -1e-12 * scale, "det {}", g);
    }

    #[test]
    fn exact_metrics_give_jacobi_brackets(
        theta in prop::collection::vec(polynomial_text(false), 4),
        observables in prop::collection::vec(smooth_text(), 3),
        x in point(4),
    ) {
        let m = exact_metric(&theta, 0.05);
        let w = m.eval(&x).unwrap();
        prop_assume!(w.norm() < 1e3);
        prop_assume!(determinant_of(&w).g.abs() > 1e-2);
        prop_assert!(jacobi_residual(&m, &x).unwrap() < 1e-9 * (1.0 + w.norm()));
        let o: Vec<Observable> = observables.iter().map(|t| Observable::parse(t, &chart()).unwrap()).collect();
        let r = bracket_jacobi_residual(&o[0], &o[1], &o[2], &m, &x).unwrap();
        let inverse_scale = w.clone().try_inverse().unwrap().norm().powi(2);
        prop_assert!(r.abs() < 1e-8 * (1.0 + inverse_scale * w.norm()), "residual {}", r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn canonical_blocks_match_full_residual(
        components in prop::collection::vec(polynomial_text(false), 4),
        points in prop::collection::vec(point(4), 5),
    ) {
        let c = chart();
        let exprs: Vec<Expr> = components.iter().map(|t| expr(t)).collect();
        let v = VectorFieldSpec::new(c.clone(), exprs.clone()).unwrap();
        let report = classify(&v, &MetricField::canonical(2), &points, 1e-8).unwrap();
        for (x, point_report) in points.iter().zip(&report.points) {
            let blocks = canonical_helmholtz(&c, &exprs[..2], &exprs[2..], x).unwrap();
            let worst = blocks.max_abs().into_iter().fold(0.0f64, f64::max);
            prop_assert!(close(point_report.max_abs, worst, 1e-12), "{} vs {}", point_report.max_abs, worst);
            // the mixed block appears with a sign flip
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!(close(point_report.residual[(i, 2 + j)], -blocks.r2[(i, j)], 1e-12));
                }
            }
        }
    }
}
