mod common;

use common::{close, coords, damped_system};
use metricflow::dynamics::{compressibility, integrate_flow, IntegratorOptions};
use metricflow::evolution::{SeriesOptions, SeriesPropagator, SplitPropagator};
use metricflow::phasespace::canonical_matrix;
use metricflow::quadrature::integrate;
use metricflow::{MetricField, MetricSource, PhasePoint};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tangent_maps_compose(
        field in damped_system(true),
        x in coords(4),
        t1 in -1.0..1.0f64,
        t2 in -1.0..1.0f64,
    ) {
        let opts = IntegratorOptions::default();
        let x0 = PhasePoint::new(x, 0.0);
        let first = integrate_flow(&field, &x0, t1, &opts).unwrap();
        let mid = PhasePoint::new(first.end.coords.clone(), 0.0);
        let second = integrate_flow(&field, &mid, t2, &opts).unwrap();
        let whole = integrate_flow(&field, &x0, t1 + t2, &opts).unwrap();
        let composed = &second.tangent * &first.tangent;
        prop_assert!((&composed - &whole.tangent).abs().max() < 1e-7 * (1.0 + whole.tangent.norm()));
        prop_assert!(close(
            first.compressibility_integral + second.compressibility_integral,
            whole.compressibility_integral,
            1e-8,
        ));
    }

    #[test]
    fn tangent_determinant_is_exponential_of_divergence_integral(
        field in damped_system(true),
        x in coords(4),
        t in -1.5..1.5f64,
    ) {
        let seg = integrate_flow(&field, &PhasePoint::new(x, 0.0), t, &IntegratorOptions::default())
            .unwrap();
        let det = seg.tangent.clone().lu().determinant();
        prop_assert!(close(det, seg.compressibility_integral.exp(), 1e-8));
        // independent quadrature of κ along the same trajectory
        let along = |s: f64| {
            let p = integrate_flow(&field, &seg.start, s, &IntegratorOptions::default())?.end;
            compressibility(&field, &p)
        };
        let quad = integrate(along, 0.0, t, 1e-10).unwrap();
        prop_assert!(close(quad, seg.compressibility_integral, 1e-7));
    }

    #[test]
    fn linear_routes_agree(field in damped_system(false), x in coords(4), t in 0.05..1.0f64) {
        let w0 = canonical_matrix(2);
        let x = PhasePoint::new(x, t);
        let series = SeriesPropagator::new(&field, Default::default(), &w0, SeriesOptions::default())
            .unwrap()
            .eval(&x)
            .unwrap();
        let pullback = MetricField::transported(
            MetricField::Constant(w0.clone()),
            field.clone(),
            IntegratorOptions::default(),
        )
        .unwrap()
        .eval(&x)
        .unwrap();
        let split = SplitPropagator::new(&field, &w0, 400, SeriesOptions::default())
            .unwrap()
            .eval(&x)
            .unwrap();
        prop_assert!((&series - &pullback).abs().max() < 1e-7 * (1.0 + series.norm()));
        prop_assert!((&series - &split).abs().max() < 1e-4 * (1.0 + series.norm()));
    }

    #[test]
    fn nonlinear_split_approaches_pullback(field in damped_system(true), x in coords(4), t in 0.05..0.8f64) {
        let w0 = canonical_matrix(2);
        let x = PhasePoint::new(x, t);
        let pullback = MetricField::transported(
            MetricField::Constant(w0.clone()),
            field.clone(),
            IntegratorOptions::default(),
        )
        .unwrap()
        .eval(&x)
        .unwrap();
        let error = |n| {
            let split = SplitPropagator::new(&field, &w0, n, SeriesOptions::default()).unwrap();
            (split.eval(&x).unwrap() - &pullback).abs().max()
        };
        let (coarse, fine) = (error(8), error(32));
        prop_assert!(fine < 1e-3 * (1.0 + pullback.norm()));
        prop_assert!(fine <= coarse / 4.0 || fine < 1e-9, "{} then {}", coarse, fine);
    }
}
