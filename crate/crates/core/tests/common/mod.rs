#![allow(dead_code)]

use metricflow::dynamics::VectorFieldSpec;
use metricflow::{parse, CoordinateChart, Expr, PhasePoint};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

pub const NAMES: [&str; 4] = ["q1", "q2", "p1", "p2"];

pub fn chart() -> CoordinateChart {
    CoordinateChart::canonical(2).unwrap()
}

fn coefficient() -> impl Strategy<Value = String> {
    (1u32..40).prop_map(|c| format!("{}", c as f64 / 8.0))
}

fn leaf(with_time: bool) -> impl Strategy<Value = String> {
    let names = if with_time {
        vec!["q1", "q2", "p1", "p2", "t"]
    } else {
        NAMES.to_vec()
    };
    prop_oneof![
        prop::sample::select(names).prop_map(str::to_owned),
        coefficient()
    ]
}

/// Smooth expressions that evaluate everywhere.
pub fn smooth_text() -> impl Strategy<Value = String> {
    leaf(true).prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) + ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) - ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) * ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) / (2 + ({b})^2)")),
            inner.clone().prop_map(|a| format!("-({a})")),
            inner.clone().prop_map(|a| format!("({a})^2")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("tanh({a})")),
            inner.prop_map(|a| format!("exp(tanh({a}))")),
        ]
    })
}

/// Polynomials in the coordinates, written with arbitrary nesting.
pub fn polynomial_text(with_time: bool) -> impl Strategy<Value = String> {
    leaf(with_time).prop_recursive(4, 20, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) + ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) - ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) * ({b})")),
            inner.clone().prop_map(|a| format!("({a}) / 4")),
            inner.prop_map(|a| format!("({a})^3")),
        ]
    })
}

pub fn expr(text: &str) -> Expr {
    parse(text, &chart()).unwrap()
}

pub fn coords(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, dim)
}

pub fn point(dim: usize) -> impl Strategy<Value = PhasePoint> {
    (coords(dim), 0.0..1.0f64).prop_map(|(c, t)| PhasePoint::new(c, t))
}

/// Random skew-symmetric matrix.
pub fn skew(dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, dim * dim).prop_map(move |v| {
        let a = DMatrix::from_vec(dim, dim, v);
        &a - a.transpose()
    })
}

/// Damped 2-DOF system with a random quadratic or quartic potential.
pub fn damped_system(quartic: bool) -> impl Strategy<Value = VectorFieldSpec> {
    (
        prop::collection::vec(0.5..1.5f64, 2),
        -0.4..0.4f64,
        prop::collection::vec(0.0..1.2f64, 2),
    )
        .prop_map(move |(stiff, coupling, k)| {
            let q1 = if quartic { "q1^4/4" } else { "q1^2/2" };
            let h = format!(
                "p1^2/2 + p2^2/2 + {}*{q1} + {}*q2^2/2 + {coupling}*q1*q2",
                stiff[0], stiff[1]
            );
            let km = DMatrix::from_diagonal(&DVector::from_vec(k));
            VectorFieldSpec::from_hamiltonian(chart(), &expr(&h), &km).unwrap()
        })
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
