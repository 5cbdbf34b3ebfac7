//! Generalized Poisson brackets `{A, B} = P^{kl} ∂_k A ∂_l B` with the
//! Poisson tensor `P = −ω⁻¹`, so that `{q^i, p^j} = δ^{ij}` for the
//! canonical metric.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{eval_field, integrate_flow, IntegratorOptions, VectorFieldSpec};
use crate::exprlang::{parse, CoordinateChart, Expr};
use crate::phasespace::{invert_metric, MetricSource, PhasePoint};
use crate::{Error, Result};

/// A scalar function of the coordinates and `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    expr: Expr,
    dim: usize,
    gradient: Vec<Expr>,
}

impl Observable {
    pub fn new(expr: Expr, dim: usize) -> Self {
        let gradient = expr.gradient(dim);
        Self {
            expr,
            dim,
            gradient,
        }
    }

    pub fn parse(text: &str, chart: &CoordinateChart) -> Result<Self> {
        Ok(Self::new(parse(text, chart)?, chart.dim()))
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn value(&self, x: &PhasePoint) -> Result<f64> {
        Ok(self.expr.eval_at(x)?)
    }

    pub fn grad_at(&self, x: &PhasePoint) -> Result<DVector<f64>> {
        let values = self
            .gradient
            .iter()
            .map(|e| e.eval_at(x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DVector::from_vec(values))
    }

    fn hessian_at(&self, x: &PhasePoint) -> Result<DMatrix<f64>> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for k in 0..self.dim {
            for l in k..self.dim {
                let v = self.gradient[k].d(l).eval_at(x)?;
                h[(k, l)] = v;
                h[(l, k)] = v;
            }
        }
        Ok(h)
    }

    /// `Ȧ = ∂_t A + X^k ∂_k A`.
    pub fn along(&self, v: &VectorFieldSpec) -> Observable {
        let terms: Vec<Expr> = (0..self.dim)
            .map(|k| v.component(k).mul(&self.gradient[k]))
            .chain(std::iter::once(self.expr.dt()))
            .collect();
        Observable::new(Expr::sum(&terms), self.dim)
    }

    fn check(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.dim,
            });
        }
        Ok(())
    }
}

/// `P = −ω⁻¹` at `x`.
pub fn poisson_tensor(m: &dyn MetricSource, x: &PhasePoint) -> Result<DMatrix<f64>> {
    Ok(-invert_metric(&m.eval(x)?)?)
}

pub fn poisson_bracket(
    a: &Observable,
    b: &Observable,
    m: &dyn MetricSource,
    x: &PhasePoint,
) -> Result<f64> {
    a.check(m.dim())?;
    b.check(m.dim())?;
    let p = poisson_tensor(m, x)?;
    Ok(a.grad_at(x)?.dot(&(p * b.grad_at(x)?)))
}

/// `∂_j {B, C}` from the metric gradient, `∂_j P = P (∂_j ω) P`.
fn bracket_gradient(
    b: &Observable,
    c: &Observable,
    p: &DMatrix<f64>,
    metric_grad: &[DMatrix<f64>],
    x: &PhasePoint,
) -> Result<DVector<f64>> {
    let gb = b.grad_at(x)?;
    let gc = c.grad_at(x)?;
    let hb = b.hessian_at(x)?;
    let hc = c.hessian_at(x)?;
    let p_gc = p * &gc;
    let gb_p = p.transpose() * &gb;
    let mut out = &hb * &p_gc + &hc * &gb_p;
    for (j, dw) in metric_grad.iter().enumerate() {
        let dp = p * dw * p;
        out[j] += gb.dot(&(dp * &gc));
    }
    Ok(out)
}

/// `{A, {B, C}} + {B, {C, A}} + {C, {A, B}}` at `x`.
pub fn bracket_jacobi_residual(
    a: &Observable,
    b: &Observable,
    c: &Observable,
    m: &dyn MetricSource,
    x: &PhasePoint,
) -> Result<f64> {
    for o in [a, b, c] {
        o.check(m.dim())?;
    }
    let p = poisson_tensor(m, x)?;
    let grad = m.gradient(x)?;
    let mut total = 0.0;
    for (outer, first, second) in [(a, b, c), (b, c, a), (c, a, b)] {
        let inner = bracket_gradient(first, second, &p, &grad, x)?;
        total += outer.grad_at(x)?.dot(&(&p * inner));
    }
    Ok(total)
}

/// Failure of `d/dt{A,B} = {Ȧ,B} + {A,Ḃ}` along the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeibnizDefect {
    /// `∂A · D · ∂B` with `D = P(∂_t ω + X^j ∂_j ω)P − (∂X)P − P(∂X)ᵀ`.
    pub closed_form: f64,
    /// `ω_(1)^{kl} ∂_k A ∂_l B` with `ω_(1)^{kl} = ω^{km} ω^{ls}(∂_s X_m − ∂_m X_s)`,
    /// `X_m = ω_mn X^n` and `ω^{kl}` the matrix inverse. Meaningful for static
    /// closed metrics, where it equals `−closed_form`.
    pub omega_one: f64,
    /// Central difference of `{A,B}` along the trajectory minus
    /// `{Ȧ,B} + {A,Ḃ}`.
    pub numerical: f64,
}

pub fn leibniz_defect(
    a: &Observable,
    b: &Observable,
    v: &VectorFieldSpec,
    m: &dyn MetricSource,
    x: &PhasePoint,
) -> Result<LeibnizDefect> {
    let dim = m.dim();
    a.check(dim)?;
    b.check(dim)?;
    if v.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.dim(),
        });
    }
    let w = m.eval(x)?;
    let p = -invert_metric(&w)?;
    let grad = m.gradient(x)?;
    let field = eval_field(v, x)?;
    let jac = v.jacobian_at(&x.coords)?;
    let ga = a.grad_at(x)?;
    let gb = b.grad_at(x)?;

    let mut rate = m.time_derivative(x)?;
    for (j, dw) in grad.iter().enumerate() {
        rate += dw * field[j];
    }
    let d = &p * rate * &p - &jac * &p - &p * jac.transpose();
    let closed_form = ga.dot(&(d * &gb));

    // ω_(1) with the literal inverse and X_m = ω_mn X^n
    let inv = -&p;
    let lowered_jac = {
        // ∂_s X_m = (∂_s ω_mn) X^n + ω_mn ∂_s X^n, stored as [s, m]
        let mut out = (&w * &jac).transpose();
        for (s, dw) in grad.iter().enumerate() {
            let row = dw * &field;
            for mm in 0..dim {
                out[(s, mm)] += row[mm];
            }
        }
        out
    };
    let curl = &lowered_jac - lowered_jac.transpose();
    // ω^{km} ω^{ls} curl[s, m] = (inv · curlᵀ · invᵀ)_{kl}
    let omega_one = &inv * curl.transpose() * inv.transpose();
    let omega_one = ga.dot(&(omega_one * &gb));

    let numerical = numerical_defect(a, b, v, m, x)?;
    Ok(LeibnizDefect {
        closed_form,
        omega_one,
        numerical,
    })
}

fn numerical_defect(
    a: &Observable,
    b: &Observable,
    v: &VectorFieldSpec,
    m: &dyn MetricSource,
    x: &PhasePoint,
) -> Result<f64> {
    let h = 1e-4 * x.time.abs().max(1.0);
    let opts = IntegratorOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-13,
        ..IntegratorOptions::default()
    };
    let ahead = integrate_flow(v, x, x.time + h, &opts)?.end;
    let behind = integrate_flow(v, x, x.time - h, &opts)?.end;
    let rate = (poisson_bracket(a, b, m, &ahead)? - poisson_bracket(a, b, m, &behind)?) / (2.0 * h);
    let a_dot = a.along(v);
    let b_dot = b.along(v);
    Ok(rate - poisson_bracket(&a_dot, b, m, x)? - poisson_bracket(a, &b_dot, m, x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::friction::{analytic_metric, ApplicabilityPolicy, FrictionMatrix, FrictionSystem};
    use crate::phasespace::{ExprMatrix, MetricField};

    fn obs(s: &str, chart: &CoordinateChart) -> Observable {
        Observable::parse(s, chart).unwrap()
    }

    fn damped_metric(k: f64) -> (VectorFieldSpec, MetricField, CoordinateChart) {
        let chart = CoordinateChart::canonical(1).unwrap();
        let h = parse("p1^2/2 + q1^2/2", &chart).unwrap();
        let sys = FrictionSystem::new(chart.clone(), h, FrictionMatrix::diagonal_constants(&[k]))
            .unwrap();
        let m = analytic_metric(&sys, 0.0, ApplicabilityPolicy::Require).unwrap();
        (sys.vector_field().unwrap(), m, chart)
    }

    #[test]
    fn canonical_relations() {
        let chart = CoordinateChart::canonical(2).unwrap();
        let m = MetricField::canonical(2);
        let x = PhasePoint::new(vec![0.1, 0.2, 0.3, 0.4], 0.0);
        let b =
            |a: &str, c: &str| poisson_bracket(&obs(a, &chart), &obs(c, &chart), &m, &x).unwrap();
        assert_eq!(b("q1", "p1"), 1.0);
        assert_eq!(b("p1", "q1"), -1.0);
        assert_eq!(b("q1", "q1"), 0.0);
        assert_eq!(b("q1", "p2"), 0.0);
        assert_eq!(b("q2", "p2"), 1.0);
    }

    #[test]
    fn friction_metric_bracket() {
        let (_, m, chart) = damped_metric(1.0);
        let x = PhasePoint::new(vec![0.5, 0.5], 1.0);
        let v = poisson_bracket(&obs("q1", &chart), &obs("p1", &chart), &m, &x).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn singular_metric_errors() {
        let chart = CoordinateChart::canonical(1).unwrap();
        let m = MetricField::Constant(DMatrix::zeros(2, 2));
        let x = PhasePoint::new(vec![0.0, 0.0], 0.0);
        assert!(matches!(
            poisson_bracket(&obs("q1", &chart), &obs("p1", &chart), &m, &x),
            Err(Error::SingularMetric { .. })
        ));
    }

    #[test]
    fn jacobi_with_constant_and_friction_metrics() {
        let chart = CoordinateChart::canonical(1).unwrap();
        let (a, b, c) = (obs("q1", &chart), obs("p1", &chart), obs("q1*p1", &chart));
        let x = PhasePoint::new(vec![0.3, -0.6], 0.7);
        let r = bracket_jacobi_residual(&a, &b, &c, &MetricField::canonical(1), &x).unwrap();
        assert!(r.abs() < 1e-10);
        let (_, m, _) = damped_metric(1.0);
        let r = bracket_jacobi_residual(&a, &b, &c, &m, &x).unwrap();
        assert!(r.abs() < 1e-8);
    }

    #[test]
    fn jacobi_matches_nested_finite_differences() {
        // x-dependent closed metric on n=2: ω_13 = 1 + q1² + p1/3, ω_24 = 1, others 0
        let chart = CoordinateChart::canonical(2).unwrap();
        let w13 = parse("1 + q1^2 + p1/3", &chart).unwrap();
        let w = ExprMatrix::skew_from_upper(4, |k, l| match (k, l) {
            (0, 2) => w13.clone(),
            (1, 3) => Expr::one(),
            _ => Expr::zero(),
        });
        let m = MetricField::from_exprs(w).unwrap();
        let (a, b, c) = (
            obs("q1*p2", &chart),
            obs("p1 + q2", &chart),
            obs("q1^2*p1", &chart),
        );
        let x = PhasePoint::new(vec![0.3, -0.2, 0.5, 0.1], 0.0);
        let analytic = bracket_jacobi_residual(&a, &b, &c, &m, &x).unwrap();
        let bracket_fn =
            |f: &Observable, g: &Observable, y: &PhasePoint| poisson_bracket(f, g, &m, y).unwrap();
        let h = 1e-5;
        let nested = |outer: &Observable, f: &Observable, g: &Observable| {
            let p = poisson_tensor(&m, &x).unwrap();
            let go = outer.grad_at(&x).unwrap();
            let inner = DVector::from_iterator(
                4,
                (0..4).map(|j| {
                    (bracket_fn(f, g, &x.shifted(j, h)) - bracket_fn(f, g, &x.shifted(j, -h)))
                        / (2.0 * h)
                }),
            );
            go.dot(&(p * inner))
        };
        let fd = nested(&a, &b, &c) + nested(&b, &c, &a) + nested(&c, &a, &b);
        assert!((analytic - fd).abs() < 1e-7, "{analytic} vs {fd}");
        assert!(analytic.abs() < 1e-10);
    }

    #[test]
    fn non_closed_metric_breaks_jacobi() {
        let chart = CoordinateChart::canonical(2).unwrap();
        let w12 = parse("1 + p1", &chart).unwrap();
        let w = ExprMatrix::skew_from_upper(4, |k, l| match (k, l) {
            (0, 1) => w12.clone(),
            (2, 3) => Expr::one(),
            _ => Expr::zero(),
        });
        let m = MetricField::from_exprs(w).unwrap();
        assert!(
            crate::phasespace::jacobi_residual(&m, &PhasePoint::new(vec![0.0; 4], 0.0)).unwrap()
                > 0.5
        );
        let (a, b, c) = (obs("q1", &chart), obs("q2", &chart), obs("p2", &chart));
        for x in crate::sampling::probe_points(4, 5, 3) {
            let r = bracket_jacobi_residual(&a, &b, &c, &m, &x).unwrap();
            assert!(r.abs() > 1e-3, "{r}");
        }
    }

    #[test]
    fn leibniz_hamiltonian_has_no_defect() {
        let chart = CoordinateChart::canonical(1).unwrap();
        let h = parse("p1^2/2 + q1^4/4", &chart).unwrap();
        let v =
            VectorFieldSpec::from_hamiltonian(chart.clone(), &h, &DMatrix::zeros(1, 1)).unwrap();
        let x = PhasePoint::new(vec![0.4, 0.3], 0.0);
        let d = leibniz_defect(
            &obs("q1", &chart),
            &obs("p1^2", &chart),
            &v,
            &MetricField::canonical(1),
            &x,
        )
        .unwrap();
        assert!(d.closed_form.abs() < 1e-10);
        assert!(d.numerical.abs() < 1e-6);
    }

    #[test]
    fn leibniz_static_and_invariant_metric() {
        let (v, m, chart) = damped_metric(1.0);
        let (a, b) = (obs("q1", &chart), obs("p1", &chart));
        let x = PhasePoint::new(vec![0.2, -0.5], 0.4);
        let d = leibniz_defect(&a, &b, &v, &MetricField::canonical(1), &x).unwrap();
        // {q, ṗ} = {q, −q − p} = −1, so the defect is +1
        assert!((d.closed_form - 1.0).abs() < 1e-12);
        assert!((d.omega_one + 1.0).abs() < 1e-12);
        assert!((d.numerical - d.closed_form).abs() < 1e-6);
        let d = leibniz_defect(&a, &b, &v, &m, &x).unwrap();
        assert!(d.closed_form.abs() < 1e-10);
        assert!(d.numerical.abs() < 1e-6);
    }
}
