//! Hamiltonian or not: closedness of the contracted 1-form `ω(X)`.
//!
//! The residual is `J_kl = ∂_k(ω_lm X^m) − ∂_l(ω_km X^m)`; the system is
//! Hamiltonian with respect to `ω` exactly when it vanishes. For the
//! canonical metric this splits into three `n × n` blocks on
//! `q̇ = G(q, p)`, `ṗ = F(q, p)`.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{eval_field, VectorFieldSpec};
use crate::exprlang::{CoordinateChart, Expr};
use crate::phasespace::{determinant_of, ExprMatrix, MetricField, MetricSource, PhasePoint};
use crate::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Symbolic `J_kl` for an expression-backed metric.
pub fn residual_exprs(v: &VectorFieldSpec, w: &ExprMatrix) -> ExprMatrix {
    let dim = v.dim();
    let contracted: Vec<Expr> = (0..dim)
        .map(|l| {
            let terms: Vec<Expr> = (0..dim).map(|m| w.get(l, m).mul(v.component(m))).collect();
            Expr::sum(&terms)
        })
        .collect();
    ExprMatrix::skew_from_upper(dim, |k, l| contracted[l].d(k).sub(&contracted[k].d(l)))
}

/// `J_kl` from the metric, its gradient, the field and its Jacobian at one
/// point, by the product rule.
pub(crate) fn residual_from_parts(
    w: &DMatrix<f64>,
    grad: &[DMatrix<f64>],
    field: &DVector<f64>,
    jac: &DMatrix<f64>,
) -> DMatrix<f64> {
    let dim = w.nrows();
    // a_kl = ∂_k(ω_lm X^m)
    let w_jac = w * jac;
    let mut a = w_jac.transpose();
    for (k, g) in grad.iter().enumerate() {
        let gx = g * field;
        for l in 0..dim {
            a[(k, l)] += gx[l];
        }
    }
    &a - a.transpose()
}

/// `J_kl(x)`. Expression-backed metrics are differentiated symbolically; the
/// other representations use their exact (or, for transported metrics,
/// finite-difference) gradients with the product rule.
pub fn helmholtz_residual(
    v: &VectorFieldSpec,
    m: &MetricField,
    x: &PhasePoint,
) -> Result<DMatrix<f64>> {
    check_dims(v, m.dim())?;
    match m {
        MetricField::Expr(w) => residual_exprs(v, w).eval_at(x),
        _ => residual_numeric(v, m, x),
    }
}

/// `J_kl(x)` for any metric source, by the product rule.
pub fn residual_numeric(
    v: &VectorFieldSpec,
    m: &dyn MetricSource,
    x: &PhasePoint,
) -> Result<DMatrix<f64>> {
    check_dims(v, m.dim())?;
    let w = m.eval(x)?;
    let grad = m.gradient(x)?;
    let field = eval_field(v, x)?;
    let jac = v.jacobian_at(&x.coords)?;
    Ok(residual_from_parts(&w, &grad, &field, &jac))
}

fn check_dims(v: &VectorFieldSpec, metric_dim: usize) -> Result<()> {
    if v.dim() != metric_dim {
        return Err(Error::DimensionMismatch {
            expected: v.dim(),
            got: metric_dim,
        });
    }
    Ok(())
}

/// The three canonical residual blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalBlocks {
    /// `∂G^i/∂p^j − ∂G^j/∂p^i`.
    pub r1: DMatrix<f64>,
    /// `∂G^j/∂q^i + ∂F^i/∂p^j`.
    pub r2: DMatrix<f64>,
    /// `∂F^i/∂q^j − ∂F^j/∂q^i`.
    pub r3: DMatrix<f64>,
}

impl CanonicalBlocks {
    pub fn max_abs(&self) -> [f64; 3] {
        let m = |b: &DMatrix<f64>| b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        [m(&self.r1), m(&self.r2), m(&self.r3)]
    }
}

pub fn canonical_helmholtz(
    chart: &CoordinateChart,
    g: &[Expr],
    f: &[Expr],
    x: &PhasePoint,
) -> Result<CanonicalBlocks> {
    let n = chart.n();
    if g.len() != n || f.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: g.len().min(f.len()),
        });
    }
    x.check_dim(chart.dim())?;
    let d = |e: &Expr, index: usize| e.d(index).eval_at(x);
    let mut r1 = DMatrix::zeros(n, n);
    let mut r2 = DMatrix::zeros(n, n);
    let mut r3 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            r1[(i, j)] = d(&g[i], chart.p(j))? - d(&g[j], chart.p(i))?;
            r2[(i, j)] = d(&g[j], chart.q(i))? + d(&f[i], chart.p(j))?;
            r3[(i, j)] = d(&f[i], chart.q(j))? - d(&f[j], chart.q(i))?;
        }
    }
    Ok(CanonicalBlocks { r1, r2, r3 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Hamiltonian,
    NonHamiltonian,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Hamiltonian => "hamiltonian",
            Verdict::NonHamiltonian => "non-hamiltonian",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointResidual {
    pub point: PhasePoint,
    pub residual: DMatrix<f64>,
    pub max_abs: f64,
    /// Largest of the three canonical block residuals, when computed.
    pub canonical_max: Option<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct HelmholtzReport {
    pub verdict: Verdict,
    pub max_abs: f64,
    pub tolerance: f64,
    pub points: Vec<PointResidual>,
    /// Per-block maxima over all points; present for the canonical metric.
    pub canonical_max: Option<[f64; 3]>,
    pub warnings: Vec<String>,
}

/// Samples the residual at every point; Hamiltonian iff the largest entry
/// stays below `tol`.
pub fn classify(
    v: &VectorFieldSpec,
    m: &MetricField,
    points: &[PhasePoint],
    tol: f64,
) -> Result<HelmholtzReport> {
    if points.is_empty() {
        return Err(Error::InvalidSystem(
            "classification needs at least one sample point".into(),
        ));
    }
    check_dims(v, m.dim())?;
    let symbolic = match m {
        MetricField::Expr(w) => Some(residual_exprs(v, w)),
        _ => None,
    };
    let canonical = m.is_canonical().then(|| {
        let n = v.chart().n();
        let g: Vec<Expr> = (0..n).map(|i| v.component(i).clone()).collect();
        let f: Vec<Expr> = (0..n).map(|i| v.component(n + i).clone()).collect();
        (g, f)
    });
    let mut warnings = Vec::new();
    let mut out = Vec::with_capacity(points.len());
    for x in points {
        let residual = match &symbolic {
            Some(j) => j.eval_at(x)?,
            None => residual_numeric(v, m, x)?,
        };
        let det = determinant_of(&m.eval(x)?);
        if det.degenerate {
            warnings.push(format!(
                "metric is degenerate at {:?} (|det| = {:e})",
                x.coords, det.g
            ));
        }
        let canonical_max = match &canonical {
            Some((g, f)) => Some(canonical_helmholtz(v.chart(), g, f, x)?.max_abs()),
            None => None,
        };
        let max_abs = residual.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
        out.push(PointResidual {
            point: x.clone(),
            residual,
            max_abs,
            canonical_max,
        });
    }
    Ok(summarize(out, tol, warnings))
}

pub(crate) fn summarize(
    points: Vec<PointResidual>,
    tol: f64,
    warnings: Vec<String>,
) -> HelmholtzReport {
    let max_abs = points.iter().fold(0.0f64, |acc, p| acc.max(p.max_abs));
    let canonical_max = points
        .iter()
        .map(|p| p.canonical_max)
        .try_fold([0.0f64; 3], |acc, c| {
            c.map(|c| [acc[0].max(c[0]), acc[1].max(c[1]), acc[2].max(c[2])])
        });
    HelmholtzReport {
        verdict: if max_abs < tol {
            Verdict::Hamiltonian
        } else {
            Verdict::NonHamiltonian
        },
        max_abs,
        tolerance: tol,
        points,
        canonical_max,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::parse;
    use crate::sampling::SampleSpec;

    fn chart(n: usize) -> CoordinateChart {
        CoordinateChart::canonical(n).unwrap()
    }

    fn field(n: usize, comps: &[&str]) -> VectorFieldSpec {
        let c = chart(n);
        let exprs = comps.iter().map(|s| parse(s, &c).unwrap()).collect();
        VectorFieldSpec::new(c, exprs).unwrap()
    }

    #[test]
    fn harmonic_oscillator_is_closed() {
        let v = field(1, &["p1", "-q1"]);
        let x = PhasePoint::new(vec![0.3, -0.8], 0.0);
        let j = helmholtz_residual(&v, &MetricField::canonical(1), &x).unwrap();
        assert!(j.iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn damped_oscillator_constant_residual() {
        for k in [0.5, 1.0, 3.0] {
            let v = field(1, &["p1", &format!("-q1 - {k}*p1")]);
            let x = PhasePoint::new(vec![0.7, 0.1], 0.0);
            let j = helmholtz_residual(&v, &MetricField::canonical(1), &x).unwrap();
            // oracle: θ = (X^p, −X^q) = (−q − k p, −p), J_12 = ∂_q θ_2 − ∂_p θ_1 = k
            assert!((j[(0, 1)] - k).abs() < 1e-14);
            assert!((j[(1, 0)] + k).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_metric_gives_zero_residual() {
        let v = field(1, &["p1", "-q1 - p1"]);
        let m = MetricField::Constant(DMatrix::zeros(2, 2));
        let x = PhasePoint::new(vec![0.7, 0.1], 0.0);
        assert_eq!(
            helmholtz_residual(&v, &m, &x).unwrap(),
            DMatrix::zeros(2, 2)
        );
    }

    #[test]
    fn symbolic_and_product_rule_agree() {
        let c = chart(1);
        let v = field(1, &["p1 + q1^2", "-sin(q1) - p1*q1"]);
        let w12 = parse("1 + q1^2 + exp(p1/3)", &c).unwrap();
        let w = ExprMatrix::skew_from_upper(2, |_, _| w12.clone());
        let m = MetricField::Expr(w.clone());
        let x = PhasePoint::new(vec![0.4, -0.6], 0.0);
        let symbolic = helmholtz_residual(&v, &m, &x).unwrap();
        let numeric = residual_numeric(&v, &m, &x).unwrap();
        assert!((symbolic - numeric).abs().max() < 1e-12);
    }

    #[test]
    fn matches_finite_differences() {
        let c = chart(2);
        let v = field(2, &["p1*q2", "p2 - q1", "-q1^3", "-q2 - p1*p2"]);
        let w = ExprMatrix::skew_from_upper(4, |k, l| {
            parse(&format!("{}+q1*p2/{}", (k + 1) * (l + 2), l + 1), &c).unwrap()
        });
        let m = MetricField::Expr(w.clone());
        let x = PhasePoint::new(vec![0.3, -0.2, 0.5, 0.9], 0.0);
        let j = helmholtz_residual(&v, &m, &x).unwrap();
        let theta = |y: &PhasePoint| {
            let wv = w.eval_at(y).unwrap();
            let xv = eval_field(&v, y).unwrap();
            wv * xv
        };
        let h = 1e-6;
        for k in 0..4 {
            for l in 0..4 {
                let dk = (theta(&x.shifted(k, h))[l] - theta(&x.shifted(k, -h))[l]) / (2.0 * h);
                let dl = (theta(&x.shifted(l, h))[k] - theta(&x.shifted(l, -h))[k]) / (2.0 * h);
                assert!((j[(k, l)] - (dk - dl)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn canonical_blocks_examples() {
        let c = chart(1);
        let p = |s: &str| parse(s, &c).unwrap();
        let x = PhasePoint::new(vec![0.2, 0.4], 0.0);
        let b = canonical_helmholtz(&c, &[p("p1")], &[p("-q1")], &x).unwrap();
        assert_eq!(b.max_abs(), [0.0; 3]);
        let b = canonical_helmholtz(&c, &[p("p1")], &[p("-q1 - 2*p1")], &x).unwrap();
        assert_eq!(b.r2[(0, 0)], -2.0);
        assert_eq!(b.r1[(0, 0)], 0.0);
        assert_eq!(b.r3[(0, 0)], 0.0);
        let c2 = chart(2);
        let p2 = |s: &str| parse(s, &c2).unwrap();
        let x2 = PhasePoint::new(vec![0.2, 0.4, -0.1, 0.3], 0.0);
        let b =
            canonical_helmholtz(&c2, &[p2("p2"), p2("p1")], &[p2("-q1"), p2("-q2")], &x2).unwrap();
        assert_eq!(b.max_abs()[0], 0.0);
    }

    #[test]
    fn classify_examples() {
        let pts = SampleSpec::default().points(2, 0.0);
        let ho = field(1, &["p1", "-q1"]);
        let r = classify(&ho, &MetricField::canonical(1), &pts, DEFAULT_TOLERANCE).unwrap();
        assert_eq!(r.verdict, Verdict::Hamiltonian);
        assert!(r.max_abs < 1e-12);
        assert_eq!(r.points.len(), 51);
        let damped = field(1, &["p1", "-q1 - p1"]);
        let r = classify(&damped, &MetricField::canonical(1), &pts, DEFAULT_TOLERANCE).unwrap();
        assert_eq!(r.verdict, Verdict::NonHamiltonian);
        assert!((r.max_abs - 1.0).abs() < 1e-10);
        assert!(r.points.iter().all(|p| (p.max_abs - 1.0).abs() < 1e-10));
        assert_eq!(r.canonical_max.unwrap()[1], 1.0);
    }

    #[test]
    fn degenerate_metric_is_warned() {
        let v = field(1, &["p1", "-q1"]);
        let m = MetricField::Constant(DMatrix::zeros(2, 2));
        let r = classify(&v, &m, &[PhasePoint::new(vec![0.0, 0.0], 0.0)], 1e-8).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }
}
