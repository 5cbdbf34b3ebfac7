//! Skew-symmetric metric fields `ω_kl(x, t)` and their structural checks:
//! nondegeneracy, the Jacobi (closedness) identity, and the volume density.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{integrate_with_schedule, IntegratorOptions, VectorFieldSpec};
use crate::exprlang::Expr;
use crate::friction::FrictionMetric;
use crate::linalg::{max_abs, skew_defect};
use crate::{Error, Result};

/// Below this `|det ω|` the metric is treated as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// A point of phase space together with a time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub coords: Vec<f64>,
    pub time: f64,
}

impl PhasePoint {
    pub fn new(coords: impl Into<Vec<f64>>, time: f64) -> Self {
        Self {
            coords: coords.into(),
            time,
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coords)
    }

    pub fn with_time(&self, time: f64) -> Self {
        Self {
            coords: self.coords.clone(),
            time,
        }
    }

    pub fn shifted(&self, index: usize, delta: f64) -> Self {
        let mut coords = self.coords.clone();
        coords[index] += delta;
        Self {
            coords,
            time: self.time,
        }
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// A square matrix of expressions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprMatrix {
    dim: usize,
    entries: Vec<Expr>,
}

impl ExprMatrix {
    pub fn new(dim: usize, entries: Vec<Expr>) -> Self {
        assert_eq!(entries.len(), dim * dim, "ExprMatrix needs dim² entries");
        Self { dim, entries }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(dim, vec![Expr::zero(); dim * dim])
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Expr) -> Self {
        let entries = (0..dim)
            .flat_map(|k| (0..dim).map(move |l| (k, l)))
            .map(|(k, l)| f(k, l))
            .collect();
        Self { dim, entries }
    }

    /// Skew matrix from its strict upper triangle (`upper(k, l)`, `k < l`).
    pub fn skew_from_upper(dim: usize, mut upper: impl FnMut(usize, usize) -> Expr) -> Self {
        let mut m = Self::zeros(dim);
        for k in 0..dim {
            for l in k + 1..dim {
                let e = upper(k, l);
                m.entries[l * dim + k] = e.neg();
                m.entries[k * dim + l] = e;
            }
        }
        m
    }

    pub fn from_constant(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), |k, l| Expr::constant(m[(k, l)]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: usize, l: usize) -> &Expr {
        &self.entries[k * self.dim + l]
    }

    pub fn entries(&self) -> &[Expr] {
        &self.entries
    }

    pub fn map(&self, f: impl Fn(&Expr) -> Expr) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        let c = Expr::constant(factor);
        self.map(|e| e.mul(&c))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn eval(&self, coords: &[f64], t: f64) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for k in 0..self.dim {
            for l in 0..self.dim {
                out[(k, l)] = self.get(k, l).eval(coords, t)?;
            }
        }
        Ok(out)
    }

    pub fn eval_at(&self, x: &PhasePoint) -> Result<DMatrix<f64>> {
        self.eval(&x.coords, x.time)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Expr::is_zero)
    }

    /// True when no entry references a variable.
    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(Expr::is_constant)
    }

    pub fn contains_time(&self) -> bool {
        self.entries.iter().any(Expr::contains_time)
    }

    /// Distinct nodes across all entries.
    pub fn node_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            e.count_into(&mut seen);
        }
        seen.len()
    }
}

/// Flow-transported metric: `ω(x, t) = Mᵀ ω₀(x₀) M`, with `x₀` the point
/// that flows onto `x` in time `t` and `M = ∂x₀/∂x`.
#[derive(Debug, Clone)]
pub struct Transported {
    pub initial: MetricField,
    pub field: VectorFieldSpec,
    pub options: IntegratorOptions,
}

/// A skew-symmetric metric field in one of four representations.
#[derive(Debug, Clone)]
pub enum MetricField {
    Constant(DMatrix<f64>),
    Expr(ExprMatrix),
    FrictionAnalytic(FrictionMetric),
    /// Evaluated on demand by integrating the flow; every evaluation costs
    /// one backward integration with the tangent map.
    Transported(Arc<Transported>),
}

impl MetricField {
    /// `ω_{q^i p^j} = δ_ij`, `ω_{p^i q^j} = −δ_ij`.
    pub fn canonical(n: usize) -> Self {
        MetricField::Constant(canonical_matrix(n))
    }

    pub fn constant(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSkew("matrix is not square".into()));
        }
        let defect = skew_defect(&m);
        if defect >= 1e-12 {
            return Err(Error::NotSkew(format!("max |ω_kl + ω_lk| = {defect:e}")));
        }
        Ok(MetricField::Constant(m))
    }

    /// Accepts an expression matrix whose lower triangle is the negated upper
    /// triangle, either structurally or numerically at a fixed probe set; the
    /// stored matrix is rebuilt from the upper triangle.
    pub fn from_exprs(m: ExprMatrix) -> Result<Self> {
        let dim = m.dim();
        let probes = crate::sampling::probe_points(dim, 8, 0x5eed);
        for k in 0..dim {
            if !m.get(k, k).is_zero() {
                for probe in &probes {
                    let v = m.get(k, k).eval_at(probe)?;
                    if v.abs() >= 1e-12 {
                        return Err(Error::NotSkew(format!("diagonal entry ({k},{k}) is {v}")));
                    }
                }
            }
            for l in k + 1..dim {
                let upper = m.get(k, l);
                let lower = m.get(l, k);
                if *lower == upper.neg() {
                    continue;
                }
                for probe in &probes {
                    let a = upper.eval_at(probe)?;
                    let b = lower.eval_at(probe)?;
                    if (a + b).abs() >= 1e-12 * (1.0 + a.abs()) {
                        return Err(Error::NotSkew(format!(
                            "entries ({k},{l}) and ({l},{k}) differ in more than sign"
                        )));
                    }
                }
            }
        }
        Ok(MetricField::Expr(ExprMatrix::skew_from_upper(
            dim,
            |k, l| m.get(k, l).clone(),
        )))
    }

    pub fn transported(
        initial: MetricField,
        field: VectorFieldSpec,
        options: IntegratorOptions,
    ) -> Result<Self> {
        if initial.dim() != field.dim() {
            return Err(Error::DimensionMismatch {
                expected: field.dim(),
                got: initial.dim(),
            });
        }
        Ok(MetricField::Transported(Arc::new(Transported {
            initial,
            field,
            options,
        })))
    }

    pub fn dim(&self) -> usize {
        match self {
            MetricField::Constant(m) => m.nrows(),
            MetricField::Expr(m) => m.dim(),
            MetricField::FrictionAnalytic(f) => f.dim(),
            MetricField::Transported(t) => t.field.dim(),
        }
    }

    /// True for the canonical constant block matrix.
    pub fn is_canonical(&self) -> bool {
        match self {
            MetricField::Constant(m) => m.nrows() % 2 == 0 && *m == canonical_matrix(m.nrows() / 2),
            _ => false,
        }
    }

    /// Expression form of the metric when one exists; friction metrics are
    /// frozen at the time `t`.
    pub fn as_exprs(&self, t: f64) -> Result<Option<ExprMatrix>> {
        Ok(match self {
            MetricField::Constant(m) => Some(ExprMatrix::from_constant(m)),
            MetricField::Expr(m) => Some(m.clone()),
            MetricField::FrictionAnalytic(f) => Some(ExprMatrix::from_constant(&f.block(t)?)),
            MetricField::Transported(_) => None,
        })
    }
}

impl Transported {
    /// Metric at `x` using a fixed step schedule (steps signed, in the
    /// negated field's time) instead of adaptive control, so that the result
    /// is a smooth function of `x`.
    pub fn eval_with_schedule(&self, x: &PhasePoint, schedule: &[f64]) -> Result<DMatrix<f64>> {
        let back = self.field.negated();
        let seg =
            integrate_with_schedule(&back, &PhasePoint::new(x.coords.clone(), 0.0), schedule)?;
        self.assemble(&seg.end.coords, &seg.tangent)
    }

    fn assemble(&self, origin: &[f64], tangent: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let w0 = self.initial.eval(&PhasePoint::new(origin.to_vec(), 0.0))?;
        let w = tangent.transpose() * w0 * tangent;
        Ok(antisymmetrize(w))
    }

    /// Adaptive step schedule for evaluating at `x`.
    pub fn schedule(&self, x: &PhasePoint) -> Result<Vec<f64>> {
        let back = self.field.negated();
        let seg = crate::dynamics::integrate_flow(
            &back,
            &PhasePoint::new(x.coords.clone(), 0.0),
            x.time,
            &self.options,
        )?;
        Ok(seg.schedule)
    }
}

fn antisymmetrize(w: DMatrix<f64>) -> DMatrix<f64> {
    (&w - w.transpose()) * 0.5
}

/// The canonical block matrix `[[0, I], [−I, 0]]`.
pub fn canonical_matrix(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, n + i)] = 1.0;
        m[(n + i, i)] = -1.0;
    }
    m
}

/// Anything that can produce `ω(x, t)` and its derivatives.
///
/// The default derivative methods use central differences with
/// `h = 1e-5·max(1, |x_k|)`; implementations with exact derivatives
/// override them.
pub trait MetricSource: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &PhasePoint) -> Result<DMatrix<f64>>;

    /// `[∂_k ω]` for every coordinate `k`.
    fn gradient(&self, x: &PhasePoint) -> Result<Vec<DMatrix<f64>>> {
        (0..self.dim())
            .map(|k| {
                let h = fd_step(x.coords[k]);
                let plus = self.eval(&x.shifted(k, h))?;
                let minus = self.eval(&x.shifted(k, -h))?;
                Ok((plus - minus) / (2.0 * h))
            })
            .collect()
    }

    /// `∂ω/∂t` at fixed `x`.
    fn time_derivative(&self, x: &PhasePoint) -> Result<DMatrix<f64>> {
        let h = fd_step(x.time);
        let plus = self.eval(&x.with_time(x.time + h))?;
        let minus = self.eval(&x.with_time(x.time - h))?;
        Ok((plus - minus) / (2.0 * h))
    }
}

pub(crate) fn fd_step(v: f64) -> f64 {
    1e-5 * v.abs().max(1.0)
}

impl MetricSource for MetricField {
    fn dim(&self) -> usize {
        MetricField::dim(self)
    }

    fn eval(&self, x: &PhasePoint) -> Result<DMatrix<f64>> {
        x.check_dim(self.dim())?;
        match self {
            MetricField::Constant(m) => Ok(m.clone()),
            MetricField::Expr(m) => m.eval_at(x),
            MetricField::FrictionAnalytic(f) => f.block(x.time),
            MetricField::Transported(tr) => {
                let back = tr.field.negated();
                let seg = crate::dynamics::integrate_flow(
                    &back,
                    &PhasePoint::new(x.coords.clone(), 0.0),
                    x.time,
                    &tr.options,
                )?;
                tr.assemble(&seg.end.coords, &seg.tangent)
            }
        }
    }

    fn gradient(&self, x: &PhasePoint) -> Result<Vec<DMatrix<f64>>> {
        x.check_dim(self.dim())?;
        let dim = self.dim();
        match self {
            MetricField::Constant(_) | MetricField::FrictionAnalytic(_) => {
                Ok(vec![DMatrix::zeros(dim, dim); dim])
            }
            MetricField::Expr(m) => (0..dim).map(|k| m.map(|e| e.d(k)).eval_at(x)).collect(),
            MetricField::Transported(tr) => {
                let schedule = tr.schedule(x)?;
                (0..dim)
                    .map(|k| {
                        let h = fd_step(x.coords[k]);
                        let plus = tr.eval_with_schedule(&x.shifted(k, h), &schedule)?;
                        let minus = tr.eval_with_schedule(&x.shifted(k, -h), &schedule)?;
                        Ok((plus - minus) / (2.0 * h))
                    })
                    .collect()
            }
        }
    }

    fn time_derivative(&self, x: &PhasePoint) -> Result<DMatrix<f64>> {
        x.check_dim(self.dim())?;
        let dim = self.dim();
        match self {
            MetricField::Constant(_) => Ok(DMatrix::zeros(dim, dim)),
            MetricField::Expr(m) => m.map(Expr::dt).eval_at(x),
            MetricField::FrictionAnalytic(f) => f.block_rate(x.time),
            MetricField::Transported(tr) => {
                // One schedule for t + h, rescaled for t - h.
                let h = fd_step(x.time);
                let upper = x.time + h;
                let lower = x.time - h;
                let schedule = tr.schedule(&x.with_time(upper))?;
                let scaled: Vec<f64> = schedule.iter().map(|s| s * lower / upper).collect();
                let plus = tr.eval_with_schedule(x, &schedule)?;
                let minus = tr.eval_with_schedule(x, &scaled)?;
                Ok((plus - minus) / (2.0 * h))
            }
        }
    }
}

/// Evaluates the metric at `x`.
pub fn metric_eval(m: &dyn MetricSource, x: &PhasePoint) -> Result<DMatrix<f64>> {
    m.eval(x)
}

/// `max_{k,l,m} |∂_k ω_lm + ∂_l ω_mk + ∂_m ω_kl|`.
pub fn jacobi_residual(m: &dyn MetricSource, x: &PhasePoint) -> Result<f64> {
    let grad = m.gradient(x)?;
    Ok(cyclic_residual(&grad))
}

pub(crate) fn cyclic_residual(grad: &[DMatrix<f64>]) -> f64 {
    let dim = grad.len();
    let mut worst = 0.0f64;
    for k in 0..dim {
        for l in 0..dim {
            for m in 0..dim {
                let r = grad[k][(l, m)] + grad[l][(m, k)] + grad[m][(k, l)];
                worst = worst.max(r.abs());
            }
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricDeterminant {
    pub g: f64,
    pub sqrt_g: f64,
    /// `|g|` fell below [`DEGENERACY_THRESHOLD`].
    pub degenerate: bool,
}

pub fn determinant_of(w: &DMatrix<f64>) -> MetricDeterminant {
    let g = w.clone().lu().determinant();
    MetricDeterminant {
        g,
        sqrt_g: g.abs().sqrt(),
        degenerate: g.abs() < DEGENERACY_THRESHOLD,
    }
}

/// `g = det ω`, `√|g|`, and the degeneracy flag.
pub fn metric_determinant(m: &dyn MetricSource, x: &PhasePoint) -> Result<MetricDeterminant> {
    Ok(determinant_of(&m.eval(x)?))
}

/// Matrix inverse `ω^{-1}` (so that `ω^{-1} ω = I`), antisymmetrized.
pub fn invert_metric(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let det = determinant_of(w);
    if det.degenerate {
        return Err(Error::SingularMetric { det: det.g });
    }
    let inv = w
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularMetric { det: det.g })?;
    Ok(antisymmetrize(inv))
}

pub fn inverse_metric(m: &dyn MetricSource, x: &PhasePoint) -> Result<DMatrix<f64>> {
    invert_metric(&m.eval(x)?)
}

/// Largest entry of `m`, re-exported for reports.
pub fn max_entry(m: &DMatrix<f64>) -> f64 {
    max_abs(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::{parse, CoordinateChart};
    use approx::assert_relative_eq;

    #[test]
    fn canonical_eval() {
        let m = MetricField::canonical(1);
        let w = m.eval(&PhasePoint::new(vec![0.3, -2.0], 4.0)).unwrap();
        assert_eq!(w, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        assert!(m.is_canonical());
    }

    #[test]
    fn constant_metric_has_zero_jacobi_residual() {
        let w =
            crate::linalg::vec_to_skew(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), 4);
        let m = MetricField::constant(w).unwrap();
        let r = jacobi_residual(&m, &PhasePoint::new(vec![0.1; 4], 0.0)).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn two_dimensional_jacobi_is_vacuous() {
        let chart = CoordinateChart::canonical(1).unwrap();
        let w12 = parse("1+q1^2", &chart).unwrap();
        let m = MetricField::Expr(ExprMatrix::skew_from_upper(2, |_, _| w12.clone()));
        for q in [-1.0, 0.0, 0.5, 2.0] {
            let r = jacobi_residual(&m, &PhasePoint::new(vec![q, 0.3], 0.0)).unwrap();
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn determinant_examples() {
        let d = metric_determinant(
            &MetricField::canonical(2),
            &PhasePoint::new(vec![0.0; 4], 0.0),
        )
        .unwrap();
        assert_relative_eq!(d.g, 1.0, epsilon = 1e-15);
        assert_relative_eq!(d.sqrt_g, 1.0, epsilon = 1e-15);
        assert!(!d.degenerate);
        let zero = MetricField::Constant(DMatrix::zeros(2, 2));
        let d = metric_determinant(&zero, &PhasePoint::new(vec![0.0; 2], 0.0)).unwrap();
        assert!(d.degenerate);
    }

    #[test]
    fn inverse_examples() {
        let x = PhasePoint::new(vec![0.0; 2], 0.0);
        let inv = inverse_metric(&MetricField::canonical(1), &x).unwrap();
        assert_eq!(inv, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let zero = MetricField::Constant(DMatrix::zeros(2, 2));
        assert!(matches!(
            inverse_metric(&zero, &x),
            Err(Error::SingularMetric { .. })
        ));
    }

    #[test]
    fn rejects_non_skew_input() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(MetricField::constant(m), Err(Error::NotSkew(_))));
        let chart = CoordinateChart::canonical(1).unwrap();
        let p = |s: &str| parse(s, &chart).unwrap();
        let bad = ExprMatrix::new(2, vec![p("0"), p("q1"), p("q1"), p("0")]);
        assert!(MetricField::from_exprs(bad).is_err());
        let ok = ExprMatrix::new(2, vec![p("0"), p("1+q1"), p("-1-q1"), p("0")]);
        assert!(MetricField::from_exprs(ok).is_ok());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = MetricField::canonical(2);
        assert!(matches!(
            m.eval(&PhasePoint::new(vec![0.0; 2], 0.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
