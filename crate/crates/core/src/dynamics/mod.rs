//! Autonomous vector fields `dx/dt = X(x)`, their flows and tangent maps,
//! and phase-space compressibility.

mod integrator;

use nalgebra::{DMatrix, DVector};

use crate::exprlang::{CoordinateChart, Expr};
use crate::phasespace::PhasePoint;
use crate::{Error, Result};

pub use integrator::{
    integrate_flow, integrate_flow_sampled, integrate_with_schedule, tangent_map, FlowSample,
    FlowSegment, FlowStats, IntegrationError, IntegratorOptions,
};

/// Which part of a split field an operation should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldPart {
    #[default]
    All,
    /// The Hamiltonian part `X₁`.
    Hamiltonian,
    /// The friction part `X₂`.
    Friction,
}

#[derive(Debug, Clone)]
struct Split {
    hamiltonian: VectorFieldSpec,
    friction: VectorFieldSpec,
}

/// Components `X^k(x)` of a time-independent vector field, with the
/// symbolic Jacobian `∂_l X^k` and divergence precomputed.
#[derive(Debug, Clone)]
pub struct VectorFieldSpec {
    chart: CoordinateChart,
    components: Vec<Expr>,
    jacobian: Vec<Expr>,
    divergence: Expr,
    split: Option<Box<Split>>,
}

impl VectorFieldSpec {
    pub fn new(chart: CoordinateChart, components: Vec<Expr>) -> Result<Self> {
        let dim = chart.dim();
        if components.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: components.len(),
            });
        }
        if let Some(k) = components.iter().position(Expr::contains_time) {
            return Err(Error::InvalidSystem(format!(
                "component {} depends on t; vector fields must be time independent",
                chart.name(k)
            )));
        }
        let jacobian: Vec<Expr> = (0..dim)
            .flat_map(|k| (0..dim).map(move |l| (k, l)))
            .map(|(k, l)| components[k].d(l))
            .collect();
        let divergence = Expr::sum((0..dim).map(|k| &jacobian[k * dim + k]));
        Ok(Self {
            chart,
            components,
            jacobian,
            divergence,
            split: None,
        })
    }

    /// `X = X₁ + X₂` with both parts retained for splitting.
    pub fn with_split(hamiltonian: VectorFieldSpec, friction: VectorFieldSpec) -> Result<Self> {
        if hamiltonian.chart != friction.chart {
            return Err(Error::InvalidSystem(
                "split parts use different charts".into(),
            ));
        }
        let components = hamiltonian
            .components
            .iter()
            .zip(&friction.components)
            .map(|(a, b)| a.add(b))
            .collect();
        let mut full = Self::new(hamiltonian.chart.clone(), components)?;
        full.split = Some(Box::new(Split {
            hamiltonian: hamiltonian.without_split(),
            friction: friction.without_split(),
        }));
        Ok(full)
    }

    /// Hamilton's equations with linear friction:
    /// `q̇^i = ∂H/∂p^i`, `ṗ^i = −∂H/∂q^i − K_ij p^j`, split into the
    /// Hamiltonian part and the friction part.
    pub fn from_hamiltonian(
        chart: CoordinateChart,
        hamiltonian: &Expr,
        friction: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = chart.n();
        if friction.nrows() != n || friction.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: friction.nrows(),
            });
        }
        if hamiltonian.contains_time() {
            return Err(Error::InvalidSystem("H must not depend on t".into()));
        }
        let mut ham = Vec::with_capacity(2 * n);
        for i in 0..n {
            ham.push(hamiltonian.d(chart.p(i)));
        }
        for i in 0..n {
            ham.push(hamiltonian.d(chart.q(i)).neg());
        }
        let mut fric = vec![Expr::zero(); 2 * n];
        for i in 0..n {
            let terms: Vec<Expr> = (0..n)
                .filter(|&j| friction[(i, j)] != 0.0)
                .map(|j| Expr::constant(-friction[(i, j)]).mul(&Expr::coord(chart.p(j))))
                .collect();
            fric[n + i] = Expr::sum(&terms);
        }
        let hamiltonian = Self::new(chart.clone(), ham)?;
        let friction = Self::new(chart, fric)?;
        Self::with_split(hamiltonian, friction)
    }

    fn without_split(mut self) -> Self {
        self.split = None;
        self
    }

    pub fn chart(&self) -> &CoordinateChart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &Expr {
        &self.components[k]
    }

    /// `∂X^k/∂x^l`.
    pub fn jacobian_entry(&self, k: usize, l: usize) -> &Expr {
        &self.jacobian[k * self.dim() + l]
    }

    pub fn divergence(&self) -> &Expr {
        &self.divergence
    }

    pub fn has_split(&self) -> bool {
        self.split.is_some()
    }

    /// The requested part; `All` is the field itself.
    pub fn part(&self, part: FieldPart) -> Result<&VectorFieldSpec> {
        match (part, &self.split) {
            (FieldPart::All, _) => Ok(self),
            (FieldPart::Hamiltonian, Some(s)) => Ok(&s.hamiltonian),
            (FieldPart::Friction, Some(s)) => Ok(&s.friction),
            (_, None) => Err(Error::InvalidSystem(
                "vector field has no Hamiltonian/friction split".into(),
            )),
        }
    }

    /// True when every Jacobian entry is a constant, i.e. `X` is affine.
    pub fn is_linear(&self) -> bool {
        self.jacobian.iter().all(Expr::is_constant)
    }

    /// The field `−X`, used to run flows backward in time.
    pub fn negated(&self) -> Self {
        Self {
            chart: self.chart.clone(),
            components: self.components.iter().map(Expr::neg).collect(),
            jacobian: self.jacobian.iter().map(Expr::neg).collect(),
            divergence: self.divergence.neg(),
            split: None,
        }
    }

    pub fn eval_into(&self, coords: &[f64], out: &mut [f64]) -> Result<()> {
        for (slot, c) in out.iter_mut().zip(&self.components) {
            *slot = c.eval(coords, 0.0)?;
        }
        Ok(())
    }

    pub fn jacobian_at(&self, coords: &[f64]) -> Result<DMatrix<f64>> {
        let dim = self.dim();
        let mut out = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            for l in 0..dim {
                out[(k, l)] = self.jacobian[k * dim + l].eval(coords, 0.0)?;
            }
        }
        Ok(out)
    }
}

/// `X(x)` componentwise.
pub fn eval_field(v: &VectorFieldSpec, x: &PhasePoint) -> Result<DVector<f64>> {
    x.check_dim(v.dim())?;
    let mut out = DVector::zeros(v.dim());
    v.eval_into(&x.coords, out.as_mut_slice())?;
    Ok(out)
}

/// Phase-space compressibility `κ = Σ_k ∂_k X^k`.
pub fn compressibility(v: &VectorFieldSpec, x: &PhasePoint) -> Result<f64> {
    x.check_dim(v.dim())?;
    Ok(v.divergence.eval(&x.coords, x.time)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::parse;

    fn damped(k: f64) -> VectorFieldSpec {
        let chart = CoordinateChart::canonical(1).unwrap();
        let h = parse("p1^2/2 + q1^2/2", &chart).unwrap();
        VectorFieldSpec::from_hamiltonian(chart, &h, &DMatrix::from_element(1, 1, k)).unwrap()
    }

    #[test]
    fn damped_oscillator_field() {
        let v = damped(1.0);
        let at = |q: f64, p: f64| eval_field(&v, &PhasePoint::new(vec![q, p], 0.0)).unwrap();
        assert_eq!(at(1.0, 0.0).as_slice(), &[0.0, -1.0]);
        assert_eq!(at(0.0, 1.0).as_slice(), &[1.0, -1.0]);
        assert!(v.is_linear());
        assert!(v.has_split());
    }

    #[test]
    fn zero_field() {
        let chart = CoordinateChart::canonical(1).unwrap();
        let v = VectorFieldSpec::new(chart, vec![Expr::zero(), Expr::zero()]).unwrap();
        let x = PhasePoint::new(vec![0.4, 0.2], 0.0);
        assert_eq!(eval_field(&v, &x).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(compressibility(&v, &x).unwrap(), 0.0);
    }

    #[test]
    fn damped_compressibility() {
        let v = damped(1.0);
        for (q, p) in [(0.0, 0.0), (2.0, -3.0), (-0.5, 0.25)] {
            let k = compressibility(&v, &PhasePoint::new(vec![q, p], 0.0)).unwrap();
            assert_eq!(k, -1.0);
        }
    }

    #[test]
    fn nonlinear_compressibility_against_fd() {
        let chart = CoordinateChart::canonical(1).unwrap();
        let comps = vec![
            parse("p1", &chart).unwrap(),
            parse("-q1 - q1^2*p1", &chart).unwrap(),
        ];
        let v = VectorFieldSpec::new(chart, comps).unwrap();
        let x = PhasePoint::new(vec![2.0, 0.7], 0.0);
        // finite-difference divergence oracle
        let h = 1e-6;
        let mut div = 0.0;
        for k in 0..2 {
            let fp = eval_field(&v, &x.shifted(k, h)).unwrap()[k];
            let fm = eval_field(&v, &x.shifted(k, -h)).unwrap()[k];
            div += (fp - fm) / (2.0 * h);
        }
        assert!((div - -4.0).abs() < 1e-8);
        assert_eq!(compressibility(&v, &x).unwrap(), -4.0);
        assert!(!v.is_linear());
    }

    #[test]
    fn rejects_time_dependence() {
        let chart = CoordinateChart::canonical(1).unwrap();
        let comps = vec![
            parse("p1", &chart).unwrap(),
            parse("-q1*t", &chart).unwrap(),
        ];
        assert!(matches!(
            VectorFieldSpec::new(chart, comps),
            Err(Error::InvalidSystem(_))
        ));
    }

    #[test]
    fn parts_sum_to_field() {
        let v = damped(0.3);
        let h = v.part(FieldPart::Hamiltonian).unwrap();
        let f = v.part(FieldPart::Friction).unwrap();
        let x = PhasePoint::new(vec![0.2, -0.9], 0.0);
        let sum = eval_field(h, &x).unwrap() + eval_field(f, &x).unwrap();
        assert_eq!(sum, eval_field(&v, &x).unwrap());
        let chart = CoordinateChart::canonical(1).unwrap();
        let plain = VectorFieldSpec::new(chart, vec![Expr::zero(), Expr::zero()]).unwrap();
        assert!(plain.part(FieldPart::Friction).is_err());
    }
}
