//! Closed-form invariant metrics for linear friction,
//! `q̇ = ∂H/∂p`, `ṗ = −∂H/∂q − K(t) p` with `H = T(p) + U(q)`.
//!
//! The metric is `[[0, G(t)], [−Gᵀ(t), 0]]` with `dG/dt = G K` and
//! `G(t₀) = I`, so `G(t) = exp((t − t₀) K)` for constant `K` and
//! `g_jj = exp ∫ K_j` for diagonal `K(t)`.

use nalgebra::DMatrix;

use crate::dynamics::VectorFieldSpec;
use crate::exprlang::{CoordinateChart, Expr, Var};
use crate::linalg::expm;
use crate::phasespace::MetricField;
use crate::quadrature;
use crate::sampling::vanishes;
use crate::{Error, Result};

const QUADRATURE_TOL: f64 = 1e-12;

/// Friction coefficients `K^i_j`.
#[derive(Debug, Clone, PartialEq)]
pub enum FrictionMatrix {
    Constant(DMatrix<f64>),
    /// `K^i_j(t) = K_j(t) δ^i_j`, each entry a function of `t` only.
    Diagonal(Vec<Expr>),
}

impl FrictionMatrix {
    pub fn zeros(n: usize) -> Self {
        FrictionMatrix::Constant(DMatrix::zeros(n, n))
    }

    pub fn diagonal_constants(k: &[f64]) -> Self {
        FrictionMatrix::Constant(DMatrix::from_diagonal(
            &nalgebra::DVector::from_column_slice(k),
        ))
    }

    pub fn n(&self) -> usize {
        match self {
            FrictionMatrix::Constant(k) => k.nrows(),
            FrictionMatrix::Diagonal(k) => k.len(),
        }
    }

    /// The constant matrix, when the entries do not depend on `t`.
    pub fn as_constant(&self) -> Option<DMatrix<f64>> {
        match self {
            FrictionMatrix::Constant(k) => Some(k.clone()),
            FrictionMatrix::Diagonal(k) => {
                let values: Option<Vec<f64>> = k.iter().map(Expr::as_const).collect();
                values.map(|v| DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v)))
            }
        }
    }

    pub fn at(&self, t: f64) -> Result<DMatrix<f64>> {
        match self {
            FrictionMatrix::Constant(k) => Ok(k.clone()),
            FrictionMatrix::Diagonal(k) => {
                let values = k
                    .iter()
                    .map(|e| e.eval(&[], t))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(values)))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            FrictionMatrix::Constant(k) => {
                if !k.is_square() {
                    return Err(Error::InvalidSystem("friction matrix is not square".into()));
                }
                if k.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSystem("friction matrix is not finite".into()));
                }
            }
            FrictionMatrix::Diagonal(k) => {
                if let Some(e) = k
                    .iter()
                    .find(|e| e.variables().iter().any(|v| *v != Var::Time))
                {
                    return Err(Error::Unsupported(format!(
                        "friction entry {:?} depends on phase-space coordinates",
                        e
                    )));
                }
            }
        }
        Ok(())
    }

    /// `∫_{t0}^{t} K_j(τ) dτ`.
    fn entry_integral(entry: &Expr, t0: f64, t: f64) -> Result<f64> {
        if let Some(c) = entry.as_const() {
            return Ok(c * (t - t0));
        }
        quadrature::integrate(|tau| Ok(entry.eval(&[], tau)?), t0, t, QUADRATURE_TOL)
    }
}

/// `H = T(p) + U(q)` with linear friction.
#[derive(Debug, Clone)]
pub struct FrictionSystem {
    chart: CoordinateChart,
    hamiltonian: Expr,
    friction: FrictionMatrix,
}

impl FrictionSystem {
    pub fn new(
        chart: CoordinateChart,
        hamiltonian: Expr,
        friction: FrictionMatrix,
    ) -> Result<Self> {
        let n = chart.n();
        if friction.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: friction.n(),
            });
        }
        friction.validate()?;
        if hamiltonian.contains_time() {
            return Err(Error::InvalidSystem("H must not depend on t".into()));
        }
        for i in 0..n {
            let dq = hamiltonian.d(chart.q(i));
            for j in 0..n {
                if !vanishes(&dq.d(chart.p(j)), chart.dim()) {
                    return Err(Error::InvalidSystem(format!(
                        "H is not of the form T(p) + U(q): ∂²H/∂{}∂{} ≠ 0",
                        chart.name(chart.q(i)),
                        chart.name(chart.p(j))
                    )));
                }
            }
        }
        Ok(Self {
            chart,
            hamiltonian,
            friction,
        })
    }

    pub fn chart(&self) -> &CoordinateChart {
        &self.chart
    }

    pub fn n(&self) -> usize {
        self.chart.n()
    }

    pub fn hamiltonian(&self) -> &Expr {
        &self.hamiltonian
    }

    pub fn friction(&self) -> &FrictionMatrix {
        &self.friction
    }

    /// `∂²U/∂q^i∂q^j`.
    pub fn potential_hessian(&self, i: usize, j: usize) -> Expr {
        self.hamiltonian.d(self.chart.q(i)).d(self.chart.q(j))
    }

    /// `∂²T/∂p^i∂p^j`.
    pub fn kinetic_hessian(&self, i: usize, j: usize) -> Expr {
        self.hamiltonian.d(self.chart.p(i)).d(self.chart.p(j))
    }

    /// The split vector field. Only constant `K` gives an autonomous field.
    pub fn vector_field(&self) -> Result<VectorFieldSpec> {
        let k = self.friction.as_constant().ok_or_else(|| {
            Error::Unsupported(
                "time-dependent friction has no autonomous vector field; \
                 only the analytic metric is available"
                    .into(),
            )
        })?;
        VectorFieldSpec::from_hamiltonian(self.chart.clone(), &self.hamiltonian, &k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingBlock {
    /// `∂²U/∂q^i∂q^j`.
    Potential,
    /// `∂²T/∂p^i∂p^j`.
    Kinetic,
}

/// A pair of degrees of freedom whose coupling breaks the block form.
#[derive(Debug, Clone)]
pub struct ApplicabilityIssue {
    pub block: CouplingBlock,
    /// 1-based degree-of-freedom indices.
    pub pair: (usize, usize),
    /// The residual term the block form leaves in the invariance check.
    pub predicted_term: String,
}

#[derive(Debug, Clone)]
pub enum Applicability {
    Ok,
    Warning(Vec<ApplicabilityIssue>),
}

impl Applicability {
    pub fn is_ok(&self) -> bool {
        matches!(self, Applicability::Ok)
    }

    pub fn issues(&self) -> &[ApplicabilityIssue] {
        match self {
            Applicability::Ok => &[],
            Applicability::Warning(v) => v,
        }
    }

    pub fn messages(&self) -> Vec<String> {
        self.issues()
            .iter()
            .map(|i| {
                let what = match i.block {
                    CouplingBlock::Potential => "potential",
                    CouplingBlock::Kinetic => "kinetic",
                };
                format!(
                    "unequal friction on coupled {what} pair ({}, {}): residual term {}",
                    i.pair.0, i.pair.1, i.predicted_term
                )
            })
            .collect()
    }
}

/// Whether the block metric is invariant for `sys`.
///
/// For constant `K` the metric is invariant iff `K U'' = U'' Kᵀ` and
/// `T'' K = Kᵀ T''`, which for diagonal `K` means every coupled pair has
/// equal friction. For diagonal `K(t)` the pairwise rule is applied
/// directly.
pub fn applicability_check(sys: &FrictionSystem) -> Applicability {
    let n = sys.n();
    let dim = sys.chart.dim();
    let chart = &sys.chart;
    let mut issues = Vec::new();
    match &sys.friction {
        FrictionMatrix::Constant(k) => {
            let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || k[(i, j)] == 0.0));
            for i in 0..n {
                for j in i + 1..n {
                    for block in [CouplingBlock::Potential, CouplingBlock::Kinetic] {
                        let hess = |a: usize, b: usize| match block {
                            CouplingBlock::Potential => sys.potential_hessian(a, b),
                            CouplingBlock::Kinetic => sys.kinetic_hessian(a, b),
                        };
                        // K·H − H·Kᵀ for the potential, H·K − Kᵀ·H for the kinetic block
                        let terms: Vec<Expr> = (0..n)
                            .flat_map(|m| {
                                let (left, right) = match block {
                                    CouplingBlock::Potential => (
                                        hess(m, j).mul(&Expr::constant(k[(i, m)])),
                                        hess(i, m).mul(&Expr::constant(k[(j, m)])),
                                    ),
                                    CouplingBlock::Kinetic => (
                                        hess(i, m).mul(&Expr::constant(k[(m, j)])),
                                        hess(m, j).mul(&Expr::constant(k[(m, i)])),
                                    ),
                                };
                                [left, right.neg()]
                            })
                            .collect();
                        let commutator = Expr::sum(&terms);
                        if vanishes(&commutator, dim) {
                            continue;
                        }
                        let coupling = hess(i, j);
                        let predicted_term = if diagonal {
                            format!(
                                "(exp({}*(t-t0)) - exp({}*(t-t0)))*({})",
                                k[(i, i)],
                                k[(j, j)],
                                coupling.display(chart)
                            )
                        } else {
                            format!(
                                "entry ({},{}) of G(t)H - H G(t)^T, where KH - HK^T has entry {}",
                                i + 1,
                                j + 1,
                                commutator.display(chart)
                            )
                        };
                        issues.push(ApplicabilityIssue {
                            block,
                            pair: (i + 1, j + 1),
                            predicted_term,
                        });
                    }
                }
            }
        }
        FrictionMatrix::Diagonal(k) => {
            for i in 0..n {
                for j in i + 1..n {
                    if vanishes(&k[i].sub(&k[j]), dim) {
                        continue;
                    }
                    for block in [CouplingBlock::Potential, CouplingBlock::Kinetic] {
                        let coupling = match block {
                            CouplingBlock::Potential => sys.potential_hessian(i, j),
                            CouplingBlock::Kinetic => sys.kinetic_hessian(i, j),
                        };
                        if vanishes(&coupling, dim) {
                            continue;
                        }
                        issues.push(ApplicabilityIssue {
                            block,
                            pair: (i + 1, j + 1),
                            predicted_term: format!(
                                "(exp(int {}) - exp(int {}))*({})",
                                k[i].display(chart),
                                k[j].display(chart),
                                coupling.display(chart)
                            ),
                        });
                    }
                }
            }
        }
    }
    if issues.is_empty() {
        Applicability::Ok
    } else {
        Applicability::Warning(issues)
    }
}

/// How [`analytic_metric`] treats a failed applicability check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApplicabilityPolicy {
    /// Refuse with [`Error::NotApplicable`].
    #[default]
    Require,
    /// Build the metric anyway; the caller reports the warning.
    Acknowledge,
}

/// The block metric as a function of `t`, with `G(t₀) = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionMetric {
    n: usize,
    t0: f64,
    friction: FrictionMatrix,
}

impl FrictionMetric {
    pub fn new(friction: FrictionMatrix, t0: f64) -> Result<Self> {
        friction.validate()?;
        Ok(Self {
            n: friction.n(),
            t0,
            friction,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn friction(&self) -> &FrictionMatrix {
        &self.friction
    }

    /// `G(t)`.
    pub fn gain(&self, t: f64) -> Result<DMatrix<f64>> {
        match &self.friction {
            FrictionMatrix::Constant(k) => Ok(expm(&(k * (t - self.t0)))),
            FrictionMatrix::Diagonal(k) => {
                let values = k
                    .iter()
                    .map(|e| FrictionMatrix::entry_integral(e, self.t0, t).map(f64::exp))
                    .collect::<Result<Vec<_>>>()?;
                Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(values)))
            }
        }
    }

    /// `[[0, G], [−Gᵀ, 0]]`.
    pub fn block(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(assemble(&self.gain(t)?))
    }

    /// `∂ω/∂t`, from `dG/dt = G K`.
    pub fn block_rate(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(assemble(&(self.gain(t)? * self.friction.at(t)?)))
    }
}

fn assemble(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    w.view_mut((0, n), (n, n)).copy_from(g);
    w.view_mut((n, 0), (n, n)).copy_from(&(-g.transpose()));
    w
}

/// The invariant block metric for `sys`, normalized to the canonical metric
/// at `t0`.
pub fn analytic_metric(
    sys: &FrictionSystem,
    t0: f64,
    policy: ApplicabilityPolicy,
) -> Result<MetricField> {
    if policy == ApplicabilityPolicy::Require {
        let check = applicability_check(sys);
        if !check.is_ok() {
            return Err(Error::NotApplicable(check.messages().join("; ")));
        }
    }
    Ok(MetricField::FrictionAnalytic(FrictionMetric::new(
        sys.friction.clone(),
        t0,
    )?))
}

/// `√g(t) = exp ∫_{t0}^{t} tr K(τ) dτ`.
pub fn determinant_factor(sys: &FrictionSystem, t0: f64, t: f64) -> Result<f64> {
    let exponent = match &sys.friction {
        FrictionMatrix::Constant(k) => k.trace() * (t - t0),
        FrictionMatrix::Diagonal(k) => k
            .iter()
            .map(|e| FrictionMatrix::entry_integral(e, t0, t))
            .sum::<Result<f64>>()?,
    };
    Ok(exponent.exp())
}
