//! Evolving a metric into an integral of motion.
//!
//! A metric is invariant along `ẋ = X` when `∂_t ω = Ĵ ω` with
//! `(Ĵ ω)_kl = ∂_k(ω_lm X^m) − ∂_l(ω_km X^m)`. Three routes solve this:
//! the exponential series `ω(t) = exp(t Ĵ) ω₀`, Strang splitting of `Ĵ` along
//! `X = X₁ + X₂`, and transport `ω(x, t) = Mᵀ ω₀(x₀) M` along the flow.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{
    integrate_flow, integrate_with_schedule, FieldPart, IntegratorOptions, VectorFieldSpec,
};
use crate::exprlang::Expr;
use crate::helmholtz::{residual_exprs, residual_from_parts, residual_numeric};
use crate::linalg::{expm, max_abs, skew_defect, skew_to_vec, upper_pairs, vec_to_skew};
use crate::phasespace::{ExprMatrix, MetricField, MetricSource, PhasePoint};
use crate::{Error, Result};

pub const DEFAULT_ORDER: usize = 20;
pub const STOP_TOLERANCE: f64 = 1e-14;
pub const NODE_CAP: usize = 1_000_000;

/// `(Ĵ ω)_kl = ½[∂_k(X^s ω_ls) − ∂_l(X^s ω_ks) − ∂_k(X^m ω_ml) + ∂_l(X^m ω_mk)]`,
/// restricted to one part of a split field.
pub fn apply_j(v: &VectorFieldSpec, w: &ExprMatrix, part: FieldPart) -> Result<ExprMatrix> {
    let v = v.part(part)?;
    check_dim(v, w.dim())?;
    let dim = w.dim();
    let contract = |row_first: bool| -> Vec<Expr> {
        (0..dim)
            .map(|l| {
                let terms: Vec<Expr> = (0..dim)
                    .map(|s| {
                        let entry = if row_first { w.get(l, s) } else { w.get(s, l) };
                        v.component(s).mul(entry)
                    })
                    .collect();
                Expr::sum(&terms)
            })
            .collect()
    };
    // θ_l = X^s ω_ls, φ_l = X^m ω_ml
    let theta = contract(true);
    let phi = contract(false);
    let half = Expr::constant(0.5);
    Ok(ExprMatrix::from_fn(dim, |k, l| {
        if k == l {
            return Expr::zero();
        }
        let a = theta[l].d(k).sub(&theta[k].d(l));
        let b = phi[l].d(k).sub(&phi[k].d(l));
        half.mul(&a.sub(&b))
    }))
}

/// `∂_k(ω_lm X^m) − ∂_l(ω_km X^m)`, the form that equals [`apply_j`] on
/// skew inputs.
pub fn apply_j_unsymmetrized(
    v: &VectorFieldSpec,
    w: &ExprMatrix,
    part: FieldPart,
) -> Result<ExprMatrix> {
    let v = v.part(part)?;
    check_dim(v, w.dim())?;
    let dim = w.dim();
    let full = residual_exprs(v, w);
    // residual_exprs builds from the upper triangle; rebuild the lower one
    // independently so that non-skew inputs are reported faithfully
    let contracted: Vec<Expr> = (0..dim)
        .map(|l| {
            let terms: Vec<Expr> = (0..dim).map(|m| w.get(l, m).mul(v.component(m))).collect();
            Expr::sum(&terms)
        })
        .collect();
    Ok(ExprMatrix::from_fn(dim, |k, l| {
        if k < l {
            full.get(k, l).clone()
        } else {
            contracted[l].d(k).sub(&contracted[k].d(l))
        }
    }))
}

fn check_dim(v: &VectorFieldSpec, dim: usize) -> Result<()> {
    if v.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: v.dim(),
            got: dim,
        });
    }
    Ok(())
}

/// `Ĵ^order ω` with its input kept for reference.
#[derive(Debug, Clone)]
pub struct MetricOperatorApplication {
    pub input: ExprMatrix,
    pub output: ExprMatrix,
    pub order: usize,
    pub part: FieldPart,
}

impl MetricOperatorApplication {
    pub fn new(
        v: &VectorFieldSpec,
        input: ExprMatrix,
        part: FieldPart,
        order: usize,
    ) -> Result<Self> {
        let mut output = input.clone();
        for _ in 0..order {
            output = apply_j_upper(v.part(part)?, &output)?;
        }
        Ok(Self {
            input,
            output,
            order,
            part,
        })
    }
}

/// `Ĵ ω` for skew `ω`, computed on the upper triangle only.
fn apply_j_upper(v: &VectorFieldSpec, w: &ExprMatrix) -> Result<ExprMatrix> {
    check_dim(v, w.dim())?;
    let dim = w.dim();
    let theta: Vec<Expr> = (0..dim)
        .map(|l| {
            let terms: Vec<Expr> = (0..dim).map(|s| v.component(s).mul(w.get(l, s))).collect();
            Expr::sum(&terms)
        })
        .collect();
    let out = ExprMatrix::skew_from_upper(dim, |k, l| {
        theta[l].d(k).sub(&theta[k].d(l)).expand_polynomial()
    });
    let nodes = out.node_count();
    if nodes > NODE_CAP {
        return Err(Error::ExpressionTooLarge {
            nodes,
            cap: NODE_CAP,
        });
    }
    Ok(out)
}

/// Matrix of `Ĵ` on the upper-triangle coordinates of constant skew
/// matrices, valid when `X` is affine.
pub fn linear_generator(v: &VectorFieldSpec) -> Result<DMatrix<f64>> {
    if !v.is_linear() {
        return Err(Error::Unsupported(
            "the exact series path needs an affine vector field".into(),
        ));
    }
    let dim = v.dim();
    let origin = vec![0.0; dim];
    let jac = v.jacobian_at(&origin)?;
    let field = DVector::zeros(dim);
    let grad = vec![DMatrix::zeros(dim, dim); dim];
    let pairs = upper_pairs(dim);
    let mut l = DMatrix::zeros(pairs.len(), pairs.len());
    for (j, _) in pairs.iter().enumerate() {
        let mut e = DVector::zeros(pairs.len());
        e[j] = 1.0;
        let basis = vec_to_skew(&e, dim);
        let image = residual_from_parts(&basis, &grad, &field, &jac);
        l.set_column(j, &skew_to_vec(&image));
    }
    Ok(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeriesMode {
    /// Exact path for affine fields, truncated series otherwise.
    #[default]
    Auto,
    Linear,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    pub order: usize,
    pub mode: SeriesMode,
    /// Summation stops once two consecutive terms fall below this norm.
    pub stop_tolerance: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            mode: SeriesMode::Auto,
            stop_tolerance: STOP_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone)]
enum SeriesKind {
    Linear {
        generator: DMatrix<f64>,
    },
    /// `Ĵ^n ω₀` for `n = 0..`; shorter than `order + 1` when a power
    /// vanished identically.
    Generic {
        terms: Vec<ExprMatrix>,
        complete: bool,
        /// `∂_k` of every term, indexed `[k][n]`, built on first use.
        gradients: OnceLock<Vec<Vec<ExprMatrix>>>,
    },
}

/// Result of one series evaluation.
#[derive(Debug, Clone)]
pub struct SeriesEvaluation {
    pub matrix: DMatrix<f64>,
    /// True when no truncation happened.
    pub exact: bool,
    pub terms_used: usize,
    pub last_term_norm: f64,
    pub warning: Option<String>,
}

/// `ω(x, t) = exp(t Ĵ) ω₀` for a constant `ω₀`.
#[derive(Debug, Clone)]
pub struct SeriesPropagator {
    dim: usize,
    w0: DMatrix<f64>,
    options: SeriesOptions,
    kind: Arc<SeriesKind>,
}

impl SeriesPropagator {
    pub fn new(
        v: &VectorFieldSpec,
        part: FieldPart,
        w0: &DMatrix<f64>,
        options: SeriesOptions,
    ) -> Result<Self> {
        let v = v.part(part)?;
        check_dim(v, w0.nrows())?;
        let defect = skew_defect(w0);
        if defect >= 1e-12 {
            return Err(Error::NotSkew(format!(
                "initial metric: max |ω_kl + ω_lk| = {defect:e}"
            )));
        }
        if options.order == 0 {
            return Err(Error::InvalidSystem(
                "series order must be at least 1".into(),
            ));
        }
        let linear = match options.mode {
            SeriesMode::Auto => v.is_linear(),
            SeriesMode::Linear => true,
            SeriesMode::Generic => false,
        };
        let kind = if linear {
            SeriesKind::Linear {
                generator: linear_generator(v)?,
            }
        } else {
            let mut terms = vec![ExprMatrix::from_constant(w0)];
            let mut complete = false;
            for _ in 0..options.order {
                let next = apply_j_upper(v, terms.last().expect("nonempty"))?;
                if next.is_zero() {
                    complete = true;
                    break;
                }
                terms.push(next);
            }
            SeriesKind::Generic {
                terms,
                complete,
                gradients: OnceLock::new(),
            }
        };
        Ok(Self {
            dim: w0.nrows(),
            w0: w0.clone(),
            options,
            kind: Arc::new(kind),
        })
    }

    pub fn is_exact_path(&self) -> bool {
        matches!(*self.kind, SeriesKind::Linear { .. })
    }

    /// The generator on skew coordinates, for the exact path.
    pub fn generator(&self) -> Option<&DMatrix<f64>> {
        match &*self.kind {
            SeriesKind::Linear { generator } => Some(generator),
            SeriesKind::Generic { .. } => None,
        }
    }

    pub fn propagate(&self, x: &[f64], t: f64) -> Result<SeriesEvaluation> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        match &*self.kind {
            SeriesKind::Linear { generator } => {
                let v = expm(&(generator * t)) * skew_to_vec(&self.w0);
                Ok(SeriesEvaluation {
                    matrix: vec_to_skew(&v, self.dim),
                    exact: true,
                    terms_used: 0,
                    last_term_norm: 0.0,
                    warning: None,
                })
            }
            SeriesKind::Generic {
                terms, complete, ..
            } => {
                let mut sum = DMatrix::zeros(self.dim, self.dim);
                let mut coef = 1.0;
                let mut last_norm = 0.0;
                let mut previous_norm = 0.0;
                let mut small_run = 0;
                let mut used = 0;
                for (n, term) in terms.iter().enumerate() {
                    if n > 0 {
                        coef *= t / n as f64;
                    }
                    let value = term.eval(x, 0.0)? * coef;
                    last_norm = max_abs(&value);
                    previous_norm = max_abs(&sum);
                    sum += value;
                    used = n + 1;
                    if n > 0 && last_norm < self.options.stop_tolerance {
                        small_run += 1;
                        if small_run == 2 {
                            break;
                        }
                    } else {
                        small_run = 0;
                    }
                }
                let truncated = used == terms.len() && !complete;
                let warning = (truncated && last_norm > previous_norm).then(|| {
                    format!(
                        "series may diverge: last term norm {last_norm:e} exceeds the partial sum \
                         {previous_norm:e} at order {}",
                        used - 1
                    )
                });
                Ok(SeriesEvaluation {
                    matrix: sum,
                    exact: *complete && used == terms.len(),
                    terms_used: used,
                    last_term_norm: last_norm,
                    warning,
                })
            }
        }
    }
}

impl MetricSource for SeriesPropagator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &PhasePoint) -> Result<DMatrix<f64>> {
        Ok(self.propagate(&x.coords, x.time)?.matrix)
    }

    fn gradient(&self, x: &PhasePoint) -> Result<Vec<DMatrix<f64>>> {
        x.check_dim(self.dim)?;
        match &*self.kind {
            SeriesKind::Linear { .. } => Ok(vec![DMatrix::zeros(self.dim, self.dim); self.dim]),
            SeriesKind::Generic {
                terms, gradients, ..
            } => {
                let gradients = gradients.get_or_init(|| {
                    (0..self.dim)
                        .map(|k| {
                            terms
                                .iter()
                                .map(|term| term.map(|e| e.d(k).expand_polynomial()))
                                .collect()
                        })
                        .collect()
                });
                gradients
                    .iter()
                    .map(|by_term| {
                        let mut sum = DMatrix::zeros(self.dim, self.dim);
                        let mut coef = 1.0;
                        for (n, term) in by_term.iter().enumerate().skip(1) {
                            coef *= x.time / n as f64;
                            sum += term.eval(&x.coords, 0.0)? * coef;
                        }
                        Ok(sum)
                    })
                    .collect()
            }
        }
    }

    fn time_derivative(&self, x: &PhasePoint) -> Result<DMatrix<f64>> {
        x.check_dim(self.dim)?;
        match &*self.kind {
            SeriesKind::Linear { generator } => {
                let v = generator * expm(&(generator * x.time)) * skew_to_vec(&self.w0);
                Ok(vec_to_skew(&v, self.dim))
            }
            SeriesKind::Generic { terms, .. } => {
                // d/dt Σ tⁿ/n! Tₙ = Σ tⁿ⁻¹/(n−1)! Tₙ
                let mut sum = DMatrix::zeros(self.dim, self.dim);
                let mut coef = 1.0;
                for (n, term) in terms.iter().enumerate().skip(1) {
                    if n > 1 {
                        coef *= x.time / (n - 1) as f64;
                    }
                    sum += term.eval(&x.coords, 0.0)? * coef;
                }
                Ok(sum)
            }
        }
    }
}

/// `Σ_{n ≤ order} tⁿ/n! Ĵⁿ ω₀` at `x`, exact for affine fields.
pub fn series_propagate(
    v: &VectorFieldSpec,
    w0: &DMatrix<f64>,
    t: f64,
    order: usize,
    x: &PhasePoint,
) -> Result<DMatrix<f64>> {
    let options = SeriesOptions {
        order,
        ..SeriesOptions::default()
    };
    let p = SeriesPropagator::new(v, FieldPart::All, w0, options)?;
    Ok(p.propagate(&x.coords, t)?.matrix)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplittingConfig {
    pub total_time: f64,
    pub steps: usize,
}

impl SplittingConfig {
    pub fn new(total_time: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidSystem(
                "splitting needs at least one step".into(),
            ));
        }
        Ok(Self { total_time, steps })
    }

    pub fn dt(&self) -> f64 {
        self.total_time / self.steps as f64
    }
}

#[derive(Debug, Clone)]
pub struct SplitEvaluation {
    pub matrix: DMatrix<f64>,
    pub steps: usize,
    /// True when every sub-exponential was summed exactly.
    pub exact_substeps: bool,
    /// Largest last-term norm over all truncated sub-exponentials.
    pub max_last_term_norm: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
enum SplitKind {
    Linear {
        hamiltonian: DMatrix<f64>,
        friction: DMatrix<f64>,
    },
    Generic {
        hamiltonian: VectorFieldSpec,
        friction: VectorFieldSpec,
    },
    /// Negated parts. On closed forms `Ĵ` is minus the Lie derivative, so a
    /// fully summed sub-exponential is transport along the part's backward
    /// flow.
    Transport {
        hamiltonian: VectorFieldSpec,
        friction: VectorFieldSpec,
    },
}

/// Strang splitting `[e^{½Δt Ĵ₂} e^{Δt Ĵ₁} e^{½Δt Ĵ₂}]^N ω₀` with `Δt = t/N`,
/// `Ĵ₁` from the Hamiltonian part and `Ĵ₂` from the friction part.
///
/// Sub-exponentials are matrix exponentials when both parts are affine. For
/// other fields [`SeriesMode::Generic`] sums them as symbolic series, and
/// [`SeriesMode::Auto`] applies them as transport along the sub-flows, with
/// adjacent friction half-steps merged.
#[derive(Debug, Clone)]
pub struct SplitPropagator {
    dim: usize,
    w0: DMatrix<f64>,
    steps: usize,
    options: SeriesOptions,
    integrator: IntegratorOptions,
    kind: Arc<SplitKind>,
}

impl SplitPropagator {
    pub fn new(
        v: &VectorFieldSpec,
        w0: &DMatrix<f64>,
        steps: usize,
        options: SeriesOptions,
    ) -> Result<Self> {
        check_dim(v, w0.nrows())?;
        if steps == 0 {
            return Err(Error::InvalidSystem(
                "splitting needs at least one step".into(),
            ));
        }
        let hamiltonian = v.part(FieldPart::Hamiltonian)?;
        let friction = v.part(FieldPart::Friction)?;
        let affine = hamiltonian.is_linear() && friction.is_linear();
        let kind = match options.mode {
            SeriesMode::Linear => true,
            SeriesMode::Auto => affine,
            SeriesMode::Generic => false,
        }
        .then(|| -> Result<SplitKind> {
            Ok(SplitKind::Linear {
                hamiltonian: linear_generator(hamiltonian)?,
                friction: linear_generator(friction)?,
            })
        })
        .transpose()?
        .unwrap_or_else(|| match options.mode {
            SeriesMode::Generic => SplitKind::Generic {
                hamiltonian: hamiltonian.clone(),
                friction: friction.clone(),
            },
            _ => SplitKind::Transport {
                hamiltonian: hamiltonian.negated(),
                friction: friction.negated(),
            },
        });
        Ok(Self {
            dim: w0.nrows(),
            w0: w0.clone(),
            steps,
            options,
            integrator: IntegratorOptions::default(),
            kind: Arc::new(kind),
        })
    }

    /// Integrator settings for the transport path.
    pub fn with_integrator(mut self, integrator: IntegratorOptions) -> Self {
        self.integrator = integrator;
        self
    }

    /// Composes the sub-flow transports at `x`, either adaptively or by
    /// replaying `replay`; returns the metric and the step schedules used.
    fn transport(
        &self,
        x: &[f64],
        t: f64,
        replay: Option<&[Vec<f64>]>,
    ) -> Result<(DMatrix<f64>, Vec<Vec<f64>>)> {
        let SplitKind::Transport {
            hamiltonian,
            friction,
        } = &*self.kind
        else {
            return Err(Error::Unsupported("not a transport split".into()));
        };
        let dt = t / self.steps as f64;
        // F/2, H, F, H, ..., H, F/2
        let mut sequence = vec![(friction, 0.5 * dt)];
        for i in 0..self.steps {
            sequence.push((hamiltonian, dt));
            sequence.push((friction, if i + 1 == self.steps { 0.5 * dt } else { dt }));
        }
        let mut y = PhasePoint::new(x.to_vec(), 0.0);
        let mut m = DMatrix::identity(self.dim, self.dim);
        let mut schedules = Vec::with_capacity(sequence.len());
        for (i, (field, tau)) in sequence.into_iter().enumerate() {
            let seg = match replay {
                Some(s) => integrate_with_schedule(field, &y, &s[i])?,
                None => integrate_flow(field, &y, tau, &self.integrator)?,
            };
            m = &seg.tangent * m;
            y = PhasePoint::new(seg.end.coords, 0.0);
            schedules.push(seg.schedule);
        }
        let w = m.transpose() * &self.w0 * &m;
        Ok(((&w - w.transpose()) * 0.5, schedules))
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn propagate(&self, x: &[f64], t: f64) -> Result<SplitEvaluation> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let dt = t / self.steps as f64;
        match &*self.kind {
            SplitKind::Linear {
                hamiltonian,
                friction,
            } => {
                let half = expm(&(friction * (0.5 * dt)));
                let full = expm(&(hamiltonian * dt));
                let step = &half * full * &half;
                let mut v = skew_to_vec(&self.w0);
                for _ in 0..self.steps {
                    v = &step * v;
                }
                Ok(SplitEvaluation {
                    matrix: vec_to_skew(&v, self.dim),
                    steps: self.steps,
                    exact_substeps: true,
                    max_last_term_norm: 0.0,
                    warnings: Vec::new(),
                })
            }
            SplitKind::Generic {
                hamiltonian,
                friction,
            } => {
                let mut w = ExprMatrix::from_constant(&self.w0);
                let mut worst = 0.0f64;
                let mut exact = true;
                for _ in 0..self.steps {
                    for (field, tau) in [
                        (friction, 0.5 * dt),
                        (hamiltonian, dt),
                        (friction, 0.5 * dt),
                    ] {
                        let (next, last, complete) = self.sub_exponential(field, &w, tau, x)?;
                        worst = worst.max(last);
                        exact &= complete;
                        w = next;
                    }
                }
                let mut warnings = Vec::new();
                if !exact && worst > 1e-8 {
                    warnings.push(format!(
                        "sub-step series truncated with last term norm {worst:e}"
                    ));
                }
                Ok(SplitEvaluation {
                    matrix: w.eval(x, 0.0)?,
                    steps: self.steps,
                    exact_substeps: exact,
                    max_last_term_norm: worst,
                    warnings,
                })
            }
            SplitKind::Transport { .. } => Ok(SplitEvaluation {
                matrix: self.transport(x, t, None)?.0,
                steps: self.steps,
                exact_substeps: true,
                max_last_term_norm: 0.0,
                warnings: Vec::new(),
            }),
        }
    }

    /// `Σ τⁿ/n! Ĵⁿ w`, symbolic; also returns the last term's norm at `x`.
    fn sub_exponential(
        &self,
        v: &VectorFieldSpec,
        w: &ExprMatrix,
        tau: f64,
        x: &[f64],
    ) -> Result<(ExprMatrix, f64, bool)> {
        let mut sum = w.clone();
        let mut term = w.clone();
        let mut coef = 1.0;
        let mut last = 0.0;
        for n in 1..=self.options.order {
            term = apply_j_upper(v, &term)?;
            if term.is_zero() {
                return Ok((sum, 0.0, true));
            }
            coef *= tau / n as f64;
            let scaled = term.scale(coef);
            last = max_abs(&scaled.eval(x, 0.0)?);
            sum = sum.add(&scaled).map(Expr::expand_polynomial);
            let nodes = sum.node_count();
            if nodes > NODE_CAP {
                return Err(Error::ExpressionTooLarge {
                    nodes,
                    cap: NODE_CAP,
                });
            }
            if last < self.options.stop_tolerance {
                break;
            }
        }
        Ok((sum, last, false))
    }
}

impl MetricSource for SplitPropagator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &PhasePoint) -> Result<DMatrix<f64>> {
        Ok(self.propagate(&x.coords, x.time)?.matrix)
    }

    fn gradient(&self, x: &PhasePoint) -> Result<Vec<DMatrix<f64>>> {
        x.check_dim(self.dim)?;
        match &*self.kind {
            SplitKind::Linear { .. } => Ok(vec![DMatrix::zeros(self.dim, self.dim); self.dim]),
            SplitKind::Generic { .. } => (0..self.dim)
                .map(|k| {
                    let h = crate::phasespace::fd_step(x.coords[k]);
                    let plus = self.eval(&x.shifted(k, h))?;
                    let minus = self.eval(&x.shifted(k, -h))?;
                    Ok((plus - minus) / (2.0 * h))
                })
                .collect(),
            // replaying one schedule keeps the difference quotient smooth
            SplitKind::Transport { .. } => {
                let (_, schedules) = self.transport(&x.coords, x.time, None)?;
                (0..self.dim)
                    .map(|k| {
                        let h = crate::phasespace::fd_step(x.coords[k]);
                        let shifted = |d: f64| {
                            let mut c = x.coords.clone();
                            c[k] += d;
                            self.transport(&c, x.time, Some(&schedules)).map(|r| r.0)
                        };
                        Ok((shifted(h)? - shifted(-h)?) / (2.0 * h))
                    })
                    .collect()
            }
        }
    }

    fn time_derivative(&self, x: &PhasePoint) -> Result<DMatrix<f64>> {
        let h = crate::phasespace::fd_step(x.time);
        let (upper, lower) = (x.time + h, x.time - h);
        match &*self.kind {
            // every sub-step is proportional to t, so one schedule rescales
            SplitKind::Transport { .. } if upper != 0.0 => {
                let (plus, schedules) = self.transport(&x.coords, upper, None)?;
                let scaled: Vec<Vec<f64>> = schedules
                    .iter()
                    .map(|s| s.iter().map(|step| step * lower / upper).collect())
                    .collect();
                let minus = self.transport(&x.coords, lower, Some(&scaled))?.0;
                Ok((plus - minus) / (2.0 * h))
            }
            _ => {
                let plus = self.eval(&x.with_time(upper))?;
                let minus = self.eval(&x.with_time(lower))?;
                Ok((plus - minus) / (2.0 * h))
            }
        }
    }
}

/// Strang-split propagation of `w0` over `cfg.total_time` at `x`.
pub fn split_propagate(
    v: &VectorFieldSpec,
    w0: &DMatrix<f64>,
    cfg: &SplittingConfig,
    x: &PhasePoint,
) -> Result<SplitEvaluation> {
    let p = SplitPropagator::new(v, w0, cfg.steps, SeriesOptions::default())?;
    p.propagate(&x.coords, cfg.total_time)
}

/// `Mᵀ ω₀(x₀) M` where `x₀` flows onto `x` in time `t` and `M = ∂x₀/∂x`.
pub fn pullback_metric(
    v: &VectorFieldSpec,
    m0: &MetricField,
    x: &PhasePoint,
    t: f64,
    options: &IntegratorOptions,
) -> Result<DMatrix<f64>> {
    let transported = MetricField::transported(m0.clone(), v.clone(), *options)?;
    transported.eval(&x.with_time(t))
}

/// `∂_t ω_kl − ∂_k(ω_lm X^m) + ∂_l(ω_km X^m)`; zero where `ω` is invariant.
pub fn invariance_residual(
    v: &VectorFieldSpec,
    m: &dyn MetricSource,
    x: &PhasePoint,
) -> Result<DMatrix<f64>> {
    let rate = m.time_derivative(x)?;
    Ok(rate - residual_numeric(v, m, x)?)
}
